"""Scenario catalogue, eps-sweep studies and report output."""

from .presets import presets
from .report import write_report
from .study import RateFit, StudyConfig, StudyReport, fit_rate, grid_sizes, run_study

__all__ = ["presets", "StudyConfig", "StudyReport", "RateFit", "fit_rate", "grid_sizes",
           "run_study", "write_report"]
