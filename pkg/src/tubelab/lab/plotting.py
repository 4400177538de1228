"""Log-log rate figures for study reports (rendered off-screen to PNG)."""

from __future__ import annotations

import io

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from ..io import atomic_write

__all__ = ["rate_figure", "render_figures"]

SERIES = (
    ("resolvent_gap", "resolvent gap", "o-"),
    ("band_gap", "ground-band gap", "s-"),
    ("eig_gap_1", "first eigenvalue gap", "^-"),
    ("mode_gap", "direct vs mollified", "d-"),
    ("bracket", "rate bracket", "k--"),
    ("sigma_k", "curvature modulus", "x:"),
)


def _series(rows, key):
    pts = [(r["eps"], r[key]) for r in rows if r.get(key) is not None and r[key] > 0]
    return np.array(pts).T if pts else None


def rate_figure(report) -> Figure:
    """One log-log panel of every positive per-eps quantity, slopes in the legend."""
    rows = report.ok_rows()
    fig = Figure(figsize=(6.0, 4.5), layout="constrained")
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    keys = [(k, lab, st) for k, lab, st in SERIES]
    # schedule-resolved moduli of bracket-only studies
    extra = sorted({k for r in rows for k in r if k.startswith("sigma_k[")})
    keys += [(k, k, ".-") for k in extra]
    for key, label, style in keys:
        xy = _series(rows, key)
        if xy is None:
            continue
        fit = report.fits.get(key)
        if fit is not None:
            label = f"{label} (slope {fit.slope:.2f})"
        ax.loglog(xy[0], xy[1], style, label=label, ms=4)
    ax.set_xlabel("eps")
    ax.set_ylabel("value")
    ax.set_title(report.config.name)
    ax.grid(True, which="both", alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    return fig


def render_figures(report, out_dir, dpi: int = 120) -> list:
    buf = io.BytesIO()
    rate_figure(report).savefig(buf, format="png", dpi=dpi)
    return [atomic_write(f"{out_dir}/{report.config.name}_rates.png", buf.getvalue())]
