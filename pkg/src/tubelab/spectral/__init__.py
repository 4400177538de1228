"""Discrete operators on the straightened tube and their spectral comparison."""

from .assemble import GridOperator, TubeGrid, assemble_3d
from .bounds import BoundConstants, GapResult, bound_constants, rate_bracket
from .operators import FlatOperator, assemble_h0, assemble_heff, flatten, renormalize
from .solve import (
    SolverError,
    band_gap,
    lowest_eigs,
    resolvent_difference,
    perp_rayleigh_min,
    resolvent_norm_gap,
)

__all__ = [
    "GridOperator",
    "TubeGrid",
    "assemble_3d",
    "FlatOperator",
    "flatten",
    "renormalize",
    "assemble_heff",
    "assemble_h0",
    "lowest_eigs",
    "resolvent_norm_gap",
    "resolvent_difference",
    "band_gap",
    "perp_rayleigh_min",
    "SolverError",
    "BoundConstants",
    "GapResult",
    "bound_constants",
    "rate_bracket",
]
