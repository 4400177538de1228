"""Steklov (moving box) averages and shift moduli of sampled functions.

Every function is extended by zero outside its grid.  Two interpolation
models are supported:

``linear``
    the piecewise-linear interpolant of the node values;
``constant``
    one value per grid cell, ``values[i]`` on ``[s_i, s_{i+1})``.  The
    last node value is unused.  Meant for step patterns whose jumps sit
    on nodes, where all integrals below are then exact.

All window integrals and shift integrals are evaluated exactly for the
chosen interpolant; no quadrature error enters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .curve import ArcGrid

__all__ = [
    "SampledFunction",
    "MollifierSchedule",
    "steklov",
    "steklov_derivative",
    "shift_modulus",
    "sigma",
    "sup_modulus",
    "eta_subgrid",
    "shipped_schedules",
]

MODES = ("linear", "constant")
DEFAULT_ETA_SAMPLES = 65
MAX_NODE_OFFSETS = 4096


@dataclass(frozen=True)
class SampledFunction:
    grid: ArcGrid
    values: np.ndarray
    mode: str = "linear"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"need one value per node ({self.grid.n}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, fn: Callable, grid: ArcGrid, mode: str = "linear") -> "SampledFunction":
        """Sample ``fn`` at nodes (linear) or cell midpoints (constant)."""
        if mode == "constant":
            pieces = np.asarray(fn(grid.midpoints), dtype=float) * np.ones(grid.n - 1)
            return cls(grid, np.append(pieces, pieces[-1]), mode)
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.n), mode)

    def __eq__(self, other):
        if not isinstance(other, SampledFunction):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.mode == other.mode
            and np.array_equal(self._used(), other._used())
        )

    __hash__ = None

    def _used(self) -> np.ndarray:
        return self.values[:-1] if self.mode == "constant" else self.values

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._used())))

    def _cell_poly(self, x: np.ndarray, ref: np.ndarray) -> np.ndarray:
        """Evaluate at ``x`` the polynomial piece of the cell containing ``ref``.

        Zero when ``ref`` lies outside the support.  Picking the piece by a
        reference point gives one-sided limits at jumps.
        """
        g = self.grid
        s0, h = g.s_min, g.ds
        inside = (ref > g.s_min) & (ref < g.s_max)
        idx = np.clip(np.floor((ref - s0) / h).astype(int), 0, g.n - 2)
        v = self.values
        if self.mode == "constant":
            out = v[idx].copy()
        else:
            out = v[idx] + (x - (s0 + idx * h)) * (v[idx + 1] - v[idx]) / h
        return np.where(inside, out, 0.0)

    def __call__(self, x) -> np.ndarray:
        """Evaluate the zero-extended interpolant.

        At a jump the mean of the two one-sided limits is returned.
        """
        x = np.asarray(x, dtype=float)
        tiny = 1e-12 * max(1.0, self.grid.length)
        left = self._cell_poly(x, x - tiny)
        right = self._cell_poly(x, x + tiny)
        return 0.5 * (left + right)

    def closed(self, x) -> np.ndarray:
        """Evaluate on the closed interval, without the zero extension.

        Points outside are clamped to the ends, and ends take the limit from
        inside.  Interior jumps still give the mean of both sides.
        """
        g = self.grid
        x = np.clip(np.asarray(x, dtype=float), g.s_min, g.s_max)
        tiny = 1e-12 * max(1.0, g.length)
        lo, hi = g.s_min + tiny, g.s_max - tiny
        left = self._cell_poly(x, np.clip(x - tiny, lo, hi))
        right = self._cell_poly(x, np.clip(x + tiny, lo, hi))
        return 0.5 * (left + right)

    def antiderivative(self, x) -> np.ndarray:
        """Integral of the zero-extended interpolant from s_min to ``x``."""
        g = self.grid
        x = np.clip(np.asarray(x, dtype=float), g.s_min, g.s_max)
        h = g.ds
        v = self.values
        if self.mode == "constant":
            cell = v[:-1] * h
        else:
            cell = 0.5 * (v[1:] + v[:-1]) * h
        cum = np.concatenate([[0.0], np.cumsum(cell)])
        idx = np.clip(np.floor((x - g.s_min) / h).astype(int), 0, g.n - 2)
        u = x - (g.s_min + idx * h)
        if self.mode == "constant":
            part = v[idx] * u
        else:
            part = v[idx] * u + 0.5 * (v[idx + 1] - v[idx]) * u**2 / h
        return cum[idx] + part


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not (delta > 0 and np.isfinite(delta)):
        raise ValueError(f"delta must be positive and finite, got {delta}")
    return delta


def steklov(f: SampledFunction, delta: float, at=None):
    """Moving average of ``f`` over windows of width ``delta``.

    Returns a linear-mode SampledFunction on the grid of ``f`` or, when
    ``at`` is given, the raw values at those points.  The average of the
    zero-extended interpolant never exceeds its sup norm.
    """
    delta = _check_delta(delta)
    s = f.grid.nodes if at is None else np.asarray(at, dtype=float)
    vals = (f.antiderivative(s + delta / 2) - f.antiderivative(s - delta / 2)) / delta
    return SampledFunction(f.grid, vals, "linear") if at is None else vals


def steklov_derivative(f: SampledFunction, delta: float, at=None):
    """Exact derivative of the moving average: the window-edge difference quotient."""
    delta = _check_delta(delta)
    s = f.grid.nodes if at is None else np.asarray(at, dtype=float)
    vals = (f(s + delta / 2) - f(s - delta / 2)) / delta
    return SampledFunction(f.grid, vals, "linear") if at is None else vals


def eta_subgrid(f: SampledFunction, delta: float, samples: int = DEFAULT_ETA_SAMPLES) -> np.ndarray:
    """Shifts over which the sup in the shift modulus is taken.

    ``samples`` uniform points on [-delta/2, delta/2] (0 and both ends
    included when ``samples`` is odd) plus every multiple of the grid step
    in that range, so that for node-aligned steps the sup is exact.  Node
    offsets are skipped when there would be more than MAX_NODE_OFFSETS.
    """
    if samples < 3:
        raise ValueError("need at least 3 shift samples")
    half = delta / 2
    etas = [np.linspace(-half, half, samples), [0.0]]
    m = int(np.floor(half / f.grid.ds + 1e-9))
    if 0 < 2 * m + 1 <= MAX_NODE_OFFSETS:
        etas.append(np.arange(-m, m + 1) * f.grid.ds)
    return np.unique(np.concatenate(etas))


def _shift_defect_cumulative(f: SampledFunction, eta: float, cuts: np.ndarray) -> np.ndarray:
    """Exact integrals of |f - f(. + eta)|^2 between consecutive ``cuts``."""
    g = f.grid
    nodes = g.nodes
    pts = np.concatenate([cuts, nodes, nodes - eta])
    pts = np.unique(pts[(pts >= cuts[0]) & (pts <= cuts[-1])])
    a, b = pts[:-1], pts[1:]
    mid = 0.5 * (a + b)
    p = f._cell_poly(a, mid) - f._cell_poly(a + eta, mid + eta)
    q = f._cell_poly(b, mid) - f._cell_poly(b + eta, mid + eta)
    seg = (b - a) * (p * p + p * q + q * q) / 3.0
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    at_cut = np.searchsorted(pts, cuts)
    return np.diff(cum[at_cut])


def shift_modulus(
    f: SampledFunction,
    delta: float,
    partition,
    eta_samples: int = DEFAULT_ETA_SAMPLES,
    etas=None,
) -> np.ndarray:
    """L2 shift modulus of ``f`` on each cell of ``partition``.

    For the cell (p_j, p_{j+1}) returns
    sqrt(max over shifts |eta| <= delta/2 of int |f(s) - f(s+eta)|^2 ds),
    the max taken over :func:`eta_subgrid` unless ``etas`` is given.
    """
    delta = _check_delta(delta)
    cuts = np.asarray(partition, dtype=float)
    if cuts.ndim != 1 or cuts.size < 2:
        raise ValueError("partition needs at least two points")
    if np.any(np.diff(cuts) <= 0):
        raise ValueError("partition must be strictly increasing")
    if etas is None:
        etas = eta_subgrid(f, delta, eta_samples)
    best = np.zeros(cuts.size - 1)
    for eta in np.asarray(etas, dtype=float):
        best = np.maximum(best, _shift_defect_cumulative(f, eta, cuts))
    return np.sqrt(best)


def unit_cells(
    f: SampledFunction, delta: float, cell_length: float = 1.0, origin: float = 0.0,
    interior: bool = False,
) -> np.ndarray:
    """Cell boundaries origin + n*cell_length covering the relevant range.

    With ``interior=False`` the cells cover every point where
    f - f(. + eta) can be nonzero, i.e. the support widened by delta/2.
    With ``interior=True`` only cells whose shifts by up to delta/2 stay
    inside [s_min, s_max] are kept.
    """
    g = f.grid
    if interior:
        lo, hi = g.s_min + delta / 2, g.s_max - delta / 2
        n0 = int(np.ceil((lo - origin) / cell_length - 1e-9))
        n1 = int(np.floor((hi - origin) / cell_length + 1e-9))
    else:
        lo, hi = g.s_min - delta / 2, g.s_max + delta / 2
        n0 = int(np.floor((lo - origin) / cell_length + 1e-9))
        n1 = int(np.ceil((hi - origin) / cell_length - 1e-9))
    if n1 <= n0:
        raise ValueError("no complete cell fits the requested range")
    return origin + cell_length * np.arange(n0, n1 + 1)


def sigma(
    f: SampledFunction,
    delta: float,
    cell_length: float = 1.0,
    origin: float = 0.0,
    interior: bool = False,
    eta_samples: int = DEFAULT_ETA_SAMPLES,
) -> float:
    """Sup over cells of the shift modulus (cells of length ``cell_length``)."""
    delta = _check_delta(delta)
    cuts = unit_cells(f, delta, cell_length, origin, interior)
    return float(np.max(shift_modulus(f, delta, cuts, eta_samples)))


def sup_modulus(f: SampledFunction, delta: float) -> float:
    """Largest |f(x) - f(y)| over node pairs with |x - y| <= delta, zero extension included."""
    delta = _check_delta(delta)
    w = int(np.floor(delta / f.grid.ds + 1e-9))
    v = np.concatenate([np.zeros(w), f.values, np.zeros(w)]) if w else f.values
    size = w + 1
    hi = maximum_filter1d(v, size, mode="nearest")
    lo = minimum_filter1d(v, size, mode="nearest")
    return float(np.max(hi - lo))


@dataclass(frozen=True)
class MollifierSchedule:
    """Rules eps -> delta(eps) for curvature and eps -> delta_tilde(eps) for the twist."""

    family: str
    coefficient: float = 1.0
    exponent: float = 1.0
    tilde_coefficient: float = 1.0
    tilde_exponent: float = 1.0

    def __post_init__(self):
        if self.coefficient <= 0 or self.tilde_coefficient <= 0:
            raise ValueError("schedule coefficients must be positive")
        if self.exponent <= 0 or self.tilde_exponent <= 0:
            raise ValueError("schedule exponents must be positive")

    def delta(self, eps: float) -> float:
        return self.coefficient * float(eps) ** self.exponent

    def delta_tilde(self, eps: float) -> float:
        return self.tilde_coefficient * float(eps) ** self.tilde_exponent

    @property
    def thin_window(self) -> bool:
        """True when eps/delta(eps) -> 0, i.e. the window outgrows the tube width."""
        return self.exponent < 1

    @classmethod
    def power_law(cls, exponent: float, coefficient: float = 1.0) -> "MollifierSchedule":
        return cls(f"power-{exponent:g}", coefficient, exponent)

    @classmethod
    def two_thirds(cls) -> "MollifierSchedule":
        return cls("power-2/3", 1.0, 2.0 / 3.0)

    @classmethod
    def lipschitz(cls) -> "MollifierSchedule":
        return cls("lipschitz", 1.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "coefficient": self.coefficient,
            "exponent": self.exponent,
            "tilde_coefficient": self.tilde_coefficient,
            "tilde_exponent": self.tilde_exponent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MollifierSchedule":
        if isinstance(d, str):
            return {"power-2/3": cls.two_thirds, "lipschitz": cls.lipschitz}[d]()
        return cls(**d)


def shipped_schedules() -> list[MollifierSchedule]:
    return [MollifierSchedule.two_thirds(), MollifierSchedule.lipschitz()]
