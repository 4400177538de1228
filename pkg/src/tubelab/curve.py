"""Unit-speed curves and their relatively parallel adapted frames.

The frame {T, M1, M2} is stored row-wise per node.  Curvatures (k1, k2)
are the components of T' along M1 and M2, so that

    T' = k1 M1 + k2 M2,    M1' = -k1 T,    M2' = -k2 T.

Nothing here assumes the curvature is continuous: frames built from
curvatures use one exact rotation per grid cell with the cell-averaged
curvature, which is what makes step-like curvature (arcs glued together)
come out exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

__all__ = [
    "ArcGrid",
    "SampledCurve",
    "Frame",
    "CurvaturePair",
    "FrenetData",
    "UnitSpeedError",
    "build_from_curvatures",
    "rpaf_from_embedding",
    "frenet_of",
    "frenet_angle_convert",
]

DEFAULT_CTOL = 1e-6


class UnitSpeedError(ValueError):
    """Raised when a sampled curve is not parameterized by arc length."""


@dataclass(frozen=True)
class ArcGrid:
    """Uniform partition of the arc-length interval [s_min, s_max]."""

    s_min: float
    s_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.s_min) and np.isfinite(self.s_max)):
            raise ValueError("arc-length endpoints must be finite")
        if self.s_max <= self.s_min:
            raise ValueError(f"need s_max > s_min, got {self.s_min}, {self.s_max}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"node count must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.n - 1)

    @property
    def length(self) -> float:
        return self.s_max - self.s_min

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n)

    @property
    def midpoints(self) -> np.ndarray:
        s = self.nodes
        return 0.5 * (s[1:] + s[:-1])

    @classmethod
    def with_spacing(cls, s_min: float, s_max: float, ds: float) -> "ArcGrid":
        """Grid whose spacing is the largest value <= ds that divides the interval."""
        cells = int(np.ceil((s_max - s_min) / ds - 1e-9))
        return cls(s_min, s_max, max(cells, 1) + 1)


@dataclass(frozen=True)
class SampledCurve:
    grid: ArcGrid
    gamma: np.ndarray
    provenance: str = "from-embedding"
    ctol: float = DEFAULT_CTOL

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim != 2 or gamma.shape[0] != self.grid.n or gamma.shape[1] not in (2, 3):
            raise ValueError(f"gamma must have shape ({self.grid.n}, 2|3), got {gamma.shape}")
        if gamma.shape[1] == 2:
            gamma = np.column_stack([gamma, np.zeros(len(gamma))])
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    def chord_ratios(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.gamma, axis=0), axis=1) / self.grid.ds

    def turning_angles(self) -> np.ndarray:
        """Per cell, the larger angle between its chord and a neighbouring chord."""
        d = np.diff(self.gamma, axis=0)
        u = d / np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
        phi = np.arccos(np.clip(np.einsum("ij,ij->i", u[1:], u[:-1]), -1.0, 1.0))
        pad = np.concatenate([[0.0], phi, [0.0]])
        return np.maximum(pad[1:], pad[:-1])

    def check_unit_speed(self, ctol: float | None = None) -> None:
        """Check chord/ds against 1 within ``ctol``.

        A unit-speed arc turning by phi over one cell has a chord shorter
        by about phi^2/24; that geometric deficit (with a small margin) is
        allowed on top of ``ctol`` so that fine samples of curved input pass.
        """
        ctol = self.ctol if ctol is None else ctol
        r = self.chord_ratios()
        sag = self.turning_angles() ** 2 / 20.0
        bad = np.flatnonzero((r < 1.0 - ctol - sag) | (r > 1.0 + ctol))
        if bad.size:
            i = int(bad[0])
            raise UnitSpeedError(
                f"chord/ds = {r[i]:.9f} on cell {i} (s={self.grid.nodes[i]:.6g}) "
                f"is outside [1-{ctol:g}, 1+{ctol:g}]; resample by arc length"
            )


@dataclass(frozen=True)
class Frame:
    T: np.ndarray
    M1: np.ndarray
    M2: np.ndarray

    def as_stack(self) -> np.ndarray:
        """Array of shape (n, 3, 3) with rows T, M1, M2 per node."""
        return np.stack([self.T, self.M1, self.M2], axis=1)

    def orthonormality_defect(self) -> float:
        F = self.as_stack()
        gram = np.einsum("nij,nkj->nik", F, F)
        return float(np.max(np.abs(gram - np.eye(3))))

    def handedness(self) -> np.ndarray:
        return np.linalg.det(self.as_stack())


@dataclass(frozen=True)
class CurvaturePair:
    k1: np.ndarray
    k2: np.ndarray
    kappa: np.ndarray = field(init=False)

    def __post_init__(self):
        k1 = np.asarray(self.k1, dtype=float)
        k2 = np.asarray(self.k2, dtype=float)
        if k1.shape != k2.shape:
            raise ValueError("k1 and k2 must have equal shapes")
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "kappa", np.sqrt(k1**2 + k2**2))

    @property
    def kappa_sup(self) -> float:
        return float(np.max(self.kappa)) if self.kappa.size else 0.0

    def rotated(self, R: np.ndarray) -> "CurvaturePair":
        """Curvatures seen from the RPAF whose initial normals are rotated by R."""
        k = np.asarray(R) @ np.vstack([self.k1, self.k2])
        return CurvaturePair(k[0], k[1])


@dataclass(frozen=True)
class FrenetData:
    N: np.ndarray
    B: np.ndarray
    tau: np.ndarray
    vartheta: np.ndarray
    defined_mask: np.ndarray


def _as_node_values(k, grid: ArcGrid, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Node samples and per-cell averages of a curvature given as array or callable."""
    if callable(k):
        nodes = np.asarray(k(grid.nodes), dtype=float) * np.ones(grid.n)
        cells = np.asarray(k(grid.midpoints), dtype=float) * np.ones(grid.n - 1)
    else:
        nodes = np.asarray(k, dtype=float)
        if nodes.shape != (grid.n,):
            raise ValueError(f"{name} must have one value per node ({grid.n}), got {nodes.shape}")
        cells = 0.5 * (nodes[1:] + nodes[:-1])
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(cells))):
        raise ValueError(f"{name} contains non-finite values")
    return nodes, cells


def _reorthonormalize(F: np.ndarray) -> np.ndarray:
    T = F[0] / np.linalg.norm(F[0])
    M1 = F[1] - (F[1] @ T) * T
    M1 /= np.linalg.norm(M1)
    M2 = np.cross(T, M1)
    return np.array([T, M1, M2])


def build_from_curvatures(
    k1: Sequence[float] | Callable,
    k2: Sequence[float] | Callable,
    grid: ArcGrid,
    init_point=(0.0, 0.0, 0.0),
    init_frame=None,
) -> tuple[SampledCurve, Frame, CurvaturePair]:
    """Integrate the Cartan system for the RPAF and the curve it frames.

    Each cell [s_i, s_{i+1}] is advanced with the exact flow of the Cartan
    system for the cell-averaged curvature (a rotation, so orthonormality is
    preserved to rounding), and the position is advanced by the exact
    integral of T over the same flow.  Piecewise-constant curvature with
    breaks on nodes is therefore integrated without truncation error.

    ``k1``/``k2`` may be per-node arrays (cell value = mean of the two end
    nodes) or callables of s (cell value = value at the cell midpoint).
    """
    if grid.n < 3:
        raise ValueError("need at least 3 nodes")
    k1n, k1c = _as_node_values(k1, grid, "k1")
    k2n, k2c = _as_node_values(k2, grid, "k2")

    F = np.eye(3) if init_frame is None else np.array(init_frame, dtype=float)
    if F.shape != (3, 3):
        raise ValueError("init_frame must be a 3x3 array with rows T, M1, M2")
    if np.max(np.abs(F @ F.T - np.eye(3))) > 1e-12 or np.linalg.det(F) < 0:
        raise ValueError("init_frame must be orthonormal and right-handed")
    p0 = np.asarray(init_point, dtype=float)
    if p0.shape == (2,):
        p0 = np.append(p0, 0.0)

    h = grid.ds
    frames = np.empty((grid.n, 3, 3))
    gamma = np.empty((grid.n, 3))
    frames[0] = F
    gamma[0] = p0
    eye = np.eye(3)
    for i in range(grid.n - 1):
        a, b = k1c[i], k2c[i]
        A = np.array([[0.0, a, b], [-a, 0.0, 0.0], [-b, 0.0, 0.0]])
        A2 = A @ A
        kap = np.hypot(a, b)
        x = kap * h
        if x < 1e-4:
            # Taylor branches keep full precision for tiny rotation angles
            c1 = h * (1 - x**2 / 6 + x**4 / 120)
            c2 = h**2 * (0.5 - x**2 / 24 + x**4 / 720)
            c3 = h**3 * (1 / 6 - x**2 / 120 + x**4 / 5040)
        else:
            c1 = np.sin(x) / kap
            c2 = (1 - np.cos(x)) / kap**2
            c3 = (x - np.sin(x)) / kap**3
        step = eye + c1 * A + c2 * A2
        integral = h * eye + c2 * A + c3 * A2
        gamma[i + 1] = gamma[i] + (integral @ F)[0]
        F = _reorthonormalize(step @ F)
        frames[i + 1] = F

    curve = SampledCurve(grid, gamma, provenance="from-curvatures")
    frame = Frame(frames[:, 0].copy(), frames[:, 1].copy(), frames[:, 2].copy())
    return curve, frame, CurvaturePair(k1n, k2n)


def _derivative(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative along axis 0.

    Centered five-point stencil inside, one-sided five-point stencils on the
    two nodes at each end, so the boundary carries no lower-order error.
    """
    n = len(y)
    if n < 5:
        return np.gradient(y, h, axis=0, edge_order=2 if n >= 3 else 1)
    d = np.empty_like(y, dtype=float)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def _rotate_about(v: np.ndarray, axis: np.ndarray, cos_a: float, sin_a: float) -> np.ndarray:
    return v * cos_a + np.cross(axis, v) * sin_a + axis * (axis @ v) * (1 - cos_a)


def _default_normal(T0: np.ndarray) -> np.ndarray:
    e = np.zeros(3)
    e[np.argmin(np.abs(T0))] = 1.0
    m = e - (e @ T0) * T0
    return m / np.linalg.norm(m)


def rpaf_from_embedding(
    curve: SampledCurve, init_normal=None, ctol: float | None = None
) -> tuple[Frame, CurvaturePair]:
    """Recover the RPAF and curvatures of a sampled unit-speed curve.

    T is the normalized fourth-order finite-difference derivative of the
    positions.  The normals are carried by discrete parallel transport: the
    rotation about T_i x T_{i+1} taking T_i onto T_{i+1}.  The curvatures are
    k_mu = T' . M_mu with T' again by finite differences.

    ``init_normal`` fixes M1 at the first node (projected onto the normal
    plane); by default the coordinate axis least aligned with T is used.
    """
    grid = curve.grid
    if grid.n < 3:
        raise ValueError("need at least 3 nodes")
    curve.check_unit_speed(ctol)

    dG = _derivative(curve.gamma, grid.ds)
    T = dG / np.linalg.norm(dG, axis=1)[:, None]

    if init_normal is None:
        m = _default_normal(T[0])
    else:
        m = np.asarray(init_normal, dtype=float)
        if m.shape == (2,):
            m = np.append(m, 0.0)
        m = m - (m @ T[0]) * T[0]
        nm = np.linalg.norm(m)
        if nm < 1e-12:
            raise ValueError("init_normal is parallel to the initial tangent")
        m /= nm

    M1 = np.empty_like(T)
    M1[0] = m
    for i in range(grid.n - 1):
        axis = np.cross(T[i], T[i + 1])
        sin_a = np.linalg.norm(axis)
        cos_a = float(T[i] @ T[i + 1])
        v = M1[i]
        if sin_a > 1e-15:
            v = _rotate_about(v, axis / sin_a, cos_a, sin_a)
        v = v - (v @ T[i + 1]) * T[i + 1]
        M1[i + 1] = v / np.linalg.norm(v)
    M2 = np.cross(T, M1)

    dT = _derivative(T, grid.ds)
    k1 = np.einsum("ij,ij->i", dT, M1)
    k2 = np.einsum("ij,ij->i", dT, M2)
    return Frame(T, M1, M2), CurvaturePair(k1, k2)


def _components(mask: np.ndarray) -> list[slice]:
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return [slice(a, b) for a, b in zip(starts, stops)]


def frenet_of(frame: Frame, pair: CurvaturePair, kappa_floor: float, ds: float) -> FrenetData:
    """Frenet frame and torsion wherever the curvature is at least ``kappa_floor``.

    The angle of (k1, k2) is unwrapped separately on every run of defined
    nodes; nothing is continued across a gap where the curvature vanishes.
    """
    if kappa_floor <= 0:
        raise ValueError("kappa_floor must be positive")
    n = len(pair.k1)
    mask = pair.kappa >= kappa_floor
    N = np.full((n, 3), np.nan)
    B = np.full((n, 3), np.nan)
    tau = np.full(n, np.nan)
    vartheta = np.full(n, np.nan)
    for sl in _components(mask):
        ang = np.unwrap(np.arctan2(pair.k2[sl], pair.k1[sl]))
        vartheta[sl] = ang
        if ang.size >= 3:
            tau[sl] = _derivative(ang, ds)
        elif ang.size == 2:
            tau[sl] = (ang[1] - ang[0]) / ds
        c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
        N[sl] = frame.M1[sl] * c + frame.M2[sl] * s
        B[sl] = np.cross(frame.T[sl], N[sl])
    return FrenetData(N, B, tau, vartheta, mask)


def frenet_angle_convert(theta, tau, direction: str, grid: ArcGrid) -> np.ndarray:
    """Convert a cross-section angle between the RPAF and the Frenet frame.

    rpaf_to_frenet returns theta + int tau, frenet_to_rpaf returns
    theta - int tau, integrals taken from s_min.
    """
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if direction not in ("rpaf_to_frenet", "frenet_to_rpaf"):
        raise ValueError(f"unknown direction {direction!r}")
    if not np.all(np.isfinite(tau)):
        raise ValueError("torsion must be defined on every node")
    prim = cumulative_trapezoid(tau, grid.nodes, initial=0.0)
    return theta + prim if direction == "rpaf_to_frenet" else theta - prim
