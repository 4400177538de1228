"""Tube geometry over a reference curve.

A point (s, t) of the straight tube I x omega is mapped to
Gamma(s) + eps * (t1 M1_theta(s) + t2 M2_theta(s)), where the rotated
normals come from the RPAF turned by the angle theta(s).  Everything the
spectral module needs is expressed through

    q(s) = R(theta) (k1, k2),   R(theta) = [[cos, sin], [-sin, cos]],
    h = 1 - eps * t . q,        h2 = -t1 theta',   h3 = t2 theta'.

The mollified Jacobian h_eps uses the moving averages of k1, k2 and the
same theta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .crosssec import CrossSection, geometry_constants, parse_shape
from .curve import ArcGrid, CurvaturePair
from .mollify import MollifierSchedule, SampledFunction, steklov, steklov_derivative
from .profiles import profile_from_dict

__all__ = [
    "TubeSpec",
    "JacobianField",
    "MetricField",
    "InadmissibleGeometry",
    "jacobians",
    "metric_bundle",
    "epsilon_max",
    "classify_twist",
    "rotated_curvature",
]

log = logging.getLogger(__name__)

ABSTRACT_MANIFOLD_NOTE = (
    "injectivity of the tube map is not checked; results hold for the tube "
    "viewed as an abstract Riemannian manifold"
)


class InadmissibleGeometry(ValueError):
    """The Jacobian h is not positive on the tube."""


@dataclass(frozen=True)
class TubeSpec:
    """Curvatures, rotation angle and twist along the curve, plus section and eps.

    ``k1``, ``k2``, ``theta`` and ``theta_dot`` live on a common data grid
    and are evaluated anywhere by their interpolants (zero outside).
    """

    k1: SampledFunction
    k2: SampledFunction
    theta: SampledFunction
    theta_dot: SampledFunction
    section: CrossSection
    eps: float
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = self.k1.grid
        for f in (self.k2, self.theta, self.theta_dot):
            if f.grid != g:
                raise ValueError("all curve data must share one grid")
        if not (self.eps > 0 and np.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not np.isfinite(self.theta_dot.sup_norm):
            raise ValueError("twist rate must be bounded")

    @property
    def grid(self) -> ArcGrid:
        return self.k1.grid

    @property
    def pair(self) -> CurvaturePair:
        return CurvaturePair(self.k1.values, self.k2.values)

    @property
    def kappa_sup(self) -> float:
        """Sup of the curvature magnitude over the data (piece values in constant mode)."""
        k1, k2 = self.k1._used(), self.k2._used()
        return float(np.max(np.hypot(k1, k2)))

    @property
    def planar(self) -> bool:
        return self.section.dim == 1

    def with_eps(self, eps: float) -> "TubeSpec":
        return TubeSpec(self.k1, self.k2, self.theta, self.theta_dot, self.section, eps,
                        self.label, self.meta)

    @classmethod
    def from_profiles(
        cls,
        k1,
        k2,
        theta_dot,
        interval: tuple[float, float],
        section: CrossSection,
        eps: float,
        n_data: int = 4001,
        mode: str = "linear",
        theta0: float = 0.0,
        label: str = "",
    ) -> "TubeSpec":
        """Sample profile functions on a data grid; theta integrates theta_dot from theta0."""
        g = ArcGrid(interval[0], interval[1], n_data)
        as_fn = lambda f: f if callable(f) else (lambda s, v=float(f): np.full(np.shape(s), v))
        K1 = SampledFunction.from_callable(as_fn(k1), g, mode)
        K2 = SampledFunction.from_callable(as_fn(k2), g, mode)
        TD = SampledFunction.from_callable(as_fn(theta_dot), g, mode)
        th = theta0 + TD.antiderivative(g.nodes)
        return cls(K1, K2, SampledFunction(g, th), TD, section, eps, label)

    @classmethod
    def from_dict(cls, d: dict) -> "TubeSpec":
        """Build from the JSON layout documented in the README."""
        sec = d["section"]
        section = parse_shape(sec) if isinstance(sec, str) else CrossSection.from_dict(sec)
        interval = tuple(d["interval"])
        curv = d.get("curvature", {})
        k1 = profile_from_dict(curv.get("k1", 0.0))
        k2 = profile_from_dict(curv.get("k2", 0.0))
        td = profile_from_dict(d.get("twist", 0.0))
        return cls.from_profiles(
            k1, k2, td, interval, section, float(d["eps"]),
            n_data=int(d.get("n_data", 4001)), mode=d.get("mode", "linear"),
            theta0=float(d.get("theta0", 0.0)), label=d.get("label", ""),
        )


@dataclass(frozen=True)
class JacobianField:
    """Values on the tensor grid s x t (arrays of shape (len(s), len(t)))."""

    s: np.ndarray
    t: np.ndarray
    h: np.ndarray
    h_eps: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    notes: tuple = ()


@dataclass(frozen=True)
class MetricField:
    G: np.ndarray
    Ginv: np.ndarray
    detG: np.ndarray


def rotated_curvature(spec: TubeSpec, s, delta: float | None = None, derivative=False):
    """R(theta(s)) applied to (k1, k2)(s), or to their moving averages of width ``delta``.

    With ``derivative=True`` the moving-average derivatives are rotated
    instead (theta held fixed), which is what enters the mollified form.
    """
    s = np.asarray(s, dtype=float)
    if delta is None:
        if derivative:
            raise ValueError("derivative needs a mollifier width")
        a, b = spec.k1.closed(s), spec.k2.closed(s)
    elif derivative:
        a = steklov_derivative(spec.k1, delta, at=s)
        b = steklov_derivative(spec.k2, delta, at=s)
    else:
        a = steklov(spec.k1, delta, at=s)
        b = steklov(spec.k2, delta, at=s)
    th = spec.theta.closed(s)
    c, sn = np.cos(th), np.sin(th)
    return c * a + sn * b, -sn * a + c * b


def _h_from(q1, q2, t, eps):
    return 1.0 - eps * (np.outer(q1, t[:, 0]) + np.outer(q2, t[:, 1]))


def jacobians(
    spec: TubeSpec,
    schedule: MollifierSchedule | None = None,
    s=None,
    t=None,
    check: bool = True,
) -> JacobianField:
    """h, h_eps, h2, h3 on the tensor grid ``s`` x ``t``.

    ``s`` defaults to the data-grid nodes and ``t`` to the section's
    transverse lattice at 32 nodes per axis.  Raises InadmissibleGeometry
    naming the first (s, t) where h <= 0.
    """
    from .crosssec import TransverseGrid

    s = spec.grid.nodes if s is None else np.asarray(s, dtype=float)
    t = TransverseGrid.build(spec.section, 32).coords if t is None else np.atleast_2d(t)
    q1, q2 = rotated_curvature(spec, s)
    h = _h_from(q1, q2, t, spec.eps)
    if schedule is not None:
        m1, m2 = rotated_curvature(spec, s, schedule.delta(spec.eps))
        h_eps = _h_from(m1, m2, t, spec.eps)
    else:
        h_eps = h
    td = spec.theta_dot.closed(s)
    h2 = -np.outer(td, t[:, 0])
    h3 = np.outer(td, t[:, 1])
    if check:
        for name, arr in (("h", h), ("h_eps", h_eps)):
            if np.min(arr) <= 0:
                i, j = np.unravel_index(np.argmin(arr), arr.shape)
                raise InadmissibleGeometry(
                    f"{name} = {arr[i, j]:.4g} <= 0 at s = {s[i]:.6g}, t = {tuple(t[j])}; "
                    f"eps = {spec.eps:g} exceeds the admissible range"
                )
    log.debug(ABSTRACT_MANIFOLD_NOTE)
    return JacobianField(s, t, h, h_eps, h2, h3, (ABSTRACT_MANIFOLD_NOTE,))


def metric_bundle(jac: JacobianField, eps: float) -> MetricField:
    """Metric G, its closed-form inverse and det G = eps^4 h^2 per grid point."""
    h, h2, h3 = jac.h, jac.h2, jac.h3
    if np.min(h) <= 0:
        raise InadmissibleGeometry("h must be positive for the metric to be invertible")
    e2 = eps * eps
    G = np.zeros(h.shape + (3, 3))
    G[..., 0, 0] = h**2 + e2 * (h2**2 + h3**2)
    G[..., 0, 1] = G[..., 1, 0] = -e2 * h3
    G[..., 0, 2] = G[..., 2, 0] = -e2 * h2
    G[..., 1, 1] = e2
    G[..., 2, 2] = e2
    Gi = np.empty_like(G)
    inv_h2 = 1.0 / h**2
    Gi[..., 0, 0] = inv_h2
    Gi[..., 0, 1] = Gi[..., 1, 0] = h3 * inv_h2
    Gi[..., 0, 2] = Gi[..., 2, 0] = h2 * inv_h2
    Gi[..., 1, 1] = (h**2 / e2 + h3**2) * inv_h2
    Gi[..., 2, 2] = (h**2 / e2 + h2**2) * inv_h2
    Gi[..., 1, 2] = Gi[..., 2, 1] = h2 * h3 * inv_h2
    return MetricField(G, Gi, eps**4 * h**2)


def epsilon_max(pair_or_kappa, section: CrossSection, margin: float = 0.25) -> float:
    """Largest eps with h >= 1 - margin guaranteed: margin / (a sup|kappa|)."""
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    if isinstance(pair_or_kappa, CurvaturePair):
        kmax = pair_or_kappa.kappa_sup
    elif isinstance(pair_or_kappa, TubeSpec):
        kmax = pair_or_kappa.kappa_sup
    else:
        kmax = float(pair_or_kappa)
    if kmax == 0:
        return float("inf")
    a, _ = geometry_constants(section)
    return margin / (a * kmax)


def classify_twist(spec: TubeSpec, tol: float = 1e-12) -> tuple[str, str]:
    """('untwisted' | 'twisted', reason)."""
    _, circular = geometry_constants(spec.section)
    if circular:
        return "untwisted", "circular cross-section"
    rate = spec.theta_dot.sup_norm
    if rate <= tol:
        return "untwisted", "section transported by the parallel frame (zero twist rate)"
    return "twisted", f"non-circular section rotating at sup rate {rate:.6g}"
