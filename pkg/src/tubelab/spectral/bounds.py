"""Explicit constants and the rate bracket of the resolvent estimate."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..mollify import MollifierSchedule, SampledFunction, sigma, steklov_derivative

__all__ = ["BoundConstants", "GapResult", "bound_constants", "perp_coefficients",
           "rate_bracket", "SYMBOLIC_SLOTS"]

# Constants whose values the analysis only characterizes by their dependencies.
SYMBOLIC_SLOTS = ("C4", "C5", "C6", "C7", "C8", "C9")


@dataclass(frozen=True)
class BoundConstants:
    lam: float
    C1: float
    C2: float
    C3: float
    C_perp: float
    beta: float
    kappa_sup: float
    a: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update({k: None for k in SYMBOLIC_SLOTS})
        return d


@dataclass
class GapResult:
    eps: float
    eig_gap: np.ndarray
    resolvent_gap: float
    bound_bracket: float
    components: dict
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.resolvent_gap is not None and self.resolvent_gap < 0:
            raise ValueError("resolvent gap must be nonnegative")
        for k, v in self.components.items():
            if v is not None and v < 0:
                raise ValueError(f"component {k} is negative")

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "eig_gap": [float(x) for x in np.atleast_1d(self.eig_gap)],
            "resolvent_gap": self.resolvent_gap,
            "bound_bracket": self.bound_bracket,
            "components": dict(self.components),
            **self.extras,
        }


def perp_coefficients(eps: float, a: float, kappa_sup: float, E1: float, E2: float,
                      beta: float) -> tuple[float, float]:
    """The two coefficients whose minimum controls the orthogonal-band estimate.

    With r = (1 - 4 eps a k) / (1 + 4 eps a k) they read
    E2 r (1 - beta) - E1 / r and beta r.
    """
    x = 4 * eps * a * kappa_sup
    r = (1 - x) / (1 + x)
    return E2 * r * (1 - beta) - E1 / r, beta * r


def _best_beta(eps, a, kappa_sup, E1, E2) -> float:
    # coef1 decreases and coef2 increases in beta: the max-min sits at equality
    x = 4 * eps * a * kappa_sup
    r = (1 - x) / (1 + x)
    return (E2 - E1 / r**2) / (E2 + 1)


def bound_constants(eps: float, kappa_sup: float, a: float, E1: float, E2: float,
                    lam: float | None = None) -> BoundConstants:
    """C1, C2, C3 and C_perp (with the trade-off parameter beta maximized).

    Raises ValueError when eps is too large for the orthogonal-band
    coercivity: eps a ||kappa|| must stay <= 1/4 and E2 r^2 > E1.
    """
    k = float(kappa_sup)
    if lam is None:
        lam = -10 * k**2 - 1
    if not lam < -9 * k**2:
        raise ValueError(f"lambda = {lam} is not below -9 ||kappa||^2 = {-9 * k * k}")
    if eps * a * k > 0.25:
        raise ValueError(
            f"eps = {eps} violates the smallness requirement eps a ||kappa|| <= 1/4 "
            "needed for the lower bound"
        )
    x = 4 * eps * a * k
    r = (1 - x) / (1 + x) if x < 1 else 0.0
    if not (r > 0 and E2 * r**2 > E1):
        raise ValueError(
            f"eps = {eps} is above the coercivity threshold: E2 r^2 = {E2 * r * r:.4g} "
            f"<= E1 = {E1:.4g} (the transverse bound needs E2 r^2 > E1)"
        )
    beta = _best_beta(eps, a, k, E1, E2)
    c1, c2 = perp_coefficients(eps, a, k, E1, E2, beta)
    C_perp = 2.0 / np.sqrt(min(c1, c2))
    if k > 0:
        C1, C2, C3 = 4 * a**2 / k**2, 10 * a / k, 12 * a * abs(lam) / k
    else:
        C1 = C2 = C3 = float("inf")
    return BoundConstants(float(lam), C1, C2, C3, float(C_perp), float(beta), k, a)


def _derivative_sup(f: SampledFunction, delta: float, interior: bool) -> float:
    g = f.grid
    s = np.concatenate([g.nodes, g.midpoints])
    if interior:
        # strict: a window ending on the boundary would see the half-jump there
        tiny = 1e-9 * g.length
        s = s[(s - delta / 2 > g.s_min + tiny) & (s + delta / 2 < g.s_max - tiny)]
        if s.size == 0:
            return 0.0
    return float(np.max(np.abs(steklov_derivative(f, delta, at=s))))


def rate_bracket(eps: float, k1: SampledFunction, k2: SampledFunction,
                 theta_dot: SampledFunction, schedule: MollifierSchedule,
                 consts: BoundConstants | None = None, cell_length: float = 1.0,
                 origin: float = 0.0, interior: bool = False,
                 eta_samples: int = 65) -> dict:
    """eps + eps (||k1_eps'|| + ||k2_eps'||) + sigma_k1 + sigma_k2 + sigma_theta'.

    The moduli use delta(eps) for the curvatures and delta~(eps) for the
    twist, over cells of ``cell_length`` starting at ``origin``.  With
    ``interior=True`` only windows and cells inside the interval count, so
    the zero extension beyond the ends does not register as roughness.
    Returns the bracket and its components; with ``consts`` the explicit
    part (C1 + C2) eps ||k_eps'|| + C3 eps of the auxiliary sigma~ is added
    and the remaining constants are reported as symbolic slots.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d, dt = schedule.delta(eps), schedule.delta_tilde(eps)
    dk1 = _derivative_sup(k1, d, interior)
    dk2 = _derivative_sup(k2, d, interior)
    kw = dict(cell_length=cell_length, origin=origin, interior=interior, eta_samples=eta_samples)
    s1 = sigma(k1, d, **kw)
    s2 = sigma(k2, d, **kw)
    st = sigma(theta_dot, dt, **kw)
    comps = {
        "eps_term": eps,
        "steklov_deriv_terms": eps * (dk1 + dk2),
        "sigma_k": s1 + s2,
        "sigma_theta": st,
    }
    out = {
        "bracket": float(sum(comps.values())),
        "components": comps,
        "delta": d,
        "delta_tilde": dt,
        "sigma_k1": s1,
        "sigma_k2": s2,
        "k1_eps_deriv_sup": dk1,
        "k2_eps_deriv_sup": dk2,
    }
    if consts is not None:
        if np.isfinite(consts.C1):
            explicit = (consts.C1 + consts.C2) * eps * (dk1 + dk2) + consts.C3 * eps
            out["sigma_tilde_explicit"] = float(explicit)
        else:  # straight curve: the constants are not defined
            out["sigma_tilde_explicit"] = None
        out["sigma_tilde_symbolic"] = list(SYMBOLIC_SLOTS)
        out["constants"] = consts.to_dict()
    return out
