"""eps-sweep studies: build, assemble, solve, compare, fit."""

from __future__ import annotations

import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import linregress

from .. import __version__
from ..crosssec import cross_eigs
from ..mollify import MollifierSchedule
from ..spectral import (
    SolverError,
    TubeGrid,
    assemble_3d,
    band_gap,
    bound_constants,
    flatten,
    lowest_eigs,
    perp_rayleigh_min,
    rate_bracket,
    renormalize,
    resolvent_difference,
    resolvent_norm_gap,
)
from ..spectral.operators import dirichlet_stencil, heff_for
from ..spectral.solve import GAP_SEED
from ..tube import TubeSpec, epsilon_max

__all__ = ["StudyConfig", "StudyReport", "RateFit", "fit_rate", "grid_sizes", "evaluate_eps",
           "run_study", "ALL_CHECKS"]

log = logging.getLogger(__name__)

ALL_CHECKS = ("eigs", "gap", "band_gap", "mode_gap", "lower_bound", "perp", "twist_shift")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    stderr: float
    n: int

    @property
    def band(self) -> tuple[float, float]:
        """slope +- 2 standard errors."""
        return self.slope - 2 * self.stderr, self.slope + 2 * self.stderr


def fit_rate(points) -> RateFit:
    """Least squares of log(value) on log(eps); ``points`` is a sequence of (eps, value)."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (eps, value) points")
    if np.any(pts <= 0):
        raise ValueError("eps and values must be positive for a log-log fit")
    res = linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2),
                   float(res.stderr), pts.shape[0])


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to reproduce one sweep.

    ``tube`` is a TubeSpec JSON template without ``eps``.  Grid rule: the
    number of interior s-nodes is the larger of ``n_s_base * eps**-1/2``
    and what keeps ds <= delta(eps) / 8; with ``align`` set, ds is
    additionally a unit fraction of ``align`` so breakpoints of a periodic
    profile sit on nodes for every eps.  ``n_t`` is the transverse count
    at the largest eps; with ``n_t_rule='sqrt'`` it grows like eps**-1/2.
    """

    name: str
    tube: dict
    eps_list: tuple
    schedule: MollifierSchedule = field(default_factory=MollifierSchedule.lipschitz)
    lam: float | None = None
    n_s_base: int = 20
    n_t: int = 32
    n_t_rule: str = "fixed"
    align: float | None = None
    m: int = 3
    checks: tuple = ("eigs", "gap")
    bracket: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    seed: int = GAP_SEED
    description: str = ""
    kind: str = "operator"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        object.__setattr__(self, "eps_list", eps)
        if len(eps) < 1 or any(e <= 0 for e in eps):
            raise ValueError("eps_list must hold positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}")
        if self.n_t_rule not in ("fixed", "sqrt"):
            raise ValueError("n_t_rule must be 'fixed' or 'sqrt'")
        if self.kind not in ("operator", "bracket"):
            raise ValueError("kind must be 'operator' or 'bracket'")
        if self.kind == "operator":
            spec = self.spec(eps[0])
            emax = epsilon_max(spec, spec.section, 0.25)
            if eps[0] > emax:
                raise ValueError(f"eps = {eps[0]} exceeds epsilon_max(1/4) = {emax:.4g}")

    def spec(self, eps: float) -> TubeSpec:
        return TubeSpec.from_dict({**self.tube, "eps": eps})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.to_dict()
        d["eps_list"] = list(self.eps_list)
        d["checks"] = list(self.checks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        if "preset" in d:
            from .presets import presets

            base = presets()[d.pop("preset")].to_dict()
            base.update(d)
            d = base
        if "schedule" in d:
            d["schedule"] = MollifierSchedule.from_dict(d["schedule"])
        for key in ("eps_list", "checks"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def grid_sizes(config: StudyConfig, eps: float) -> tuple[int, int]:
    """(n_s, n_t) for one eps under the config's refinement rule."""
    lo, hi = config.tube["interval"]
    L = hi - lo
    delta = config.schedule.delta(eps)
    edges = max(config.n_s_base * eps**-0.5, 8 * L / delta)
    edges = int(math.ceil(edges - 1e-9))
    if config.align:
        per = L / config.align
        k = round(per)
        if abs(per - k) > 1e-9:
            raise ValueError("align must divide the interval length")
        edges = int(math.ceil(edges / k)) * k
    n_t = config.n_t
    if config.n_t_rule == "sqrt":
        n_t = int(math.ceil(config.n_t * math.sqrt(config.eps_list[0] / eps)))
    return edges - 1, n_t


def _lambda(config: StudyConfig, kappa: float) -> float:
    return config.lam if config.lam is not None else -10 * kappa**2 - 1


def evaluate_eps(config: StudyConfig, eps: float) -> dict:
    """One row of a study; errors are caught and recorded by ``run_study``."""
    if config.kind == "bracket":
        from .presets import oscillation_row

        return oscillation_row(config, eps)
    spec = config.spec(eps)
    n_s, n_t = grid_sizes(config, eps)
    sec = spec.section
    cross = cross_eigs(sec, n_t, refine=False)
    grid = TubeGrid.build(tuple(config.tube["interval"]), sec, n_s, n_t, cross=cross)
    kappa = spec.kappa_sup
    lam = _lambda(config, kappa)
    row = {"eps": eps, "n_s": n_s, "n_t": n_t, "unknowns": grid.size, "lambda": lam,
           "delta": config.schedule.delta(eps), "kappa_sup": kappa,
           "E1_disc": cross.E1, "E2_disc": cross.E2, "C_omega": cross.C_omega}
    checks = set(config.checks)

    A = renormalize(flatten(assemble_3d(spec, grid, "direct")), eps, cross.E1)
    H = heff_for(spec, grid)
    if "eigs" in checks or "twist_shift" in checks:
        w, _ = lowest_eigs(A, config.m, sigma_shift=lam)
        wh = np.linalg.eigvalsh(H.A.toarray())[: config.m]
        for k in range(config.m):
            row[f"eig_A_{k + 1}"] = float(w[k])
            row[f"eig_H_{k + 1}"] = float(wh[k])
            row[f"eig_gap_{k + 1}"] = float(abs(w[k] - wh[k]))
        if "twist_shift" in checks:
            ks = np.linalg.eigvalsh(dirichlet_stencil(n_s, grid.ds).toarray())[0]
            row["twist_shift"] = float(w[0] - ks)
    if "gap" in checks:
        row["resolvent_gap"] = resolvent_norm_gap(A, H, lam, cross.J1, kappa_sup=kappa,
                                                  seed=config.seed)
    if "band_gap" in checks:
        row["band_gap"] = band_gap(A, H, lam, cross.J1, seed=config.seed)
    if checks & {"mode_gap", "lower_bound", "perp"}:
        Am = renormalize(flatten(assemble_3d(spec, grid, "mollified", config.schedule)),
                         eps, cross.E1)
        if "mode_gap" in checks:
            row["mode_gap"] = resolvent_difference(A, Am, lam, seed=config.seed)
        if "lower_bound" in checks:
            row["min_spec_mollified"] = float(lowest_eigs(Am, 1, sigma_shift=lam)[0][0])
            row["min_spec_direct"] = float(lowest_eigs(A, 1, sigma_shift=lam)[0][0])
            row["lower_bound"] = -9 * kappa**2
        if "perp" in checks:
            row["perp_min"] = float(perp_rayleigh_min(Am, cross.J1, shift=lam))
            row["perp_scale"] = (cross.E2 - cross.E1) / eps**2

    try:
        consts = bound_constants(eps, kappa, cross.a, cross.E1, cross.E2, lam)
        row["C_perp"] = consts.C_perp
        row["beta"] = consts.beta
    except ValueError as exc:
        consts = None
        row["constants_note"] = str(exc)
    br = rate_bracket(eps, spec.k1, spec.k2, spec.theta_dot, config.schedule, consts,
                      **config.bracket)
    row["bracket"] = br["bracket"]
    for k, v in br["components"].items():
        row[k] = v
    if "sigma_tilde_explicit" in br:
        row["sigma_tilde_explicit"] = br["sigma_tilde_explicit"]
    return row


@dataclass
class StudyReport:
    config: StudyConfig
    rows: list
    fits: dict
    assertions: list
    environment: dict

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def ok_rows(self) -> list:
        return [r for r in self.rows if "error" not in r]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": self.rows,
            "fits": {k: asdict(v) | {"band": list(v.band)} for k, v in self.fits.items()},
            "assertions": self.assertions,
            "environment": self.environment,
            "passed": self.passed,
        }


FIT_COLUMNS = ("resolvent_gap", "band_gap", "eig_gap_1", "bracket", "mode_gap", "sigma_k")


def _fits(rows) -> dict:
    out = {}
    for col in FIT_COLUMNS:
        pts = [(r["eps"], r[col]) for r in rows if col in r and r[col] is not None and r[col] > 0]
        if len(pts) >= 3:
            out[col] = fit_rate(pts)
    return out


def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


ROUNDOFF_GAP = 1e-10  # resolvent differences below this are solver noise


def _decreasing(vals, floor: float = 0.0) -> bool:
    """Strictly decreasing, except that steps between values at or below ``floor`` pass."""
    return all(b < a or max(a, b) <= floor for a, b in zip(vals, vals[1:]))


def evaluate_expectations(config: StudyConfig, rows: list, fits: dict) -> list:
    ex = config.expect
    out = []
    col = lambda c: [r[c] for r in rows if c in r]
    if not rows:
        return [_check("rows", False, "every eps row failed")]
    if "eig_gap_max" in ex:
        worst = max(r[f"eig_gap_{k + 1}"] for r in rows for k in range(config.m))
        out.append(_check("eig_gap_max", worst <= ex["eig_gap_max"], f"max eig gap {worst:.3e}"))
    if "band_gap_max" in ex:
        worst = max(col("band_gap"))
        out.append(_check("band_gap_max", worst <= ex["band_gap_max"], f"max band gap {worst:.3e}"))
    for key, column in (("gap_slope", "resolvent_gap"), ("bracket_slope", "bracket"),
                        ("band_slope", "band_gap")):
        if key in ex:
            lo, hi = ex[key]
            f = fits.get(column)
            ok = f is not None and lo <= f.slope <= hi
            out.append(_check(key, ok, f"slope {f.slope:.4f} vs [{lo}, {hi}]" if f else "no fit"))
    for key, column in (("gap_monotone", "resolvent_gap"), ("mode_gap_monotone", "mode_gap")):
        if ex.get(key):
            vals = col(column)
            floor = ROUNDOFF_GAP if column == "mode_gap" else 0.0
            out.append(_check(key, _decreasing(vals, floor),
                              f"{column}: {[f'{v:.3e}' for v in vals]}"))
    if "mode_gap_vs_bracket" in ex:
        c = ex["mode_gap_vs_bracket"]
        ratios = [r["mode_gap"] / r["bracket"] for r in rows if "mode_gap" in r]
        out.append(_check("mode_gap_vs_bracket", ratios and max(ratios) <= c,
                          f"max mode_gap/bracket {max(ratios):.3e} (limit {c})"))
    if "twist_shift_rel" in ex:
        errs = [abs(r["twist_shift"] - r["C_omega"]) / r["C_omega"] for r in rows]
        ok = _decreasing(errs) and errs[-1] <= ex["twist_shift_rel"]
        out.append(_check("twist_shift_rel", ok, f"relative errors {[f'{e:.3e}' for e in errs]}"))
    if "lower_bound_slack" in ex:
        slack = ex["lower_bound_slack"]
        bad = [r["eps"] for r in rows if r["min_spec_mollified"] < r["lower_bound"] - slack]
        out.append(_check("lower_bound", not bad, f"violations at eps {bad}"))
    if "perp_fraction" in ex:
        frac = ex["perp_fraction"]
        ratios = [r["perp_min"] / r["perp_scale"] for r in rows]
        out.append(_check("perp_coercivity", min(ratios) >= frac,
                          f"min perp/((E2-E1)/eps^2) = {min(ratios):.4f}"))
    if "sigma_floor" in ex:
        v = rows[-1]["sigma_k_min_schedule"]
        out.append(_check("sigma_floor", v >= ex["sigma_floor"], f"min sigma_k {v:.4f}"))
    return out


def _environment(config: StudyConfig) -> dict:
    import scipy

    return {"tubelab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "seed": config.seed,
            "eig_residual_tol": 1e-9, "gap_rtol": 1e-6}


def run_study(config: StudyConfig, workers: int = 1) -> StudyReport:
    """Sweep eps; a failing row is recorded with its error and skipped in the fits."""
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(evaluate_eps, config, e) for e in config.eps_list]
            results = []
            for e, fut in zip(config.eps_list, futures):
                try:
                    results.append(fut.result())
                except (ValueError, SolverError, ArithmeticError) as exc:
                    results.append({"eps": e, "error": f"{type(exc).__name__}: {exc}"})
    else:
        results = []
        for e in config.eps_list:
            try:
                results.append(evaluate_eps(config, e))
            except (ValueError, SolverError, ArithmeticError) as exc:
                log.warning("eps = %g failed: %s", e, exc)
                results.append({"eps": e, "error": f"{type(exc).__name__}: {exc}"})
    ok = [r for r in results if "error" not in r]
    if not ok:
        raise RuntimeError(f"study {config.name!r}: every eps row failed")
    fits = _fits(ok)
    assertions = evaluate_expectations(config, ok, fits)
    if len(ok) < len(results):
        assertions.append(_check("rows", False, f"{len(results) - len(ok)} eps rows failed"))
    return StudyReport(config, results, fits, assertions, _environment(config))
