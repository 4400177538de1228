"""Command-line interface: ``tubelab <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

__all__ = ["main", "build_parser"]

SCHEDULES = ("lipschitz", "two-thirds")


def _emit(payload, out: str | None):
    from .io import atomic_write, dumps_json

    text = dumps_json(payload)
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _schedule(name: str):
    from .mollify import MollifierSchedule

    return MollifierSchedule.two_thirds() if name == "two-thirds" else MollifierSchedule.lipschitz()


def _load_spec(args):
    """TubeSpec plus its lattice; the JSON may carry a "grid" block that flags override."""
    from .spectral import TubeGrid
    from .tube import TubeSpec

    d = json.loads(Path(args.spec).read_text())
    spec = TubeSpec.from_dict(d)
    g = d.get("grid", {})
    n_s = args.n_s or int(g.get("n_s", 64))
    n_t = args.n_t or int(g.get("n_t", 16))
    grid = TubeGrid.build(tuple(d["interval"]), spec.section, n_s, n_t)
    return spec, grid


def cmd_frame(args):
    from .curve import build_from_curvatures, rpaf_from_embedding
    from .io import FRAME_COLUMNS, frame_table, read_curvatures, read_curve, write_table

    if args.mode == "embed":
        curve = read_curve(args.inp)
        frame, pair = rpaf_from_embedding(curve, ctol=args.ctol)
        grid = curve.grid
    else:
        grid, k1, k2, _ = read_curvatures(args.inp)
        _, frame, pair = build_from_curvatures(k1, k2, grid)
    table = frame_table(grid, frame, pair)
    if args.out:
        write_table(args.out, FRAME_COLUMNS, table)
    else:
        np.savetxt(sys.stdout, table, header=" ".join(FRAME_COLUMNS), fmt="%.17g")


def cmd_mollify(args):
    from .io import format_table, grid_of, read_table, write_table
    from .mollify import SampledFunction, sigma, steklov, steklov_derivative

    d = read_table(args.inp)
    if d.shape[1] != 2:
        raise ValueError("expected two columns: s, f")
    f = SampledFunction(grid_of(d[:, 0]), d[:, 1], args.mode)
    s = f.grid.nodes
    if args.emit == "sigma":
        rows = [(dl, sigma(f, dl, cell_length=args.cell_length, origin=s[0],
                           interior=args.interior)) for dl in args.delta]
        cols = ("delta", "sigma")
    else:
        op = steklov if args.emit == "smooth" else steklov_derivative
        vals = [op(f, dl, at=s) for dl in args.delta]
        rows = np.column_stack([s, *vals])
        cols = ("s", *(f"delta={dl:g}" for dl in args.delta))
    if args.out:
        write_table(args.out, cols, rows)
    else:
        sys.stdout.write(format_table(cols, rows))


def cmd_cross(args):
    from .crosssec import cross_eigs, parse_shape

    _emit(cross_eigs(parse_shape(args.shape), args.n, refine=args.refine).summary(), args.out)


def cmd_tube(args):
    from .crosssec import TransverseGrid
    from .tube import TubeSpec, classify_twist, epsilon_max, jacobians, metric_bundle

    spec = TubeSpec.from_dict(json.loads(Path(args.spec).read_text()))
    sched = _schedule(args.schedule) if args.schedule else None
    nodes = spec.grid.nodes
    s = nodes[np.linspace(0, nodes.size - 1, min(nodes.size, 257)).astype(int)]
    t = TransverseGrid.build(spec.section, args.n_t).coords
    jac = jacobians(spec, sched, s=s, t=t, check=False)
    out = {"min_h": float(np.min(jac.h)), "min_h_eps": float(np.min(jac.h_eps)),
           "eps": spec.eps, "eps_max": epsilon_max(spec, spec.section, 0.25)}
    out["twist_class"], out["twist_reason"] = classify_twist(spec)
    if args.check:
        if out["min_h"] > 0:
            met = metric_bundle(jac, spec.eps)
            det = np.linalg.det(met.G)
            out["detG_residual"] = float(np.max(np.abs(det - met.detG) / met.detG))
        else:
            out["detG_residual"] = None
        out["admissible"] = out["min_h"] > 0 and out["min_h_eps"] > 0
    out["notes"] = list(jac.notes)
    _emit(out, args.out)
    if args.check and not out["admissible"]:
        return 1


def cmd_spectrum(args):
    from .spectral import assemble_3d, flatten, lowest_eigs, renormalize
    from .spectral.operators import h0_for, heff_for

    spec, grid = _load_spec(args)
    E1 = grid.cross.E1
    if args.mode == "heff":
        op = heff_for(spec, grid)
    elif args.mode == "h0":
        op = h0_for(spec, grid)
    else:
        sched = _schedule(args.schedule) if args.mode == "mollified" else None
        op = renormalize(flatten(assemble_3d(spec, grid, args.mode, sched)), spec.eps, E1)
    lam = -10 * spec.kappa_sup**2 - 1
    w, _ = lowest_eigs(op, args.m, sigma_shift=None if args.mode == "heff" else lam)
    _emit({"mode": args.mode, "eps": spec.eps, "m": args.m, "eigenvalues": w,
           "grid": grid.describe(), "E1_disc": E1}, args.out)


def cmd_gap(args):
    from .spectral import (GapResult, assemble_3d, bound_constants, flatten, lowest_eigs,
                           rate_bracket, renormalize, resolvent_norm_gap)
    from .spectral.operators import heff_for

    spec, grid = _load_spec(args)
    cross, kappa = grid.cross, spec.kappa_sup
    lam = args.lam if args.lam is not None else -10 * kappa**2 - 1
    try:
        consts, note = bound_constants(spec.eps, kappa, cross.a, cross.E1, cross.E2, lam), None
    except ValueError as exc:
        if not lam < -9 * kappa**2:
            raise
        consts, note = None, str(exc)  # bracket without the explicit constants
    A = renormalize(flatten(assemble_3d(spec, grid, "direct")), spec.eps, cross.E1)
    H = heff_for(spec, grid)
    wa, _ = lowest_eigs(A, args.m, sigma_shift=lam)
    wh = np.linalg.eigvalsh(H.A.toarray())[: args.m]
    gap = resolvent_norm_gap(A, H, lam, cross.J1, kappa_sup=kappa)
    br = rate_bracket(spec.eps, spec.k1, spec.k2, spec.theta_dot, _schedule(args.schedule),
                      consts, interior=args.interior)
    extras = {"lambda": lam, "eig_A": wa, "eig_H": wh, "grid": grid.describe(),
              "sigma_tilde_explicit": br.get("sigma_tilde_explicit"),
              "sigma_tilde_symbolic": br.get("sigma_tilde_symbolic"),
              "constants": br.get("constants")}
    if note:
        extras["constants_note"] = note
    res = GapResult(spec.eps, np.abs(wa - wh), gap, br["bracket"], br["components"], extras)
    _emit(res.to_dict(), args.out)


def cmd_study(args):
    from .lab import StudyConfig, presets, run_study
    from .lab.report import write_report

    if args.preset:
        cfg = presets()[args.preset]
    else:
        cfg = StudyConfig.from_dict(json.loads(Path(args.config).read_text()))
    report = run_study(cfg, workers=args.workers)
    paths = write_report(report, args.out, figures=not args.no_figures)
    for a in report.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}: {a['detail']}")
    print(f"wrote {paths['csv']} and {paths['json']}")
    return 0 if report.passed else 1


def cmd_presets(args):
    from .lab import presets

    if args.name:
        _emit(presets()[args.name].to_dict(), None)
        return
    for name, cfg in presets().items():
        print(f"{name:28s} {cfg.description}")


def _add_tube_args(p):
    p.add_argument("--spec", required=True, help="tube JSON (interval, section, curvature, twist, eps)")
    p.add_argument("--n-s", type=int, default=None, help="interior longitudinal nodes (default 64)")
    p.add_argument("--n-t", type=int, default=None, help="transverse nodes per axis (default 16)")
    p.add_argument("--schedule", choices=SCHEDULES, default="lipschitz")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tubelab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("frame", help="frame table of a curve")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mode", choices=("embed", "curvatures"), required=True,
                   help="input rows: s,x,y[,z] (embed) or s,k1,k2[,theta] (curvatures)")
    p.add_argument("--ctol", type=float, default=None, help="unit-speed tolerance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_frame)

    p = sub.add_parser("mollify", help="moving averages and shift moduli of a sampled function")
    p.add_argument("--in", dest="inp", required=True, help="rows s, f")
    p.add_argument("--delta", type=float, nargs="+", required=True)
    p.add_argument("--emit", choices=("smooth", "derivative", "sigma"), required=True)
    p.add_argument("--mode", choices=("linear", "constant"), default="linear")
    p.add_argument("--cell-length", type=float, default=1.0)
    p.add_argument("--interior", action="store_true",
                   help="ignore windows reaching past the ends")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mollify)

    p = sub.add_parser("cross", help="transverse eigen-data of a section")
    p.add_argument("--shape", required=True, help="e.g. rectangle:2,1  disc:1  interval:0.5@0.5")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cross)

    p = sub.add_parser("tube", help="admissibility of a tube")
    p.add_argument("--spec", required=True)
    p.add_argument("--check", action="store_true", help="also verify det G; exit 1 if h <= 0")
    p.add_argument("--schedule", choices=SCHEDULES, default=None)
    p.add_argument("--n-t", type=int, default=32)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tube)

    p = sub.add_parser("spectrum", help="lowest eigenvalues of a discrete operator")
    _add_tube_args(p)
    p.add_argument("--mode", choices=("direct", "mollified", "heff", "h0"), default="direct")
    p.add_argument("--m", type=int, default=5)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("gap", help="eigenvalue and resolvent gaps against H_eff, with the bracket")
    _add_tube_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="spectral parameter (default -10 ||kappa||^2 - 1)")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--interior", action="store_true")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("study", help="run an eps sweep and write CSV, JSON and figures")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="StudyConfig JSON")
    src.add_argument("--preset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("presets", help="list scenarios, or print one as JSON")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"tubelab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
