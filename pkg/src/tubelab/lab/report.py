"""CSV and JSON output of study reports."""

from __future__ import annotations

from pathlib import Path

from ..io import atomic_write, dumps_json, write_table

__all__ = ["csv_columns", "write_report"]

LEADING = ("eps", "n_s", "n_t")
TRAILING = ("resolvent_gap", "bracket", "eps_term", "steklov_deriv_terms", "sigma_k",
            "sigma_theta")


def csv_columns(report) -> list:
    """eps, n_s, n_t, eig_gap_1..m, resolvent_gap, bracket and its components, then the rest."""
    seen = []
    for r in report.rows:
        seen += [k for k in r if k not in seen]
    m = report.config.m
    head = [c for c in LEADING if c in seen]
    head += [f"eig_gap_{k + 1}" for k in range(m) if f"eig_gap_{k + 1}" in seen]
    head += [c for c in TRAILING if c in seen]
    rest = [c for c in seen if c not in head and c != "error"]
    return head + rest + (["error"] if "error" in seen else [])


def write_report(report, out_dir, figures: bool = True) -> dict:
    """Write <name>.csv, <name>.json and, optionally, <name>_rates.png into ``out_dir``.

    Each file is replaced atomically; returns the written paths by kind.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = report.config.name
    paths = {
        "csv": write_table(out / f"{name}.csv", csv_columns(report), report.rows),
        "json": atomic_write(out / f"{name}.json", dumps_json(report.to_dict())),
    }
    if figures:
        from .plotting import render_figures

        paths["figures"] = render_figures(report, out)
    return paths
