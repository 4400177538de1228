import csv
import json
import math

import numpy as np
import pytest
from scipy.stats import linregress

from tubelab.lab import StudyConfig, fit_rate, grid_sizes, presets, run_study, write_report
from tubelab.lab.report import csv_columns
from tubelab.lab.study import evaluate_expectations
from tubelab.mollify import MollifierSchedule, shipped_schedules

PI = math.pi


# ---------------------------------------------------------------- fit_rate


def test_fit_exact_linear():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    f = fit_rate(zip(eps, eps))
    assert f.slope == pytest.approx(1.0, abs=1e-12)
    assert f.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_cube_root_with_intercept():
    eps = np.array([0.2, 0.1, 0.05])
    f = fit_rate(zip(eps, 3 * eps ** (1 / 3)))
    assert f.slope == pytest.approx(1 / 3, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3), abs=1e-12)


def test_fit_mixed_rate_against_direct_regression():
    eps = np.geomspace(1e-3, 1e-1, 9)
    vals = eps + 0.1 * np.sqrt(eps)
    f = fit_rate(zip(eps, vals))
    # independent oracle: normal equations of the log-log least squares problem
    X = np.column_stack([np.ones_like(eps), np.log(eps)])
    coef = np.linalg.solve(X.T @ X, X.T @ np.log(vals))
    assert f.slope == pytest.approx(coef[1], rel=1e-10)
    assert 0.5 < f.slope < 1.0
    lo, hi = f.band
    assert lo < f.slope < hi


@pytest.mark.parametrize("pts", [[(0.1, 1.0), (0.05, 0.5)], [(0.1, 1.0), (0.05, 0.0), (0.02, 1.0)],
                                 [(0.1, 1.0), (-0.05, 0.5), (0.02, 1.0)]])
def test_fit_rejects_bad_points(pts):
    with pytest.raises(ValueError):
        fit_rate(pts)


# ---------------------------------------------------------------- config


def _strip_config(**kw):
    base = dict(name="tiny", tube={"interval": [0, PI], "section": "interval:0.5@0.5",
                                   "n_data": 801,
                                   "curvature": {"k1": {"kind": "bump", "amplitude": 1.0,
                                                        "length": PI}}},
                eps_list=(0.2, 0.1, 0.05), n_s_base=10, n_t=16,
                checks=("eigs", "gap", "mode_gap", "lower_bound", "perp"))
    base.update(kw)
    return StudyConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError, match="decreasing"):
        _strip_config(eps_list=(0.1, 0.2, 0.05))
    with pytest.raises(ValueError, match="positive"):
        _strip_config(eps_list=(0.1, -0.1))
    with pytest.raises(ValueError, match="unknown checks"):
        _strip_config(checks=("eigs", "fourier"))
    with pytest.raises(ValueError, match="epsilon_max"):
        _strip_config(eps_list=(0.4, 0.2))
    with pytest.raises(ValueError):
        _strip_config(n_t_rule="cubic")


def test_config_json_roundtrip():
    cfg = _strip_config(schedule=MollifierSchedule.two_thirds(), expect={"gap_slope": [0.8, 1.2]})
    back = StudyConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_config_from_preset_with_override():
    cfg = StudyConfig.from_dict({"preset": "bent-arc-2d", "eps_list": [0.2, 0.1, 0.05]})
    assert cfg.eps_list == (0.2, 0.1, 0.05)
    assert cfg.tube == presets()["bent-arc-2d"].tube


def test_grid_rule():
    cfg = _strip_config()
    for eps in cfg.eps_list:
        n_s, n_t = grid_sizes(cfg, eps)
        edges = n_s + 1
        assert edges >= cfg.n_s_base * eps**-0.5
        assert PI / edges <= cfg.schedule.delta(eps) / 8 + 1e-12
        assert n_t == 16
    sq = _strip_config(n_t_rule="sqrt")
    assert grid_sizes(sq, 0.05)[1] == math.ceil(16 * 2)


def test_grid_rule_alignment():
    cfg = presets()["sawtooth-2d"]
    for eps in cfg.eps_list:
        n_s, _ = grid_sizes(cfg, eps)
        assert (n_s + 1) % 4 == 0  # unit period on [0, 4]: breakpoints fall on nodes


# ---------------------------------------------------------------- presets


def test_preset_catalogue():
    names = set(presets())
    assert names == {"straight", "twisted-straight", "bent-arc-2d", "bent-arc-3d", "helix-rpaf",
                     "helix-frenet", "sawtooth-2d", "oscillating-counterexample"}
    for cfg in presets().values():
        assert cfg.description
        if cfg.kind == "operator":
            spec = cfg.spec(cfg.eps_list[-1])
            assert spec.eps == cfg.eps_list[-1]


def test_helix_presets_differ_by_frenet_twist():
    p = presets()
    rpaf, frenet = p["helix-rpaf"].spec(0.1), p["helix-frenet"].spec(0.1)
    assert rpaf.theta_dot.sup_norm == 0.0
    tau = 0.5 / (1 + 0.25)
    assert np.allclose(frenet.theta_dot.values, tau)
    assert rpaf.kappa_sup == pytest.approx(1 / 1.25, rel=1e-12)


def test_oscillating_witness():
    rep = run_study(presets()["oscillating-counterexample"])
    last = rep.rows[-1]
    for sched in shipped_schedules():
        assert last[f"sigma_k[{sched.family}]"] >= 0.5
    assert rep.passed


# ---------------------------------------------------------------- studies


@pytest.fixture(scope="module")
def tiny_report():
    return run_study(_strip_config(expect={"gap_monotone": True, "lower_bound_slack": 0.1,
                                           "perp_fraction": 0.5}))


def test_study_rows_and_fits(tiny_report):
    rows = tiny_report.rows
    assert [r["eps"] for r in rows] == [0.2, 0.1, 0.05]
    for r in rows:
        assert r["resolvent_gap"] >= 0 and r["bracket"] > 0
        assert r["min_spec_mollified"] >= r["lower_bound"] - 0.1
    assert "resolvent_gap" in tiny_report.fits
    assert tiny_report.passed


def test_study_is_deterministic(tiny_report, tmp_path):
    again = run_study(tiny_report.config)
    a = write_report(tiny_report, tmp_path / "a", figures=False)
    b = write_report(again, tmp_path / "b", figures=False)
    assert a["csv"].read_bytes() == b["csv"].read_bytes()


def test_report_files(tiny_report, tmp_path):
    paths = write_report(tiny_report, tmp_path)
    with open(paths["csv"]) as fh:
        header = next(csv.reader(fh))
    assert header[:6] == ["eps", "n_s", "n_t", "eig_gap_1", "eig_gap_2", "eig_gap_3"]
    assert header[6:8] == ["resolvent_gap", "bracket"]
    assert header == csv_columns(tiny_report)
    data = json.loads(paths["json"].read_text())
    assert data["passed"] is True and len(data["rows"]) == 3
    assert data["fits"]["resolvent_gap"]["n"] == 3
    png = paths["figures"][0]
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert not list(tmp_path.glob(".*.tmp"))


def test_failed_rows_are_recorded():
    cfg = _strip_config(eps_list=(0.2, 0.1, 0.05), lam=-0.5)  # lambda above -9 kappa^2
    with pytest.raises(RuntimeError, match="every eps row failed"):
        run_study(cfg)


def test_refinement_gate_at_largest_eps():
    # halving ds and dt changes the reported gap by less than 20%
    cfg = _strip_config(eps_list=(0.2,), checks=("gap",), n_s_base=20, n_t=24)
    fine = _strip_config(eps_list=(0.2,), checks=("gap",), n_s_base=40, n_t=49)
    g0 = run_study(cfg).rows[0]["resolvent_gap"]
    g1 = run_study(fine).rows[0]["resolvent_gap"]
    assert abs(g1 - g0) / g1 < 0.2


def test_expectation_checks_fail_when_violated():
    cfg = _strip_config(expect={"gap_monotone": True, "mode_gap_monotone": True,
                                "perp_fraction": 0.5, "lower_bound_slack": 0.1})
    rows = [
        {"eps": 0.2, "resolvent_gap": 1.0, "mode_gap": 1e-5, "perp_min": 10.0, "perp_scale": 100.0,
         "min_spec_mollified": -5.0, "lower_bound": -1.0},
        {"eps": 0.1, "resolvent_gap": 2.0, "mode_gap": 2e-5, "perp_min": 400.0,
         "perp_scale": 400.0, "min_spec_mollified": 0.0, "lower_bound": -1.0},
    ]
    out = {a["name"]: a["passed"] for a in evaluate_expectations(cfg, rows, {})}
    assert out == {"gap_monotone": False, "mode_gap_monotone": False, "perp_coercivity": False,
                   "lower_bound": False}


def test_mode_gap_roundoff_floor():
    cfg = _strip_config(expect={"mode_gap_monotone": True})
    rows = [{"eps": 0.2, "mode_gap": 1e-13}, {"eps": 0.1, "mode_gap": 5e-12}]
    assert evaluate_expectations(cfg, rows, {})[0]["passed"]
