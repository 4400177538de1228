import json
import math

import numpy as np
import pytest

from tubelab.cli import main

PI = math.pi


@pytest.fixture
def tube_json(tmp_path):
    def make(**kw):
        d = {"interval": [0, PI], "section": "rectangle:2,1", "eps": 0.1, "n_data": 201,
             "grid": {"n_s": 12, "n_t": 16}}
        d.update(kw)
        p = tmp_path / "tube.json"
        p.write_text(json.dumps(d))
        return str(p)

    return make


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_frame_from_curvatures_closes_circle(tmp_path):
    s = np.linspace(0, 2 * PI, 801)
    src = tmp_path / "k.txt"
    np.savetxt(src, np.column_stack([s, np.ones_like(s), np.zeros_like(s)]))
    out = tmp_path / "frame.csv"
    assert main(["frame", "--in", str(src), "--mode", "curvatures", "--out", str(out)]) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows.shape == (801, 13)
    assert np.allclose(rows[0, 1:4], rows[-1, 1:4], atol=1e-9)  # tangent returns
    assert np.allclose(rows[:, 12], 1.0)


def test_frame_from_embedding(tmp_path, capsys):
    s = np.linspace(0, PI, 1001)
    src = tmp_path / "c.txt"
    np.savetxt(src, np.column_stack([s, np.cos(s), np.sin(s)]), delimiter=",")
    assert main(["frame", "--in", str(src), "--mode", "embed"]) == 0
    rows = np.loadtxt(capsys.readouterr().out.splitlines()[1:])
    assert np.allclose(rows[5:-5, 12], 1.0, atol=1e-6)


def test_frame_rejects_uneven_grid(tmp_path, capsys):
    src = tmp_path / "bad.txt"
    np.savetxt(src, np.array([[0, 1, 0], [0.1, 1, 0], [0.3, 1, 0], [0.35, 1, 0]]))
    assert main(["frame", "--in", str(src), "--mode", "curvatures"]) == 2
    assert "uniformly" in capsys.readouterr().err


def test_mollify_sigma_sweep(tmp_path, capsys):
    s = np.linspace(0, 3 * PI, 3001)
    src = tmp_path / "f.txt"
    np.savetxt(src, np.column_stack([s, np.sign(np.sin(s))]))
    assert main(["mollify", "--in", str(src), "--delta", "0.4", "0.2", "0.1", "--emit", "sigma",
                 "--mode", "constant", "--cell-length", str(PI), "--interior"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "delta,sigma"
    sig = [float(l.split(",")[1]) for l in lines[1:]]
    assert sig[0] > sig[1] > sig[2] > 0


def test_mollify_smooth_and_derivative(tmp_path, capsys):
    s = np.linspace(0, 4, 401)
    src = tmp_path / "f.txt"
    np.savetxt(src, np.column_stack([s, 2 * s]))
    out = tmp_path / "d.csv"
    assert main(["mollify", "--in", str(src), "--delta", "0.5", "--emit", "derivative",
                 "--out", str(out)]) == 0
    d = np.loadtxt(out, delimiter=",", skiprows=1)
    inner = (d[:, 0] > 0.25) & (d[:, 0] < 3.75)
    assert np.allclose(d[inner, 1], 2.0)


def test_cross_json(capsys):
    assert main(["cross", "--shape", "rectangle:1,1", "--n", "16", "--refine"]) == 0
    d = _json(capsys)
    assert d["extrapolated"]["E1"] == pytest.approx(2 * PI**2, rel=1e-3)
    assert d["E2"] > d["E1"]
    assert set(d) >= {"E1", "E2", "C_omega", "a", "circular", "grid", "extrapolated"}


def test_tube_check(tube_json, capsys):
    assert main(["tube", "--spec", tube_json(curvature={"k1": 1.0}), "--check"]) == 0
    d = _json(capsys)
    assert d["min_h"] == pytest.approx(1 - 0.1 * 1.0, abs=0.02)
    assert d["detG_residual"] < 1e-12
    assert d["twist_class"] == "untwisted"
    assert d["eps_max"] == pytest.approx(0.25 / math.sqrt(1.25), rel=1e-9)


def test_tube_check_inadmissible(tube_json, capsys):
    assert main(["tube", "--spec", tube_json(curvature={"k1": 5.0}, eps=0.5), "--check"]) == 1
    assert _json(capsys)["admissible"] is False


@pytest.mark.parametrize("mode", ["direct", "mollified", "heff", "h0"])
def test_spectrum_modes(tube_json, capsys, mode):
    assert main(["spectrum", "--spec", tube_json(twist=1.0), "--mode", mode, "--m", "2"]) == 0
    d = _json(capsys)
    assert len(d["eigenvalues"]) == 2
    # ground energy of the unit-rate twisted straight tube of length pi: 1 + C_omega
    assert d["eigenvalues"][0] == pytest.approx(1.0 + 0.877, abs=0.1)


def test_gap_result_json(tube_json, capsys):
    assert main(["gap", "--spec", tube_json(curvature={"k1": {"kind": "bump", "amplitude": 0.5,
                                                              "length": PI}}),
                 "--n-s", "10"]) == 0
    d = _json(capsys)
    assert d["resolvent_gap"] >= 0
    assert set(d["components"]) == {"eps_term", "steklov_deriv_terms", "sigma_k", "sigma_theta"}
    assert d["lambda"] == pytest.approx(-10 * 0.25 - 1)
    assert d["constants"] is None and "coercivity" in d["constants_note"]
    assert main(["gap", "--spec", tube_json(curvature={"k1": 0.2}, eps=0.02), "--n-s", "8"]) == 0
    d = _json(capsys)
    assert d["constants"]["C4"] is None and d["sigma_tilde_explicit"] > 0
    assert main(["gap", "--spec", tube_json(curvature={"k1": 1.0}), "--lambda", "-2"]) == 2


def _study_config(tmp_path, expect):
    cfg = {"name": "cli-strip", "eps_list": [0.2, 0.1, 0.05], "n_s_base": 10, "n_t": 16,
           "tube": {"interval": [0, PI], "section": "interval:0.5@0.5", "n_data": 801,
                    "curvature": {"k1": {"kind": "bump", "amplitude": 1.0, "length": PI}}},
           "checks": ["eigs", "gap"], "expect": expect}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_study_exit_codes(tmp_path, capsys):
    out = tmp_path / "out"
    ok = _study_config(tmp_path, {"gap_monotone": True})
    assert main(["study", "--config", ok, "--out", str(out)]) == 0
    assert (out / "cli-strip.csv").exists() and (out / "cli-strip_rates.png").exists()
    assert "PASS" in capsys.readouterr().out
    bad = _study_config(tmp_path, {"gap_slope": [5.0, 6.0]})
    assert main(["study", "--config", bad, "--out", str(out), "--no-figures"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "helix-frenet" in out and "sawtooth-2d" in out
    assert main(["presets", "straight"]) == 0
    assert _json(capsys)["name"] == "straight"
