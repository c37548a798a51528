import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from serrinlab.cli import main, parse_values, verify_exit_code, _set_path
from serrinlab.identities import FAIL, NOT_MET, PASS, IdentityReport
from serrinlab import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def header(path):
    out = {}
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("# ") and ": " in ln:
            k, v = ln[2:].split(": ", 1)
            out[k] = v
    return out


DISK = {"geometry": {"n": 2, "k": 0.0, "domain": {"type": "ball", "R": 1.0}}, "nonlinearity": {"coeffs": [2.0]}}
SPHERE_ANNULUS = {
    "geometry": {"n": 2, "k": 1.0, "domain": {"type": "annulus", "R_in": 0.5, "R_out": 1.2}},
    "nonlinearity": {"linear_family": True},
    "solver": {"method": "closed_form", "grid_size": 64},
}


def test_solve_disk_matches_torsion(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", write_cfg(tmp_path, DISK), "--out", str(out)]) == 0
    rows = read_csv(out / "solution.csv")
    r = np.array([float(x["r"]) for x in rows])
    u = np.array([float(x["u"]) for x in rows])
    assert np.abs(u - (1 - r**2) / 2).max() < 1e-10
    tr = read_csv(out / "traces.csv")
    assert float(tr[0]["u_nu"]) == pytest.approx(-1.0, abs=1e-10)
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["closure_defect"]) < 1e-10
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["config"]["solver"]["grid_size"] == 256
    assert resolved["config_digest"] == summary["config_digest"] == header(out / "solution.csv")["config_digest"]


def test_closed_form_header_constants(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", write_cfg(tmp_path, SPHERE_ANNULUS), "--out", str(out)]) == 0
    h = header(out / "solution.csv")
    assert float(h["a"]) == pytest.approx(math.cos(0.5) / math.cos(1.2) - 1, abs=1e-12)
    assert float(h["c0"]) == pytest.approx(-math.tan(1.2), abs=1e-12)
    assert float(h["c1"]) == pytest.approx(math.sin(0.5) / math.cos(1.2), abs=1e-12)
    assert h["schema_version"] == "1"


def test_verify_shipped_configs(tmp_path):
    for name in ("disk_torsion.json", "spherical_annulus.json"):
        out = tmp_path / name
        assert main(["verify", "--config", str(CONFIGS / name), "--out", str(out)]) == 0
        doc = json.loads((out / "reports.json").read_text())
        assert doc["error"] is None
        assert all(r["verdict"] in ("pass", "rigidity-threshold") for r in doc["reports"])
        rows = read_csv(out / "reports.csv")
        assert [r["name"] for r in rows] == [r["name"] for r in doc["reports"]]


def test_fem_solve_writes_mesh(tmp_path):
    doc = dict(DISK, solver={"method": "fem", "target_h": 0.1})
    out = tmp_path / "out"
    assert main(["solve", "--config", write_cfg(tmp_path, doc), "--out", str(out)]) == 0
    assert (out / "mesh.txt").exists()
    h = header(out / "solution.csv")
    assert int(h["triangles"]) > 0 and float(h["min_angle_deg"]) >= 20
    rows = read_csv(out / "solution.csv")
    x = np.array([[float(r["x"]), float(r["y"]), float(r["u"])] for r in rows])
    assert np.abs(x[:, 2] - (1 - x[:, 0] ** 2 - x[:, 1] ** 2) / 2).max() < 3e-3


def test_repeat_runs_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, dict(DISK, solver={"method": "fem", "target_h": 0.1}, checks=["soap_bubble"]))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--config", cfg, "--out", str(a)]) == 0
    assert main(["verify", "--config", cfg, "--out", str(b)]) == 0
    for name in ("reports.json", "reports.csv", "config.resolved.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("doc", [
    dict(DISK, bogus=1),
    {"geometry": {"n": 2, "domain": {"type": "annulus", "R_in": 1.0, "R_out": 0.5}}},
    {"geometry": {"n": 1, "domain": {"type": "ball", "R": 1.0}}},
    dict(DISK, checks=["nope"]),
    dict(DISK, solver={"method": "fem", "target_h": 0.1}, geometry={"n": 3, "domain": {"type": "ball", "R": 1.0}}),
    {"geometry": {"n": 2, "domain": {"type": "curve", "outer": {"a0": 1.0}}}, "solver": {"method": "radial"}},
])
def test_config_errors_exit_1(tmp_path, doc, capsys):
    assert main(["solve", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1
    assert "serrinlab:" in capsys.readouterr().err


def test_missing_config_exit_1(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_inadmissible_radius_exit_1(tmp_path):
    doc = {"geometry": {"n": 2, "k": 1.0, "domain": {"type": "ball", "R": 4.0}}}
    out = tmp_path / "o"
    assert main(["solve", "--config", write_cfg(tmp_path, doc), "--out", str(out)]) == 1
    assert json.loads((out / "error.json").read_text())["error"]["type"] == "InadmissibleDomain"


def test_degenerate_annulus_exit_2(tmp_path):
    doc = {"geometry": {"n": 2, "k": 1.0, "domain": {"type": "annulus", "R_in": 0.5, "R_out": math.pi / 2}},
           "solver": {"method": "closed_form"}}
    assert main(["solve", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2


def test_strict_hypothesis_exit_3(tmp_path):
    doc = dict(DISK, nonlinearity={"coeffs": [2.0, 3.0]}, checks=["heintze_karcher"])
    cfg = write_cfg(tmp_path, doc)
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "lax")]) == 0
    out = tmp_path / "strict"
    assert main(["verify", "--config", cfg, "--out", str(out), "--strict"]) == 3
    doc = json.loads((out / "reports.json").read_text())
    assert doc["error"]["type"] == "HypothesisNotMet"
    assert doc["reports"][0]["verdict"] == "hypothesis-not-met"


def test_single_boundary_check_on_annulus_exit_1(tmp_path):
    doc = dict(SPHERE_ANNULUS, checks=["heintze_karcher"])
    assert main(["verify", "--config", write_cfg(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1


def test_verify_exit_code_policy():
    rep = lambda v: IdentityReport("x", 0.0, 0.0, 0.0, 0.0, v)
    assert verify_exit_code([rep(PASS), rep(NOT_MET)]) == 0
    assert verify_exit_code([rep(PASS), rep(FAIL)]) == 4


def test_sweep_mesh_refinement(tmp_path):
    doc = dict(DISK, solver={"method": "fem"}, checks=["soap_bubble", "shear_stress"])
    out = tmp_path / "o"
    code = main(["sweep", "--config", write_cfg(tmp_path, doc), "--out", str(out),
                 "--param", "solver.target_h", "--values", "0.2,0.1,0.05"])
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok"] * 3
    res = np.array([abs(float(r["shear_stress.residual"])) for r in rows])
    ratios = res[:-1] / res[1:]
    assert np.all(ratios > 2.5), ratios


def test_sweep_toward_degenerate_annulus(tmp_path):
    out = tmp_path / "o"
    code = main(["sweep", "--config", write_cfg(tmp_path, SPHERE_ANNULUS), "--out", str(out),
                 "--param", "geometry.domain.R_out", "--values", f"1.2,1.5,{math.pi / 2!r}"])
    assert code == 2
    rows = read_csv(out / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok", "ok", "error"]
    assert rows[-1]["error"].startswith("DegenerateAnnulus")
    # |a| blows up as cos(R_out) -> 0
    assert abs(float(rows[1]["a"])) > abs(float(rows[0]["a"]))


def test_sweep_amplitude_trend(tmp_path):
    doc = {"geometry": {"n": 2, "domain": {"type": "curve", "outer": {"a0": 1.0, "cos": [0.0, 0.0]}}},
           "nonlinearity": {"coeffs": [2.0]}, "solver": {"method": "fem", "target_h": 0.08}, "checks": ["soap_bubble"]}
    out = tmp_path / "o"
    assert main(["sweep", "--config", write_cfg(tmp_path, doc), "--out", str(out),
                 "--param", "geometry.domain.outer.cos.1", "--values", "0.0,0.1,0.2"]) == 0
    vals = [float(r["soap_bubble.lhs"]) for r in read_csv(out / "sweep.csv")]
    assert vals[0] < vals[1] < vals[2]


def test_sweep_bad_value_is_a_row(tmp_path):
    out = tmp_path / "o"
    code = main(["sweep", "--config", write_cfg(tmp_path, DISK), "--out", str(out),
                 "--param", "geometry.domain.R", "--values", "1.0,-1.0"])
    assert code == 1
    assert [r["status"] for r in read_csv(out / "sweep.csv")] == ["ok", "config-error"]


def test_parse_values_and_paths():
    assert parse_values("0.1, 2, true") == [0.1, 2, True]
    with pytest.raises(ConfigError):
        parse_values("abc")
    doc = {"a": {"b": [1.0]}}
    _set_path(doc, "a.b.2", 5.0)
    assert doc == {"a": {"b": [1.0, 0.0, 5.0]}}


def test_threads_env_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("SERRINLAB_THREADS", "zero")
    assert main(["solve", "--config", write_cfg(tmp_path, DISK), "--out", str(tmp_path / "o")]) == 1


def test_console_script_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "serrinlab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("serrinlab ")
