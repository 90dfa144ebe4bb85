import json
from pathlib import Path

import numpy as np
import pytest

from hardy_bvp import __version__, io
from hardy_bvp.cli import main
from hardy_bvp.lattice import FrequencyLattice

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _run(tmp_path, command, config=None, *extra):
    args = [command, "--out", str(tmp_path), "--quiet"]
    if config:
        args += ["--config", str(CONFIGS / config)]
    return main(args + list(extra))


def _report(tmp_path, name="report.json"):
    return json.loads((tmp_path / name).read_text())


@pytest.mark.parametrize("command,config", [
    ("check", "check_identity.json"),
    ("solve", "solve_dir_identity.json"),
    ("solve", "solve_neu_jacobian.json"),
    ("solve", "solve_reg_constant.json"),
    ("scan-wp", "scan_wp_hermitean.json"),
    ("perturb", "perturb_identity.json"),
    ("rellich", "rellich_jacobian.json"),
    ("forms", "forms_k2.json"),
])
def test_shipped_configs_succeed(tmp_path, command, config):
    assert _run(tmp_path, command, config) == 0
    reports = list(tmp_path.glob("*.json"))
    assert reports
    body = json.loads(reports[0].read_text())
    assert body["command"] == command and body["version"] == __version__ and "seed" in body


def test_identity_check_report(tmp_path):
    assert _run(tmp_path, "check", "check_identity.json") == 0
    rep = _report(tmp_path)
    assert rep["accretivity"]["kappa_curlfree"] == pytest.approx(1.0)
    assert rep["accretivity"]["omega_hat"] == pytest.approx(0.0, abs=1e-12)
    flags = rep["classification"]
    assert flags["hermitean"] and flags["block"] and flags["constant"]
    assert rep["residuals"]["involution"] < 1e-14


def test_dirichlet_solve_writes_poisson_extension(tmp_path):
    assert _run(tmp_path, "solve", "solve_dir_identity.json") == 0
    lat = FrequencyLattice(1, 64)
    x = lat.points.reshape(-1)
    for t in (0.0, 0.5, 1.0, 2.0):
        tag = f"{t:g}".replace(".", "p")
        U = io.read_field_csv(tmp_path / f"potential_t{tag}.csv", lat, 1)
        assert np.allclose(U[0], np.exp(-t) * np.cos(x), atol=1e-9)
    rep = _report(tmp_path)
    assert rep["variational"]["error"] < 1e-3
    assert (tmp_path / "norm_curve.dat").exists()


def test_not_accretive_exit_code(tmp_path):
    assert _run(tmp_path, "check", "not_accretive.json") == 3
    assert _report(tmp_path)["accretive"] is False


def test_config_errors_exit_with_one(tmp_path):
    assert _run(tmp_path, "solve") == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"coefficients": {"kind": "identity", "n": 1, "m": 1}, "which": "neu",'
                   ' "N": 8, "data": {"terms": [{"component": 0, "mode": [0], "amplitude": 1.0,'
                   ' "type": "cos"}]}}')
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path), "--quiet"]) == 1
    assert main(["solve", "--config", str(tmp_path / "missing.json"), "--quiet"]) == 1


def test_invalid_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("HARDY_BVP_THREADS", "zero")
    assert _run(tmp_path, "check", "check_identity.json") == 1


def test_selftest_is_deterministic(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["selftest", "--out", str(a), "--quiet", "--seed", "7"]) == 0
    monkeypatch.setenv("HARDY_BVP_THREADS", "2")
    assert main(["selftest", "--out", str(b), "--quiet", "--seed", "7"]) == 0
    assert (a / "selftest.json").read_bytes() == (b / "selftest.json").read_bytes()
    rep = json.loads((a / "selftest.json").read_text())
    assert rep["passed"] and rep["seed"] == 7 and len(rep["checks"]) == 16


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_variational_check_needs_a_covered_class(tmp_path):
    cfg = {"coefficients": {"kind": "random", "n": 1, "m": 1, "N": 16, "seed": 3},
           "which": "dir", "N": 16, "t_levels": [0.0],
           "data": {"terms": [{"component": 0, "mode": [1], "amplitude": 1.0, "type": "cos"}]},
           "checks": {"variational": True, "K": 64}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["solve", "--config", str(path), "--out", str(tmp_path), "--quiet"]) == 0
    assert "skipped" in _report(tmp_path)["variational"]
    cfg["checks"]["assume_connected"] = True
    path.write_text(json.dumps(cfg))
    assert main(["solve", "--config", str(path), "--out", str(tmp_path), "--quiet"]) == 0
    assert _report(tmp_path)["variational"]["class_assumed"] is True
