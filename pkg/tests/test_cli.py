"""Command-line interface: dispatch, exit codes, outputs, determinism."""

import json

import pytest

from tbsite.cli import main

TINY_CONVERGE = {
    "experiment": "converge",
    "model": {"kT": 0.4},
    "study": {
        "schedule": [[2.5, 1.2], [3.5, 1.5]],
        "reference": [6.0, 2.5],
        "gtol": 1e-5,
        "max_iter": 300,
    },
}


@pytest.fixture()
def tiny_converge_cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY_CONVERGE))
    return path


def test_converge_writes_outputs(tmp_path, tiny_converge_cfg):
    out = tmp_path / "results"
    code = main(["converge", "--config", str(tiny_converge_cfg), "--out", str(out), "--threads", "1"])
    assert code == 0
    for name in ("converge.csv", "slopes.json", "run.json"):
        assert (out / name).exists(), name
    run = json.loads((out / "run.json").read_text())
    assert run["config"]["experiment"] == "converge"
    assert "seed" in run


def test_rerun_identical_bytes(tmp_path, tiny_converge_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["converge", "--config", str(tiny_converge_cfg), "--out", str(a), "--threads", "1"]) == 0
    assert main(["converge", "--config", str(tiny_converge_cfg), "--out", str(b), "--threads", "1"]) == 0
    assert (a / "converge.csv").read_bytes() == (b / "converge.csv").read_bytes()
    assert (a / "slopes.json").read_bytes() == (b / "slopes.json").read_bytes()


def test_spectrum_smoke(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "spectrum", "geometry": {"R": 3.0}}))
    out = tmp_path / "out"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "spectrum.csv").exists()


def test_site_energies_smoke(tmp_path):
    out = tmp_path / "out"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "site-energies", "geometry": {"R": 2.5}}))
    assert main(["site-energies", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "site_energies.csv").exists()


def test_relax_flags_override(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "relax",
            "--out",
            str(out),
            "--R",
            "2.5",
            "--Rbuf",
            "1.2",
            "--gtol",
            "1e-4",
            "--max-iter",
            "200",
        ]
    )
    assert code == 0
    doc = json.loads((out / "relax.json").read_text())
    assert doc["config"]["relax"]["R"] == 2.5
    assert doc["converged"] is True


def test_missing_config_file_exit_1(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "absent.json")]) == 1


def test_unknown_subcommand_exit_1(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exit_1(capsys):
    assert main(["spectrum", "--bogus"]) == 1


def test_no_command_exit_1():
    assert main([]) == 1


def test_mismatched_experiment_exit_1(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "spectrum"}))
    assert main(["locality", "--config", str(cfg)]) == 1


def test_solver_failure_exit_2(tmp_path, monkeypatch):
    import numpy as np

    import tbsite.cli as cli

    def boom(cfg, out=None):
        raise np.linalg.LinAlgError("synthetic solver failure")

    monkeypatch.setitem(cli._DISPATCH, "spectrum", boom)
    assert main(["spectrum", "--out", str(tmp_path / "out")]) == 2


def test_tb_out_env_overrides(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "spectrum", "geometry": {"R": 2.5}}))
    env_dir = tmp_path / "env_out"
    monkeypatch.setenv("TB_OUT", str(env_dir))
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "flag_out")]) == 0
    assert (env_dir / "spectrum.csv").exists()
    assert not (tmp_path / "flag_out").exists()
