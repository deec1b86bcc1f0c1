import csv
import json
from pathlib import Path

import numpy as np
import pytest

from twospin_cs.cli import main
from twospin_cs.integrator import integrate
from twospin_cs.io import build_run_config, load_config_file, read_trajectory_csv, states_from_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# simulate ----------------------------------------------------------------------


def test_simulate_zero_spin(tmp_path, capsys):
    assert main(["simulate", "--config", str(CONFIGS / "zero_spin.yaml"), "--out", str(tmp_path)]) == 0
    header, data = read_trajectory_csv(tmp_path / "zero_spin.csv")
    assert np.abs(data[:, header.index("drift_H")]).max() <= 1e-12
    meta = json.loads((tmp_path / "zero_spin.json").read_text())
    assert meta["invariants"]["H"]["max_relative_drift"] <= 1e-12
    assert meta["seed"] == 1 and meta["config"]["N"] == 3
    assert "drift H" in capsys.readouterr().out


def test_simulate_is_byte_identical(tmp_path):
    cfg = str(CONFIGS / "run.json")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "run_json.csv").read_bytes()
    assert a and a == (tmp_path / "b" / "run_json.csv").read_bytes()


def test_simulate_bc1_oscillates(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "bc1_two_body.yaml"), "--out", str(tmp_path)]) == 0
    states = states_from_csv(tmp_path / "bc1.csv")
    assert len(states) > 10
    gap = np.array([s.u[0] - s.u[1] for s in states])
    # bounded relative coordinate that turns around at least once
    assert gap.min() > 0.2 and gap.max() < 4.0
    assert np.any(np.diff(np.sign(np.diff(gap))) != 0)
    # spins are constants of the two-body motion
    assert all(s.S_upper[0] == 1.0 and s.T_upper[0] == 0.5 for s in states)


def test_simulate_malformed_yaml_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.yaml", "N: 3\nintegrator:\n  tol: [1e-8\n")
    assert main(["simulate", "--config", cfg]) == 2
    assert f"{cfg}:" in capsys.readouterr().err


def test_simulate_malformed_json_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", '{\n  "N": 3,\n  "seed": ,\n}')
    assert main(["simulate", "--config", cfg]) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_simulate_missing_config_exit_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.yaml")]) == 2


def test_simulate_initial_overlap_exit_2(tmp_path):
    cfg = write(tmp_path, "c.yaml",
                "N: 2\nstate:\n  u: [0.0, 0.0]\n  v: [0, 0]\n  S_upper: [1]\n  T_upper: [0]\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("method", ["rk4", "adaptive"])
def test_simulate_collision_exit_3(tmp_path, capsys, method):
    # equal couplings leave a finite barrier that the pair runs through
    cfg = write(tmp_path, "c.yaml",
                "N: 2\nstate:\n  u: [1.0, 0.0]\n  v: [-1.0, 1.0]\n  S_upper: [1]\n  T_upper: [1]\n"
                f"integrator:\n  method: {method}\n  t_end: 3\n  dt: 0.01\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "aborted" in capsys.readouterr().err
    assert not (tmp_path / "trajectory.csv").exists()


def test_tol_override(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "run.json"), "--out", str(tmp_path), "--tol", "1e-6"]) == 0
    meta = json.loads((tmp_path / "run_json.json").read_text())
    assert meta["config"]["integrator"]["tol"] == 1e-6


# verify ------------------------------------------------------------------------


def test_verify_single_check(capsys):
    assert main(["verify", "--check", "r15", "--N", "3", "--seeds", "2"]) == 0
    out = capsys.readouterr()
    recs = [json.loads(l) for l in out.out.splitlines()]
    assert [(r["check"], r["N"], r["seed"]) for r in recs] == [("r15", 3, 0), ("r15", 3, 1)]
    assert all(r["pass"] for r in recs)
    assert "2/2 passed" in out.err


def test_verify_failure_exit_1(capsys):
    assert main(["verify", "--check", "lax", "--N", "3", "--seeds", "1", "--tol", "0"]) == 1


def test_verify_unknown_check_exit_2(capsys):
    assert main(["verify", "--check", "lax,bogus"]) == 2
    assert "bogus" in capsys.readouterr().err


def test_verify_needs_selection(capsys):
    assert main(["verify"]) == 2


def test_verify_bad_n_list(capsys):
    assert main(["verify", "--check", "lax", "--N", "3,x"]) == 2
    assert main(["verify", "--check", "lax", "--N", "1"]) == 2


def test_verify_from_config_writes_jsonl(tmp_path, capsys):
    assert main(["verify", "--config", str(CONFIGS / "run.json"), "--seeds", "1", "--out", str(tmp_path)]) == 0
    recs = [json.loads(l) for l in (tmp_path / "verify.jsonl").read_text().splitlines()]
    assert [(r["check"], r["N"]) for r in recs] == [("lax", 4), ("r15", 4)]


def test_argparse_usage_error_exit_2(capsys):
    assert main(["simulate"]) == 2
    assert main(["frobnicate"]) == 2


# scan --------------------------------------------------------------------------


def test_scan_tolerance_drift_monotone(tmp_path):
    assert main(["scan", "--config", str(CONFIGS / "scan_tolerance.yaml"), "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "scan_tolerance.csv")
    assert [float(x["integrator.tol"]) for x in r] == [1e-8, 1e-10, 1e-12]
    assert all(x["status"] == "ok" for x in r)
    drift = [float(x["max_drift"]) for x in r]
    assert drift[0] > drift[1] > drift[2]
    assert drift[2] < 1e-10


def test_scan_angles_to_free_flight(tmp_path):
    assert main(["scan", "--config", str(CONFIGS / "scan_angles.yaml"), "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "scan_angles.csv")
    drift = [float(x["max_drift"]) for x in r]
    assert all(d <= 10 * 1e-10 for d in drift)
    assert drift[0] > drift[1] > drift[2] > drift[3] == 0.0


def test_weak_spins_approach_free_flight():
    raw = load_config_file(CONFIGS / "scan_angles.yaml")
    raw.data.pop("grid")
    errs = []
    for scale in (0.1, 0.01, 0.001):
        raw.data["angle_scale"] = scale
        cfg = build_run_config(raw)
        s0 = cfg.initial()
        tr = integrate(s0, cfg.integrator)
        free = s0.u + s0.v * tr.times[-1]
        errs.append(np.abs(tr.states[-1].u - free).max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_scan_csv_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "s.yaml",
                "N: 3\nseed: 2\nintegrator:\n  t_end: 1\ngrid:\n  integrator.tol: [1e-8, 1e-9]\n")
    assert main(["scan", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["scan", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    assert (tmp_path / "a" / "scan.csv").read_bytes() == (tmp_path / "b" / "scan.csv").read_bytes()
    meta = json.loads((tmp_path / "a" / "scan.json").read_text())
    assert len(meta["point_runtime_s"]) == 2


def test_scan_empty_grid_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "s.yaml", "N: 3\ngrid:\n  integrator.tol: []\n")
    assert main(["scan", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "grid is empty" in capsys.readouterr().err
    cfg = write(tmp_path, "t.yaml", "N: 3\n")
    assert main(["scan", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_scan_failed_point_exit_1(tmp_path):
    cfg = write(tmp_path, "s.yaml",
                "N: 2\nstate:\n  u: [1.0, 0.0]\n  v: [-1.0, 1.0]\n  S_upper: [1]\n  T_upper: [1]\n"
                "integrator:\n  method: rk4\n  t_end: 3\ngrid:\n  integrator.dt: [0.01]\n")
    assert main(["scan", "--config", cfg, "--out", str(tmp_path)]) == 1
    (r,) = rows(tmp_path / "scan.csv")
    assert r["status"].startswith("abort")
