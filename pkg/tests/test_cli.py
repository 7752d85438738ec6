import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from endodyn.cli import main
from endodyn.commands import SWEEP_HEADER
from endodyn.config import parse_config
from endodyn.engine import simulate
from endodyn.errors import ConfigError
from endodyn.io import read_json, read_trajectory_csv, trajectory_csv_text, write_trajectory_csv
from endodyn.models import AsyncHkModel, AsyncHkParams, HkParams

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

HK3 = {
    "model": {"kind": "hk_sync", "epsilon": 0.5},
    "m": 3,
    "x0": [0.0, 0.4, 1.0],
    "steps": 50,
    "master_seed": 7,
    "diagnostics": {"window": 10, "n_samples": 100, "probes": 3, "probe_horizon": 5},
}


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(tmp_path, command, data, out="out", *extra):
    cfg = write_config(tmp_path, data)
    return main([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


def with_diag(base, **diag):
    return {**base, "diagnostics": {**base["diagnostics"], **diag}}


# config parsing ---------------------------------------------------------------


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config({**HK3, "stpes": 10})
    with pytest.raises(ConfigError):
        parse_config(with_diag(HK3, n_sample=10))


def test_zero_steps_rejected(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({**HK3, "steps": 0})
    assert run_cli(tmp_path, "simulate", {**HK3, "steps": 0}) == 2


@pytest.mark.parametrize("x0", ["gauss(0,1)", [0.0, 1.0]])
def test_bad_initial_state_rejected(x0):
    with pytest.raises(ConfigError):
        parse_config({**HK3, "x0": x0})


def test_sweep_param_must_be_model_field():
    with pytest.raises(ConfigError):
        parse_config({**HK3, "sweep": {"param": "delta", "values": [0.1], "seeds": [0]}})


def test_defaults():
    cfg = parse_config({k: v for k, v in HK3.items() if k != "diagnostics"})
    d = cfg.diagnostics
    assert (d.tol_cluster, d.window, d.tol, d.tau, d.n_samples, d.probes) == (1e-6, 50, 1e-9, 1.0, 10000, 20)
    assert cfg.horizon == 150


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


def test_seed_flag_range(tmp_path):
    with pytest.raises(SystemExit):
        main(["simulate", "--config", write_config(tmp_path, HK3), "--seed", str(2**64)])


# CSV / JSON -----------------------------------------------------------------


def test_trajectory_csv_round_trip(tmp_path):
    traj = simulate(AsyncHkModel(AsyncHkParams(HkParams(5, 0.3))), np.random.default_rng(1).random(5), 300, 3)
    path = write_trajectory_csv(tmp_path / "t.csv", traj)
    steps, states = read_trajectory_csv(path)
    assert np.array_equal(states, traj.states)
    assert np.array_equal(steps, np.arange(301))
    header = path.read_text().splitlines()[0]
    assert header == "step,agent_0,agent_1,agent_2,agent_3,agent_4"


def test_csv_awkward_values_round_trip(tmp_path):
    vals = np.array([[0.1, 1 / 3, 5e-324, -0.0, 1e308, np.nextafter(1.0, 2.0)]])
    (tmp_path / "a.csv").write_text(trajectory_csv_text(vals))
    _, back = read_trajectory_csv(tmp_path / "a.csv")
    assert np.array_equal(back.view(np.uint64), vals.view(np.uint64))


# simulate ---------------------------------------------------------------------


def test_simulate_hk_sync_example(tmp_path):
    assert run_cli(tmp_path, "simulate", HK3) == 0
    out = tmp_path / "out"
    steps, states = read_trajectory_csv(out / "trajectory_r0.csv")
    assert len(steps) == 51 and np.all(np.diff(steps) > 0)
    assert np.allclose(states[-1], [0.2, 0.2, 1.0], atol=1e-9, rtol=0)
    summary = read_json(out / "summary.json")
    rep = summary["replicas"][0]
    assert rep["comparison"]["verdict"] == "equal"
    assert rep["clusters"]["blocks"] == [[1, 2], [3]]
    assert summary["config"]["master_seed"] == 7 and summary["schema_version"] == "1"


def test_simulate_replicas_differ_and_reproduce(tmp_path):
    data = {**HK3, "model": {"kind": "hk_async", "epsilon": 0.3}, "m": 5, "x0": "uniform(0,1)",
            "steps": 40, "replicas": 2}
    assert run_cli(tmp_path, "simulate", data, "a") == 0
    assert run_cli(tmp_path, "simulate", data, "b") == 0
    r0 = (tmp_path / "a" / "trajectory_r0.csv").read_bytes()
    r1 = (tmp_path / "a" / "trajectory_r1.csv").read_bytes()
    assert r0 != r1
    for name in ("trajectory_r0.csv", "trajectory_r1.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    data = {**HK3, "model": {"kind": "hk_async", "epsilon": 0.3}, "x0": "uniform(0,1)"}
    assert run_cli(tmp_path, "simulate", data, "a") == 0
    assert run_cli(tmp_path, "simulate", data, "b", "--seed", "8") == 0
    assert read_json(tmp_path / "b" / "summary.json")["master_seed"] == 8
    assert (tmp_path / "a" / "trajectory_r0.csv").read_bytes() != (tmp_path / "b" / "trajectory_r0.csv").read_bytes()


def test_not_converged_is_warning_not_crash(tmp_path):
    data = {**HK3, "steps": 3}
    assert run_cli(tmp_path, "simulate", data) == 0
    rep = read_json(tmp_path / "out" / "summary.json")["replicas"][0]
    assert rep["comparison"]["verdict"] == "warning"


def test_runtime_model_error_exit_code(tmp_path):
    data = {**HK3, "m": 4, "x0": "equally-spaced(0,1)",
            "model": {"kind": "gossip", "epsilon": 0.4, "gamma_low": 0.2, "gamma_high": 0.8,
                      "gamma": {"dist": "uniform", "low": 0.0, "high": 1.0}}}
    assert run_cli(tmp_path, "simulate", data) == 3


def test_invalid_model_parameters_are_config_errors(tmp_path):
    data = {**HK3, "model": {"kind": "hk_async", "epsilon": 0.3, "pick_probabilities": [0.5, 0.5, 0.5]}}
    assert run_cli(tmp_path, "simulate", data) == 2


# diagnose ---------------------------------------------------------------------


def test_diagnose_hk_sync_balancedness_deterministic(tmp_path):
    data = with_diag(HK3, checks=["balancedness"])
    assert run_cli(tmp_path, "diagnose", data) == 0
    block = read_json(tmp_path / "out" / "diagnostics.json")["checks"]["balancedness"]
    for probe in block["probes"]:
        assert probe["n_samples"] == 100
        for rec in probe["records"]:
            assert rec["ratio"] in (1.0, "+inf")
            assert rec["ratio_se"] == 0.0


def test_diagnose_lyapunov_consensus_zero(tmp_path):
    data = with_diag({**HK3, "model": {"kind": "hk_async", "epsilon": 0.3}, "x0": [0.4, 0.4, 0.4]},
                     checks=["lyapunov"], horizon=20, n_samples=50, n_inner=2)
    assert run_cli(tmp_path, "diagnose", data) == 0
    block = read_json(tmp_path / "out" / "diagnostics.json")["checks"]["lyapunov"]
    for probe in block["probes"]:
        assert probe["value"] == 0.0 and probe["next_mean"] == 0.0
    assert block["nonnegative"]


def test_diagnose_clusters_equal(tmp_path):
    data = with_diag(HK3, checks=["convergence", "clusters", "symmetric"])
    assert run_cli(tmp_path, "diagnose", data) == 0
    doc = read_json(tmp_path / "out" / "diagnostics.json")
    assert doc["verdicts"]["clusters"] == "equal"
    assert doc["verdicts"]["convergence"] == "converged"
    assert doc["hard_violation"] is False
    assert "config" in doc and doc["package_version"]


def test_diagnose_hard_violation_exit_code(tmp_path):
    data = with_diag({**HK3, "model": {"kind": "hk_async", "epsilon": 0.5}},
                     checks=["balancedness"], balancedness_bound=50.0)
    assert run_cli(tmp_path, "diagnose", data) == 4
    doc = read_json(tmp_path / "out" / "diagnostics.json")
    assert doc["hard_violation"] is True
    assert doc["verdicts"]["balancedness"] == "violation"


# sweep ------------------------------------------------------------------------


def test_sweep_empty_seeds_rejected(tmp_path):
    data = {**HK3, "sweep": {"param": "epsilon", "values": [0.5], "seeds": []}}
    assert run_cli(tmp_path, "sweep", data) == 2


def test_sweep_without_block_is_config_error(tmp_path):
    assert run_cli(tmp_path, "sweep", HK3) == 2


def read_sweep(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SWEEP_HEADER
    return rows[1:]


def test_single_point_sweep_matches_simulate(tmp_path):
    data = {**HK3, "sweep": {"param": "epsilon", "values": [0.5], "seeds": [7]}}
    assert run_cli(tmp_path, "sweep", data, "sw") == 0
    assert run_cli(tmp_path, "simulate", data, "sim") == 0
    (row,) = read_sweep(tmp_path / "sw" / "sweep.csv")
    rep = read_json(tmp_path / "sim" / "summary.json")["replicas"][0]
    assert float(row[0]) == 0.5 and int(row[1]) == 7
    assert int(row[2]) == rep["ordering"]["step"]
    assert int(row[3]) == rep["clusters"]["count"]
    assert float(row[4]) == rep["final_spread"]


def test_epsilon_sweep_median_clusters_nonincreasing(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "hk_epsilon_sweep.json"), "--out", str(tmp_path)]) == 0
    rows = read_sweep(tmp_path / "sweep.csv")
    assert len(rows) == 100
    by_eps = {}
    for r in rows:
        by_eps.setdefault(float(r[0]), []).append(int(r[3]))
    medians = [np.median(by_eps[e]) for e in sorted(by_eps)]
    assert all(a >= b for a, b in zip(medians, medians[1:]))
    assert medians[-1] == 1


def test_sweep_rows_deterministic(tmp_path):
    data = {**HK3, "model": {"kind": "hk_async", "epsilon": 0.3}, "x0": "uniform(0,1)", "steps": 200,
            "sweep": {"param": "epsilon", "values": [0.2, 0.6], "seeds": [1, 2, 3]}}
    assert run_cli(tmp_path, "sweep", data, "a") == 0
    assert run_cli(tmp_path, "sweep", data, "b") == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    assert len(read_sweep(tmp_path / "a" / "sweep.csv")) == 6


# end to end -----------------------------------------------------------------


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, HK3)
    proc = subprocess.run([sys.executable, "-m", "endodyn", "simulate", "--config", cfg, "--out",
                           str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "summary.json").exists()


def test_committed_configs_run(tmp_path):
    assert main(["diagnose", "--config", str(CONFIGS / "hk_sync_three_agents.json"), "--out", str(tmp_path)]) == 0
    doc = read_json(tmp_path / "diagnostics.json")
    assert doc["verdicts"]["clusters"] == "equal"
    assert doc["checks"]["balancedness"]["verdict"] == "reported"
    assert not math.isnan(doc["checks"]["lyapunov"]["violation_rate"])
