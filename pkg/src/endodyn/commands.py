"""The simulate / diagnose / sweep pipelines behind the command line.

Each ``run_*`` function takes a validated :class:`RunConfig`, writes its
files under the output directory and returns what it wrote as plain data.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import diagnostics as D
from .config import SCHEMA_VERSION, RunConfig
from .engine import initial_state, map_replicas, probe_snapshots, resample_next, simulate
from .errors import ConfigError, NotConverged
from .io import write_json, write_rows_csv, write_trajectory_csv

V_FLOOR = -1e-12
SWEEP_HEADER = ("param", "seed", "converged_step", "n_clusters", "final_spread")


def _header(cfg: RunConfig, command: str) -> dict:
    from . import __version__

    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": command,
        "master_seed": cfg.master_seed,
        "config": cfg.echo(),
    }


# ----------------------------------------------------------------------------
# per-replica trajectory summary


def _cluster_section(traj, d, ordering):
    """Consensus clusters against flow-graph components, 1-based."""
    graph = D.flow_graph(traj, d.tau, window=d.flow_window)
    comps = graph.components()
    out = {
        "flow_graph": {
            "tau": d.tau,
            "window": d.flow_window,
            "accumulated_since_step": graph.since,
            "edges": [[i + 1, j + 1] for i, j in graph.edges()],
            "components": comps.to_report(),
        }
    }
    try:
        clusters = D.consensus_clusters(traj.final, d.tol_cluster, ordering.trailing_drift, d.tol)
    except NotConverged as exc:
        out["clusters"] = None
        out["comparison"] = {"verdict": "warning", "detail": f"not converged: {exc}"}
        return out
    cmp = D.compare_partitions(clusters, comps)
    robust = {
        str(t): D.compare_partitions(clusters, graph.components(t)).verdict for t in d.tau_robustness
    }
    out["clusters"] = {"tol": d.tol_cluster, "blocks": clusters.to_report(), "count": len(clusters)}
    out["comparison"] = {
        "verdict": cmp.verdict,
        "detail": cmp.detail,
        "tau_robustness": robust,
        "stable": all(v == cmp.verdict for v in robust.values()),
    }
    return out


def _convergence_section(rep):
    return {
        "converged": rep.converged,
        "step": rep.step,
        "trailing_drift": rep.trailing_drift,
        "window": rep.window,
        "tol": rep.tol,
    }


def summarize_trajectory(traj, cfg: RunConfig, x0) -> dict:
    d = cfg.diagnostics
    z_rep, x_rep = D.ordering_convergence(traj, d.window, d.tol)
    out = {
        "replica": traj.replica,
        "steps": traj.n_steps,
        "x0": np.asarray(x0),
        "final": traj.final,
        "final_spread": float(np.ptp(traj.final)),
        "ordering": _convergence_section(z_rep),
        "state": _convergence_section(x_rep),
    }
    out.update(_cluster_section(traj, d, z_rep))
    return out


def _simulate_replica(cfg: RunConfig, replica: int):
    model = cfg.build_model()
    x0 = initial_state(cfg.x0, cfg.m, cfg.master_seed, replica)
    traj = simulate(model, x0, cfg.steps, cfg.master_seed, replica=replica,
                    retain_threshold=cfg.retain_threshold)
    traj.matrices = None  # not shipped back across processes
    return traj, summarize_trajectory(traj, cfg, x0)


def run_simulate(cfg: RunConfig, out_dir=None) -> dict:
    out = Path(out_dir or cfg.output_dir)
    results = map_replicas(_simulate_replica, [(cfg, r) for r in range(cfg.replicas)])
    files = []
    for traj, _ in results:
        files.append(write_trajectory_csv(out / f"trajectory_r{traj.replica}.csv", traj).name)
    summary = {**_header(cfg, "simulate"), "replicas": [s for _, s in results], "files": files}
    write_json(out / "summary.json", summary)
    return summary


# ----------------------------------------------------------------------------
# diagnostics


def _symmetric_section(traj, d):
    out = {}
    for name in d.symmetric:
        series, rep = D.symmetric_function_series(traj, name, d.window, d.tol)
        out[name] = {**_convergence_section(rep), "final": float(series[-1])}
    return out


def _min_certified(reports):
    vals = [r.certified for r in reports]
    return min(vals) if vals else math.inf


def _probe_checks(cfg, model, snaps, report):
    d = cfg.diagnostics
    checks = set(d.checks)
    n, seed, z = d.n_samples, cfg.master_seed, d.z
    hard = False
    probe_ids = [{"replica": s.replica, "step": s.step} for s in snaps]
    ratio_checks = checks & {"balancedness", "subsymmetry", "weak_reciprocity", "pair_reciprocity", "v_ell"}
    draws = [resample_next(model, s, n, seed) for s in snaps] if ratio_checks else []

    bal = []
    if checks & {"balancedness", "weak_reciprocity", "v_ell"}:
        bal = [D.check_balancedness(model, s, n, seed, z, d.balancedness_bound, W)
               for s, W in zip(snaps, draws)]
    if "balancedness" in checks:
        report["balancedness"] = _ratio_block(bal, probe_ids, d.balancedness_bound)
        hard |= not all(r.passed for r in bal)
    if "subsymmetry" in checks:
        sub = [D.check_subsymmetry(model, s, n, seed, z, None, W) for s, W in zip(snaps, draws)]
        report["subsymmetry"] = _ratio_block(sub, probe_ids, None)

    wr = []
    if checks & {"weak_reciprocity", "v_ell"}:
        a = _min_certified(bal)
        rules = D.sorted_rules(cfg.m)
        wr = [D.check_weak_reciprocity(model, s, rules, n, seed, d.gamma, a, z, W)
              for s, W in zip(snaps, draws)]
    if "weak_reciprocity" in checks:
        block = _ratio_block(wr, probe_ids, wr[0].bound if wr else None)
        block["balancedness_input"] = _min_certified(bal)
        report["weak_reciprocity"] = block
        hard |= not all(r.passed for r in wr)
    if "pair_reciprocity" in checks:
        pr = [D.check_pair_reciprocity(model, s, n, seed, z, None, W) for s, W in zip(snaps, draws)]
        report["pair_reciprocity"] = _ratio_block(pr, probe_ids, None)

    if "v_ell" in checks:
        beta = d.beta
        if beta is None:
            beta = min(_min_certified(wr) / 2, 0.5)
        if not beta > 0:
            report["v_ell"] = {"verdict": "skipped", "detail": "no positive reciprocity coefficient certified"}
        else:
            ells = d.ell or list(range(1, cfg.m + 1))
            rep = D.martingale_test_v_ell(model, snaps, ells, beta, n, seed, z)
            report["v_ell"] = {"beta": beta, **rep.to_dict()}
            hard |= bool(rep.violations)

    T = cfg.horizon
    if "lyapunov" in checks:
        rep = D.lyapunov_test(model, snaps, d.g, T, n, seed, d.n_inner, z)
        floor_ok = all(p.value >= V_FLOOR for p in rep.probes)
        report["lyapunov"] = {**rep.to_dict(), "nonnegative": floor_ok}
        hard |= bool(rep.violations) or not floor_ok
    if "abs_prob" in checks:
        est = [D.estimate_abs_prob(model, s, T, n, seed) for s in snaps]
        report["abs_prob"] = {
            "verdict": "reported",
            "probes": [{**pid, **e.to_dict()} for pid, e in zip(probe_ids, est)],
        }
    if "identity" in checks:
        res = [D.abs_prob_identity_residual(model, s, T, n, seed) for s in snaps]
        report["identity"] = {
            "verdict": "reported",
            "sup_residual": max(r.sup for r in res),
            "probes": [{**pid, **r.to_dict()} for pid, r in zip(probe_ids, res)],
        }
    return hard


def _ratio_block(reports, probe_ids, bound):
    block = {
        "bound": bound,
        "coefficient": min((r.coefficient for r in reports), default=math.inf),
        "certified": _min_certified(reports),
        "probes": [{**pid, **r.to_dict()} for pid, r in zip(probe_ids, reports)],
    }
    if bound is None:
        block["verdict"] = "reported"
    else:
        block["verdict"] = "pass" if all(r.passed for r in reports) else "violation"
    return block


def run_diagnose(cfg: RunConfig, out_dir=None) -> tuple[dict, bool]:
    """Run the configured checks; returns the report and whether a hard violation occurred."""
    d = cfg.diagnostics
    out = Path(out_dir or cfg.output_dir)
    checks = set(d.checks)
    report: dict = {}
    hard = False

    if checks & {"convergence", "clusters", "symmetric"}:
        results = map_replicas(_simulate_replica, [(cfg, r) for r in range(cfg.replicas)])
        runs = []
        for traj, summary in results:
            entry = {"replica": traj.replica}
            if "convergence" in checks:
                entry["ordering"] = summary["ordering"]
                entry["state"] = summary["state"]
            if "clusters" in checks:
                for key in ("clusters", "flow_graph", "comparison"):
                    entry[key] = summary[key]
            if "symmetric" in checks:
                entry["symmetric"] = _symmetric_section(traj, d)
            runs.append(entry)
        report["runs"] = runs

    model = cfg.build_model()
    probe_checks = checks - {"convergence", "clusters", "symmetric"}
    if probe_checks:
        snaps = probe_snapshots(model, cfg.x0, d.probes, cfg.probe_horizon, cfg.master_seed)
        hard = _probe_checks(cfg, model, snaps, report)

    verdicts = {}
    for name in sorted(checks):
        if name in report and "verdict" in report[name]:
            verdicts[name] = report[name]["verdict"]
    if "runs" in report:
        if "convergence" in checks:
            ok = all(r["ordering"]["converged"] for r in report["runs"])
            verdicts["convergence"] = "converged" if ok else "warning"
        if "clusters" in checks:
            vs = [r["comparison"]["verdict"] for r in report["runs"]]
            verdicts["clusters"] = "equal" if all(v == "equal" for v in vs) else (
                "warning" if "warning" in vs else "mismatch")
        if "symmetric" in checks:
            ok = all(all(s["converged"] for s in r["symmetric"].values()) for r in report["runs"])
            verdicts["symmetric"] = "converged" if ok else "warning"

    doc = {**_header(cfg, "diagnose"), "verdicts": verdicts, "hard_violation": hard, "checks": report}
    write_json(out / "diagnostics.json", doc)
    return doc, hard


# ----------------------------------------------------------------------------
# sweeps


def _sweep_point(cfg: RunConfig, value, seed):
    point = cfg.with_param(cfg.sweep.param, value).model_copy(update={"master_seed": seed})
    traj, summary = _simulate_replica(point, 0)
    clusters = D.consensus_clusters(traj.final, cfg.diagnostics.tol_cluster)
    step = summary["ordering"]["step"] if summary["ordering"]["converged"] else ""
    return (value, seed, step, len(clusters), summary["final_spread"])


def run_sweep(cfg: RunConfig, out_dir=None) -> list[tuple]:
    """Long-format table with one row per (parameter value, seed).

    The ``param`` column holds the value of the swept model parameter.
    """
    if cfg.sweep is None:
        raise ConfigError("config has no sweep block")
    out = Path(out_dir or cfg.output_dir)
    args = [(cfg, v, s) for v in cfg.sweep.values for s in cfg.sweep.seeds]
    rows = map_replicas(_sweep_point, args)
    write_rows_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    return rows
