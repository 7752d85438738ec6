import hashlib

import numpy as np
import pytest

from endodyn.engine import (
    SeedSpec,
    child_seed,
    child_stream,
    conditional_mean,
    initial_state,
    make_snapshot,
    map_replicas,
    mean_se,
    probe_snapshots,
    replay,
    resample_next,
    run_futures,
    simulate,
    snapshot_at,
)
from endodyn.linalg import apply, flow, subset
from endodyn.models import (
    AsyncHkModel,
    AsyncHkParams,
    FixedMatrixModel,
    GossipModel,
    GossipParams,
    HkParams,
    HkSyncModel,
    hk_single_update_matrix,
)

X3 = np.array([0.0, 0.4, 1.0])


def async_hk(m, eps=0.3):
    return AsyncHkModel(AsyncHkParams(HkParams(m, eps)))


def _square(r):
    return r * r


# seeds ----------------------------------------------------------------------


def test_child_seed_definition():
    digest = hashlib.blake2b(b"2024/traj/3", digest_size=8).digest()
    assert child_seed(2024, "traj/3") == int.from_bytes(digest, "little")
    assert SeedSpec(2024).child_seed("traj/3") == child_seed(2024, "traj/3")


def test_child_stream_determinism():
    a = child_stream(5, "traj/0").random(100)
    b = child_stream(SeedSpec(5), "traj/0").random(100)
    assert np.array_equal(a, b)


def test_child_stream_labels_differ():
    assert not np.array_equal(child_stream(5, "a").random(100), child_stream(5, "b").random(100))


def test_child_stream_master_seed_differs():
    assert not np.array_equal(child_stream(5, "a").random(100), child_stream(6, "a").random(100))


def test_no_seed_collisions_across_labels():
    labels = [f"traj/{r}" for r in range(200)] + [f"traj/0/resample/{k}/{s}" for k in range(20) for s in range(50)]
    seeds = {child_seed(1, lab) for lab in labels}
    assert len(seeds) == len(labels)


# simulate -------------------------------------------------------------------


def test_simulate_hk_sync_example():
    traj = simulate(HkSyncModel(HkParams(3, 0.5)), X3, 50, 0)
    assert np.allclose(traj.final, [0.2, 0.2, 1.0], atol=1e-12)
    assert traj.states.shape == (51, 3)


@pytest.mark.parametrize("model", [HkSyncModel(HkParams(4, 0.3)), async_hk(4),
                                   GossipModel(GossipParams(4, 0.3, 0.2, 0.8))], ids=lambda m: m.kind)
def test_simulate_consensus_invariant(model):
    traj = simulate(model, np.full(4, 0.7), 200, 3)
    assert np.all(traj.states == 0.7)


def test_simulate_single_step_is_manual():
    model = async_hk(5)
    x0 = np.linspace(0, 1, 5)
    traj = simulate(model, x0, 1, 9, replica=2)
    W = model.clone().sample_next(x0, child_stream(9, "traj/2"))
    assert np.array_equal(traj.matrices[0], W)
    assert np.array_equal(traj.final, apply(W, x0))


def test_simulate_does_not_mutate_model():
    model = async_hk(4)
    simulate(model, np.linspace(0, 1, 4), 10, 0)
    assert model.step == 0


def test_simulate_rejects_zero_steps():
    with pytest.raises(ValueError):
        simulate(async_hk(3), X3, 0, 0)


def test_trajectory_consistency():
    traj = simulate(async_hk(5), np.linspace(0, 1, 5), 300, 4)
    for k in range(traj.n_steps):
        assert np.allclose(traj.states[k + 1], traj.matrices[k] @ traj.states[k], atol=1e-12, rtol=0)
    acc = np.cumsum(traj.matrices + traj.matrices.transpose(0, 2, 1), axis=0)
    assert np.all(np.diff(acc, axis=0) >= 0)
    assert np.allclose(traj.flow_accumulator, acc[-1], atol=1e-9)
    assert np.array_equal(traj.flow_accumulator, traj.flow_accumulator.T)


def test_flow_accumulator_since_midpoint():
    traj = simulate(async_hk(4), np.linspace(0, 1, 4), 100, 4)
    tail = traj.matrices[50:].sum(axis=0)
    assert np.allclose(traj.flow_accumulator_since(50), tail + tail.T, atol=1e-12)
    assert np.array_equal(traj.flow_accumulator_since(0), traj.flow_accumulator)
    with pytest.raises(ValueError):
        traj.flow_accumulator_since(17)


def test_retain_threshold():
    assert simulate(async_hk(4), np.linspace(0, 1, 4), 5, 0, retain_threshold=3).matrices is None


def test_reproducible_runs():
    a = simulate(async_hk(6), np.linspace(0, 1, 6), 500, 77, replica=1)
    b = simulate(async_hk(6), np.linspace(0, 1, 6), 500, 77, replica=1)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.flow_sum, b.flow_sum)


def test_replicas_differ():
    a = simulate(async_hk(6), np.linspace(0, 1, 6), 50, 77, replica=0)
    b = simulate(async_hk(6), np.linspace(0, 1, 6), 50, 77, replica=1)
    assert not np.array_equal(a.states, b.states)


@pytest.mark.parametrize("model", [async_hk(5), GossipModel(GossipParams(5, 0.4, 0.2, 0.8))],
                         ids=lambda m: m.kind)
def test_snapshot_replay_bit_for_bit(model):
    x0 = np.linspace(0, 1, 5)
    full = simulate(model, x0, 400, 12, checkpoints=[150])
    snap = full.snapshots[150]
    assert snap.step == 150
    rest = replay(model, snap, 250)
    assert np.array_equal(rest.states, full.states[150:])
    assert np.array_equal(rest.flow_sum, full.flow_sum)
    assert rest.start_step == 150


def test_snapshot_at_matches_trajectory():
    x0 = np.linspace(0, 1, 5)
    snap = snapshot_at(async_hk(5), x0, 40, 3)
    full = simulate(async_hk(5), x0, 40, 3)
    assert np.array_equal(snap.state, full.final)


# conditional sampling -------------------------------------------------------


def test_resample_deterministic_model():
    snap = make_snapshot(HkSyncModel(HkParams(3, 0.5)), X3)
    Ws = resample_next(HkSyncModel(HkParams(3, 0.5)), snap, 20, 0)
    assert all(np.array_equal(W, Ws[0]) for W in Ws)


def test_resample_two_agent_pick_frequencies():
    model = async_hk(2, eps=1.0)
    snap = make_snapshot(model, [0.0, 0.5])
    n = 4000
    Ws = resample_next(model, snap, n, 31)
    freq0 = np.mean(Ws[:, 0, 1] > 0)
    assert abs(freq0 - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_resample_single_draw_is_restored_sample():
    model = async_hk(4)
    snap = snapshot_at(model, np.linspace(0, 1, 4), 10, 2)
    W = resample_next(model, snap, 1, 2)[0]
    twin = model.clone()
    twin.restore_state(snap.model_state)
    expected = twin.sample_next(snap.state, child_stream(2, f"traj/0/resample/{snap.step}/0"))
    assert np.array_equal(W, expected)


def test_resample_side_effect_free():
    model = async_hk(5)
    x0 = np.linspace(0, 1, 5)
    full = simulate(model, x0, 200, 6, checkpoints=[80])
    snap = full.snapshots[80]
    before = (snap.state.copy(), dict(snap.model_state), dict(snap.rng_state["state"]))
    resample_next(model, snap, 100, 6)
    assert np.array_equal(snap.state, before[0])
    assert snap.model_state == before[1] and snap.rng_state["state"] == before[2]
    assert np.array_equal(replay(model, snap, 120).states, full.states[80:])


def test_conditional_mean_constant():
    snap = make_snapshot(async_hk(3), X3)
    assert conditional_mean(async_hk(3), snap, 50, lambda W: 1.0, 0) == (1.0, 0.0)


def test_conditional_mean_identity_model():
    model = FixedMatrixModel(np.eye(3))
    snap = make_snapshot(model, X3)
    assert conditional_mean(model, snap, 50, lambda W: W[1, 1], 0) == (1.0, 0.0)


def test_conditional_mean_matches_enumeration():
    model = async_hk(3, eps=0.5)
    snap = make_snapshot(model, X3)
    S = subset(3, [0])
    f = lambda W: flow(W, ~S, S)  # noqa: E731
    exact = np.mean([f(hk_single_update_matrix(X3, i, 0.5)) for i in range(3)])
    mean, se = conditional_mean(model, snap, 6000, f, 1)
    assert abs(mean - exact) <= 3 * se


def test_standard_error_scaling():
    model = async_hk(3, eps=0.5)
    snap = make_snapshot(model, X3)
    f = lambda W: W[1, 0]  # noqa: E731
    ses = [conditional_mean(model, snap, n, f, 4)[1] for n in (100, 1000, 10000)]
    slope = np.polyfit(np.log([100, 1000, 10000]), np.log(ses), 1)[0]
    assert -0.5 * 1.5 <= slope <= -0.5 / 1.5


def test_mean_se_definition():
    a = np.array([1.0, 2.0, 4.0])
    m, se = mean_se(a)
    assert m == pytest.approx(7 / 3)
    assert se == pytest.approx(np.std(a, ddof=1) / np.sqrt(3))
    assert mean_se(np.array([2.0]))[1] == 0.0


# futures, initial states, probes, replicas ----------------------------------


def test_run_futures_products():
    rng = np.random.default_rng(0)
    W = rng.dirichlet(np.ones(3), size=3)
    model = FixedMatrixModel(W)
    fut = run_futures(model, np.tile(X3, (4, 1)), 0, 5, 0, "t", record=(2,))
    P2 = W @ W
    P5 = np.linalg.matrix_power(W, 5)
    assert np.allclose(fut[2], P2.mean(axis=0), atol=1e-14)
    assert np.allclose(fut[5], P5.mean(axis=0), atol=1e-14)


def test_run_futures_independent_of_chunking(monkeypatch):
    import endodyn.engine as E

    model = async_hk(4)
    X0 = np.tile(np.linspace(0, 1, 4), (50, 1))
    a = run_futures(model, X0, 3, 20, 5, "lab")[20]
    b = run_futures(model, X0, 3, 20, 5, "lab")[20]
    assert np.array_equal(a, b)
    monkeypatch.setattr(E, "FUTURE_CHUNK_FLOATS", 16 * 10)
    c = run_futures(model, X0, 3, 20, 5, "lab")[20]
    assert c.shape == a.shape
    assert np.allclose(c.sum(axis=1), 1.0)


def test_initial_state_specs():
    assert np.array_equal(initial_state("equally-spaced(0,1)", 3, 0), [0, 0.5, 1])
    u = initial_state("uniform(2,3)", 4, 8, replica=1)
    assert np.all((u >= 2) & (u < 3))
    assert np.array_equal(u, initial_state("uniform(2,3)", 4, 8, replica=1))
    assert np.array_equal(initial_state([1, 2], 2, 0), [1, 2])
    with pytest.raises(ValueError):
        initial_state([1, 2], 3, 0)
    with pytest.raises(ValueError):
        initial_state("gaussian(0,1)", 3, 0)


def test_probe_snapshots_reproducible():
    a = probe_snapshots(async_hk(4), "uniform(0,1)", 5, 30, 2)
    b = probe_snapshots(async_hk(4), "uniform(0,1)", 5, 30, 2)
    assert [s.step for s in a] == [s.step for s in b]
    assert all(np.array_equal(s.state, t.state) for s, t in zip(a, b))
    assert all(0 <= s.step < 30 for s in a)
    assert [s.replica for s in a] == list(range(5))


def test_map_replicas_order_independent_of_workers():
    args = [(r,) for r in range(6)]
    assert map_replicas(_square, args, workers=1) == map_replicas(_square, args, workers=3)
