"""Trajectory simulation, seeded streams and one-step conditional resampling.

Random streams
--------------
Every stream is a ``numpy.random.Generator`` over ``PCG64`` seeded with
``child_seed(master_seed, label)``: the 8-byte BLAKE2b digest
(``digest_size=8``) of the UTF-8 text ``"<master_seed>/<label>"``, read as a
little-endian unsigned integer.  Labels in use:

``traj/<replica>``                       main trajectory of a replica
``traj/<replica>/x0``                    random initial condition
``traj/<replica>/resample/<k>/<s>``      draw ``s`` of W(k+1) at a snapshot
``traj/<replica>/futures/<k>/<name>/<c>`` chunk ``c`` of a batch of futures

Conditioning on the history up to step ``k`` is realized by a
:class:`Snapshot` (state, step, model internals and stream position):
restoring it and redrawing the next matrix samples the one-step conditional
law exactly.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .linalg import apply_batch, as_state, validate_stochastic
from .models import ProcessModel

DEFAULT_RETAIN_THRESHOLD = 64
FUTURE_CHUNK_FLOATS = 2_000_000


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def child_seed(self, label: str) -> int:
        return child_seed(self.master_seed, label)


def child_seed(master_seed: int, label: str) -> int:
    text = f"{int(master_seed)}/{label}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def child_stream(seeds: SeedSpec | int, label: str) -> np.random.Generator:
    master = seeds.master_seed if isinstance(seeds, SeedSpec) else int(seeds)
    return np.random.Generator(np.random.PCG64(child_seed(master, label)))


@dataclass
class Snapshot:
    """Frozen engine state at step ``k``."""

    step: int
    state: np.ndarray
    model_state: dict
    replica: int = 0
    rng_state: dict | None = None
    flow_sum: np.ndarray | None = None

    @property
    def label(self) -> str:
        return f"traj/{self.replica}"


@dataclass
class Trajectory:
    states: np.ndarray
    flow_sum: np.ndarray
    matrices: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)
    replica: int = 0
    start_step: int = 0
    flow_marks: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def steps(self) -> np.ndarray:
        return self.start_step + np.arange(self.states.shape[0])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def flow_accumulator(self) -> np.ndarray:
        """``sum_k (W_ij(k) + W_ji(k))`` over the simulated horizon."""
        return self.flow_sum + self.flow_sum.T

    def flow_accumulator_since(self, step: int) -> np.ndarray:
        """Symmetric flow accumulated over steps after ``step``.

        Available for the start step, the midpoint of the run and the final step.
        """
        if step == self.start_step + self.n_steps:
            return np.zeros_like(self.flow_sum)
        try:
            base = self.flow_marks[step]
        except KeyError:
            raise ValueError(f"no flow mark at step {step}; have {sorted(self.flow_marks)}") from None
        d = self.flow_sum - base
        return d + d.T


def simulate(
    model: ProcessModel,
    x0,
    steps: int,
    seeds: SeedSpec | int,
    replica: int = 0,
    retain_threshold: int = DEFAULT_RETAIN_THRESHOLD,
    checkpoints: Iterable[int] = (),
    validate: bool = False,
) -> Trajectory:
    """Run ``x(k+1) = W(k+1) x(k)`` for ``steps`` steps.

    The caller's model is not mutated; a clone starting from its current
    state is driven by the stream ``traj/<replica>``.  Snapshots are taken
    at every step listed in ``checkpoints`` (relative to the model's start
    step) and always at the final step.
    """
    if steps < 1:
        raise ValueError(f"need at least one step, got {steps}")
    x = as_state(x0).copy()
    m = x.shape[0]
    if m != model.m:
        raise ValueError(f"x0 has {m} entries, model has {model.m} agents")
    model = model.clone()
    rng = child_stream(seeds, f"traj/{replica}")
    return _run(model, x, steps, rng, replica, retain_threshold, set(checkpoints), validate)


def replay(model: ProcessModel, snap: Snapshot, steps: int, **kw) -> Trajectory:
    """Continue from a snapshot with its recorded stream position."""
    if snap.rng_state is None:
        raise ValueError("snapshot carries no stream position")
    model = model.clone()
    model.restore_state(snap.model_state)
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = snap.rng_state
    traj = _run(
        model,
        snap.state.copy(),
        steps,
        rng,
        snap.replica,
        kw.get("retain_threshold", DEFAULT_RETAIN_THRESHOLD),
        set(kw.get("checkpoints", ())),
        kw.get("validate", False),
        flow_sum=None if snap.flow_sum is None else snap.flow_sum.copy(),
    )
    traj.start_step = snap.step
    return traj


_min, _max = np.minimum.reduce, np.maximum.reduce
_minimum, _maximum = np.minimum, np.maximum


def _run(model, x, steps, rng, replica, retain_threshold, checkpoints, validate, flow_sum=None):
    m = x.shape[0]
    start = model.step
    states = np.empty((steps + 1, m))
    states[0] = x
    acc = np.zeros((m, m)) if flow_sum is None else flow_sum
    Ws = np.empty((steps, m, m)) if m <= retain_threshold else None
    snaps = {}
    marks = {}
    for k in range(steps):
        if k == 0 or k == steps // 2:
            marks[start + k] = acc.copy()
        if k in checkpoints:
            snaps[start + k] = _snap(model, x, replica, rng, acc)
        W = model.sample_next(x, rng)
        if validate:
            W = validate_stochastic(W)
        y = W @ x
        # keep the envelope exact; rounding can push W @ x outside [min x, max x]
        x = _minimum(_maximum(y, _min(x), out=y), _max(x), out=y)
        acc += W
        states[k + 1] = x
        if Ws is not None:
            Ws[k] = W
    snaps[start + steps] = _snap(model, x, replica, rng, acc)
    return Trajectory(states, acc, Ws, snaps, replica, start, marks)


def _snap(model, x, replica, rng, acc):
    return Snapshot(
        step=model.step,
        state=x.copy(),
        model_state=model.clone_state(),
        replica=replica,
        rng_state=rng.bit_generator.state,
        flow_sum=acc.copy(),
    )


def snapshot_at(model: ProcessModel, x0, step: int, seeds, replica: int = 0) -> Snapshot:
    """Simulate up to ``step`` and return the snapshot there."""
    if step == 0:
        rng = child_stream(seeds, f"traj/{replica}")
        return _snap(model, as_state(x0).copy(), replica, rng, np.zeros((model.m, model.m)))
    traj = simulate(model, x0, step, seeds, replica=replica, retain_threshold=0)
    return traj.snapshots[model.step + step]


def make_snapshot(model: ProcessModel, x, step: int = 0, replica: int = 0) -> Snapshot:
    """Snapshot at an arbitrary state, for conditioning on hand-picked histories."""
    mdl = model.clone()
    mdl.restore_state({**mdl.clone_state(), "step": step})
    return Snapshot(step, as_state(x).copy(), mdl.clone_state(), replica)


# ----------------------------------------------------------------------------
# conditional sampling


def resample_next(model: ProcessModel, snap: Snapshot, n_samples: int, seeds) -> np.ndarray:
    """``n_samples`` independent draws of W(k+1) given the snapshot.

    Draw ``s`` restores the snapshot into a private clone and uses stream
    ``traj/<replica>/resample/<k>/<s>``; the snapshot is not modified.
    Returns an ``(n_samples, m, m)`` array.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    mdl = model.clone()
    x = snap.state
    out = np.empty((n_samples, mdl.m, mdl.m))
    prefix = f"{snap.label}/resample/{snap.step}/"
    for s in range(n_samples):
        mdl.restore_state(snap.model_state)
        out[s] = mdl.sample_next(x, child_stream(seeds, prefix + str(s)))
    return out


def mean_se(samples, axis=0):
    """Sample mean and standard error (``std(ddof=1) / sqrt(n)``)."""
    a = np.asarray(samples, dtype=float)
    n = a.shape[axis]
    # shifting by the first sample makes the mean of constant samples exact
    ref = np.take(a, [0], axis=axis)
    dev = a - ref
    mean = np.squeeze(ref, axis=axis) + dev.mean(axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, dev.std(axis=axis, ddof=1) / np.sqrt(n)


def conditional_mean(
    model: ProcessModel,
    snap: Snapshot,
    n_samples: int,
    f: Callable[[np.ndarray], float],
    seeds,
) -> tuple[float, float]:
    """Monte-Carlo ``E[f(W(k+1)) | snapshot]`` with its standard error."""
    draws = resample_next(model, snap, n_samples, seeds)
    vals = np.array([f(W) for W in draws], dtype=float)
    mean, se = mean_se(vals)
    return float(mean), float(se)


def run_futures(
    model: ProcessModel,
    X0,
    step: int,
    horizon: int,
    seeds,
    label: str,
    record: Iterable[int] = (),
    first: np.ndarray | None = None,
    spreads: bool = False,
) -> dict:
    """Simulate independent futures in vectorized chunks.

    Row ``b`` of ``X0`` starts a future at absolute ``step``.  For every
    horizon ``t`` in ``record`` (and ``horizon`` itself) the returned dict maps
    ``t`` to the ``(B, m)`` column averages ``(1/m) 1^T W(step+t) ... W(step+1)``.
    ``"states"`` holds the final states.  When ``first`` is given its rows are
    used as the first matrix of each future instead of a fresh draw.  With
    ``spreads``, ``out["spread"][t]`` is the largest within-column spread
    ``max_j (max_i P_ij - min_i P_ij)`` of each product.

    Chunk ``c`` draws from stream ``<label>/<c>``; results are independent of
    the order chunks run in.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    B, m = X0.shape
    record = sorted(set(record) | {horizon})
    chunk = max(1, FUTURE_CHUNK_FLOATS // (m * m))
    out = {t: np.empty((B, m)) for t in record}
    spread = {t: np.empty(B) for t in record}
    final = np.empty((B, m))
    for c, lo in enumerate(range(0, B, chunk)):
        hi = min(B, lo + chunk)
        rng = child_stream(seeds, f"{label}/{c}")
        X = X0[lo:hi].copy()
        P = np.broadcast_to(np.eye(m), (hi - lo, m, m)).copy()
        for t in range(1, horizon + 1):
            if t == 1 and first is not None:
                W = first[lo:hi]
            else:
                W = model.sample_batch(X, step + t - 1, rng)
            X = apply_batch(W, X)
            P = np.matmul(W, P)
            if t in out:
                out[t][lo:hi] = P.mean(axis=1)
                if spreads:
                    spread[t][lo:hi] = np.ptp(P, axis=1).max(axis=1)
        final[lo:hi] = X
    out["states"] = final
    if spreads:
        out["spread"] = spread
    return out


# ----------------------------------------------------------------------------
# replicas and probes


def worker_count() -> int:
    env = os.environ.get("ENDODYN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_replicas(fn: Callable, args: list, workers: int | None = None) -> list:
    """Apply ``fn`` to each argument tuple; results come back in input order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
        return list(pool.map(fn, *zip(*args)))


def initial_state(spec, m: int, seeds, replica: int = 0) -> np.ndarray:
    """Resolve an x0 spec: an explicit array, ``uniform(lo,hi)`` or ``equally-spaced(lo,hi)``."""
    if isinstance(spec, str):
        name, _, rest = spec.partition("(")
        lo, hi = (float(v) for v in rest.rstrip(")").split(","))
        name = name.strip()
        if name == "uniform":
            return child_stream(seeds, f"traj/{replica}/x0").uniform(lo, hi, m)
        if name == "equally-spaced":
            return np.linspace(lo, hi, m)
        raise ValueError(f"unknown x0 spec {spec!r}")
    x = as_state(spec)
    if x.shape[0] != m:
        raise ValueError(f"x0 has {x.shape[0]} entries, expected {m}")
    return x


def probe_snapshots(
    model: ProcessModel,
    x0_spec,
    n_probes: int,
    horizon: int,
    seeds,
) -> list[Snapshot]:
    """One probe per replica ``0..n_probes-1`` at a step drawn uniformly in ``[0, horizon)``."""
    snaps = []
    for r in range(n_probes):
        k = int(child_stream(seeds, f"traj/{r}/probe").integers(horizon))
        x0 = initial_state(x0_spec, model.m, seeds, r)
        snaps.append(snapshot_at(model, x0, k, seeds, replica=r))
    return snaps
