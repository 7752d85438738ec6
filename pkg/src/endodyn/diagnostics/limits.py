"""Limit behavior: infinite-flow-graph components, consensus clusters,
ordering convergence and symmetric-function series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NotConverged

DEFAULT_TAU = 1.0
DEFAULT_TOL_CLUSTER = 1e-6
DEFAULT_WINDOW = 50
DEFAULT_DRIFT_TOL = 1e-9


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list[tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for a in range(len(self.parent)):
            out.setdefault(self.find(a), []).append(a)
        return sorted(tuple(g) for g in out.values())


@dataclass(frozen=True)
class ClusterPartition:
    """Partition of the agents into blocks of 0-based indices, sorted."""

    blocks: tuple
    tol: float | None = None

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    def labels(self) -> np.ndarray:
        lab = np.empty(self.m, dtype=int)
        for n, block in enumerate(self.blocks):
            lab[list(block)] = n
        return lab

    def __len__(self):
        return len(self.blocks)

    def to_report(self) -> list[list[int]]:
        """Blocks with 1-based agent labels."""
        return [[a + 1 for a in block] for block in self.blocks]


@dataclass
class FlowGraph:
    """Symmetric pairwise flow accumulated over steps ``since+1 .. horizon``."""

    accumulated: np.ndarray
    horizon: int
    tau: float = DEFAULT_TAU
    since: int = 0

    @property
    def m(self) -> int:
        return self.accumulated.shape[0]

    def edges(self, tau: float | None = None) -> list[tuple[int, int]]:
        tau = self.tau if tau is None else tau
        i, j = np.nonzero(np.triu(self.accumulated >= tau, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def components(self, tau: float | None = None) -> ClusterPartition:
        uf = UnionFind(self.m)
        for i, j in self.edges(tau):
            uf.union(i, j)
        return ClusterPartition(tuple(uf.groups()))


def flow_graph(trajectory, tau: float = DEFAULT_TAU, window: str = "tail") -> FlowGraph:
    """Thresholded finite-horizon approximation of the infinite flow graph.

    An edge of the infinite flow graph is a pair whose flow sum diverges,
    which is a property of the tail of the sum.  With ``window="tail"`` only
    the second half of the run is accumulated, so flow exchanged during the
    transient before clusters separate does not create edges.
    ``window="full"`` accumulates from the start of the run.
    """
    start, end = trajectory.start_step, trajectory.start_step + trajectory.n_steps
    if window == "full":
        since = start
    elif window == "tail":
        since = start + trajectory.n_steps // 2
    else:
        raise ValueError(f"window must be 'tail' or 'full', got {window!r}")
    acc = trajectory.flow_accumulator_since(since) if since < end else np.zeros((trajectory.m,) * 2)
    return FlowGraph(acc, end, tau, since)


def components(graph: FlowGraph, tau: float | None = None) -> ClusterPartition:
    return graph.components(tau)


def consensus_clusters(
    x_final,
    tol_cluster: float = DEFAULT_TOL_CLUSTER,
    drift: float | None = None,
    drift_tol: float = DEFAULT_DRIFT_TOL,
) -> ClusterPartition:
    """Single-linkage clusters of the final values at distance ``tol_cluster``.

    Pass the trailing ordering ``drift`` of the run to have unconverged states
    rejected with :class:`NotConverged`.
    """
    if drift is not None and not drift < drift_tol:
        raise NotConverged(f"ordering drift {drift:.3g} is not below {drift_tol:.3g}")
    x = np.asarray(x_final, dtype=float)
    order = np.argsort(x, kind="stable")
    cuts = np.flatnonzero(np.diff(x[order]) > tol_cluster) + 1
    blocks = [tuple(sorted(g.tolist())) for g in np.split(order, cuts)]
    return ClusterPartition(tuple(sorted(blocks)), tol_cluster)


@dataclass(frozen=True)
class PartitionComparison:
    verdict: str  # "equal" | "refinement" | "mismatch"
    detail: str

    def __str__(self):
        return f"{self.verdict}: {self.detail}" if self.detail else self.verdict


def _refines(a: ClusterPartition, b: ClusterPartition) -> bool:
    lab = b.labels()
    return all(len({lab[i] for i in block}) == 1 for block in a.blocks)


def compare_partitions(a: ClusterPartition, b: ClusterPartition) -> PartitionComparison:
    if a.m != b.m:
        raise ValueError(f"partitions of {a.m} and {b.m} agents")
    if set(a.blocks) == set(b.blocks):
        return PartitionComparison("equal", "")
    if _refines(a, b):
        return PartitionComparison("refinement", "first partition is finer than the second")
    if _refines(b, a):
        return PartitionComparison("refinement", "second partition is finer than the first")
    only_a = sorted(set(a.blocks) - set(b.blocks))
    only_b = sorted(set(b.blocks) - set(a.blocks))
    return PartitionComparison("mismatch", f"blocks {only_a} vs {only_b}")


@dataclass
class ConvergenceReport:
    """Drift-based convergence verdict for a series.

    ``drift[k]`` is the change between steps ``k`` and ``k+1``; the series
    is converged at ``step`` when every later drift is below ``tol`` and at
    least ``window`` such drifts trail the end.
    """

    converged: bool
    step: int | None
    drift: np.ndarray
    tol: float
    window: int
    limit: np.ndarray | float | None = None

    @property
    def trailing_drift(self) -> float:
        tail = self.drift[-self.window:]
        return float(tail.max()) if tail.size else 0.0


def _drift_verdict(drift: np.ndarray, window: int, tol: float):
    if window < 1:
        raise ValueError("window must be at least 1")
    above = np.flatnonzero(~(drift < tol))
    k_star = int(above[-1]) + 1 if above.size else 0
    # a series that never moved is converged even when shorter than the window
    converged = k_star == 0 or drift.size - k_star >= window
    return converged, (k_star if converged else None)


def ordering_convergence(trajectory, window: int = DEFAULT_WINDOW, tol: float = DEFAULT_DRIFT_TOL):
    """Convergence of the sorted profile ``z(k)``, with ``x(k)`` reported alongside.

    Returns ``(ordering_report, state_report)``; a run whose agents keep
    swapping places has a converged ordering but an unconverged state.
    """
    states = np.asarray(getattr(trajectory, "states", trajectory), dtype=float)
    z = np.sort(states, axis=1)
    zdrift = np.abs(np.diff(z, axis=0)).max(axis=1) if len(z) > 1 else np.zeros(0)
    xdrift = np.abs(np.diff(states, axis=0)).max(axis=1) if len(z) > 1 else np.zeros(0)
    zc, zk = _drift_verdict(zdrift, window, tol)
    xc, xk = _drift_verdict(xdrift, window, tol)
    return (
        ConvergenceReport(zc, zk, zdrift, tol, window, z[-1] if zc else None),
        ConvergenceReport(xc, xk, xdrift, tol, window, states[-1] if xc else None),
    )


def _pnorm(p):
    return lambda x: np.linalg.norm(x, ord=p, axis=-1)


SYMMETRIC_CATALOG = {
    "sum": lambda x: np.sum(x, axis=-1),
    "spread": lambda x: np.max(x, axis=-1) - np.min(x, axis=-1),
    "max-min": lambda x: np.max(x, axis=-1) - np.min(x, axis=-1),
    "l1": _pnorm(1),
    "l2": _pnorm(2),
    "linf": _pnorm(np.inf),
}


def symmetric_function_series(
    trajectory,
    name: str,
    window: int = DEFAULT_WINDOW,
    tol: float = DEFAULT_DRIFT_TOL,
):
    """Series ``V(x(k))`` for a catalog function and its convergence verdict.

    Catalog: ``sum``, ``spread`` (alias ``max-min``), ``l1``, ``l2``, ``linf``; all are
    continuous and invariant under permutations of the agents.
    """
    try:
        fn = SYMMETRIC_CATALOG[name]
    except KeyError:
        raise ValueError(f"{name!r} is not in the symmetric catalog {sorted(SYMMETRIC_CATALOG)}")
    states = np.asarray(getattr(trajectory, "states", trajectory), dtype=float)
    series = fn(states)
    drift = np.abs(np.diff(series))
    conv, k = _drift_verdict(drift, window, tol)
    return series, ConvergenceReport(conv, k, drift, tol, window, float(series[-1]) if conv else None)
