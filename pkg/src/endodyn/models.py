"""Endogenous random averaging models.

Each model maps the current opinion profile (and its step counter) to the
next random stochastic matrix.  The free functions build one matrix from an
explicit state and are the reference constructions; the model classes wrap
them with a random stream, a step counter and a vectorized batch sampler used
by the Monte-Carlo estimators.

All opinions are scalars.  Neighborhoods use the closed ball
``|x_i - x_j| <= epsilon``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IndexOutOfRange, ModelError, SelfGossip

# ----------------------------------------------------------------------------
# samplers and schedules
#
# Samplers are called as ``sampler(step, size, rng)`` and return an array of
# the requested size (a float when size is None).  They are small dataclasses
# so models stay picklable for process pools.


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, step, size, rng):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    @property
    def support(self):
        return (self.value, self.value)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError(f"uniform bounds out of order: {self.low} > {self.high}")

    def __call__(self, step, size, rng):
        return rng.uniform(self.low, self.high, size)

    @property
    def support(self):
        return (self.low, self.high)


@dataclass(frozen=True)
class Discrete:
    """Finite distribution on ``values`` with probabilities ``probs``."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be nonempty and of equal length")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must be a probability vector")

    def __call__(self, step, size, rng):
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(self.values) - 1)
        vals = np.asarray(self.values, dtype=float)[idx]
        return float(vals) if size is None else vals

    @property
    def support(self):
        return (min(self.values), max(self.values))


@dataclass(frozen=True)
class Exponential:
    scale: float

    def __call__(self, step, size, rng):
        return rng.exponential(self.scale, size)

    @property
    def support(self):
        return (0.0, np.inf)


@dataclass(frozen=True)
class StepSchedule:
    """Per-step values ``values[k]``; the last value holds after the array ends."""

    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValueError("empty schedule")

    def __call__(self, step):
        return float(self.values[min(step, len(self.values) - 1)])


def _as_schedule(p) -> Callable[[int], float]:
    if callable(p):
        return p
    if np.isscalar(p):
        return StepSchedule((float(p),))
    return StepSchedule(tuple(float(v) for v in p))


# ----------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class HkParams:
    m: int
    epsilon: float

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"need m >= 2, got {self.m}")
        if not self.epsilon > 0:
            raise ValueError(f"confidence level must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class AsyncHkParams:
    base: HkParams
    pick_probabilities: tuple = None

    def __post_init__(self):
        m = self.base.m
        p = self.pick_probabilities
        if p is None:
            p = (1.0 / m,) * m
        p = tuple(float(v) for v in p)
        if len(p) != m:
            raise ValueError(f"{len(p)} pick probabilities for {m} agents")
        if min(p) <= 0 or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError("pick probabilities must be positive and sum to 1")
        object.__setattr__(self, "pick_probabilities", p)

    @property
    def p_lower(self) -> float:
        return min(self.pick_probabilities)


@dataclass(frozen=True)
class LinkFailParams:
    base: HkParams
    failure_prob: Callable[[int], float] = 0.0

    def __post_init__(self):
        object.__setattr__(self, "failure_prob", _as_schedule(self.failure_prob))


@dataclass(frozen=True)
class RandConfParams:
    base: HkParams
    confidence_sampler: Callable = None

    def __post_init__(self):
        if self.confidence_sampler is None:
            object.__setattr__(self, "confidence_sampler", Constant(self.base.epsilon))


@dataclass(frozen=True)
class GossipParams:
    m: int
    epsilon: float
    gamma_low: float
    gamma_high: float
    gamma_sampler: Callable = None
    pair_rule: str | Callable = "endogenous-uniform"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"need m >= 2, got {self.m}")
        if not 0 < self.gamma_low <= self.gamma_high < 1:
            raise ValueError("need 0 < gamma_low <= gamma_high < 1")
        if self.gamma_sampler is None:
            object.__setattr__(self, "gamma_sampler", Uniform(self.gamma_low, self.gamma_high))
        if isinstance(self.pair_rule, str) and self.pair_rule != "endogenous-uniform":
            raise ValueError(f"unknown pair rule {self.pair_rule!r}")


# ----------------------------------------------------------------------------
# reference constructions


def neighborhood(x, i: int, epsilon: float) -> np.ndarray:
    """Mask of agents within ``epsilon`` of agent ``i`` (always includes ``i``)."""
    x = np.asarray(x, dtype=float)
    if not 0 <= i < x.shape[0]:
        raise IndexOutOfRange(f"agent {i} outside 0..{x.shape[0] - 1}")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return np.abs(x - x[i]) <= epsilon


def _average_rows(adj: np.ndarray) -> np.ndarray:
    return adj / np.count_nonzero(adj, axis=-1)[..., None]


def hk_sync_matrix(x, params: HkParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    adj = np.abs(x[:, None] - x[None, :]) <= params.epsilon
    return _average_rows(adj)


def hk_single_update_matrix(x, i: int, epsilon: float) -> np.ndarray:
    """Agent ``i`` averages over its neighborhood; all other rows are identity."""
    x = np.asarray(x, dtype=float)
    W = np.eye(x.shape[0])
    nbr = neighborhood(x, i, epsilon)
    W[i] = nbr / np.count_nonzero(nbr)
    return W


def hk_async_matrix(x, params: AsyncHkParams, rng) -> np.ndarray:
    i = _pick(params.pick_probabilities, rng)
    return hk_single_update_matrix(x, i, params.base.epsilon)


def hk_linkfail_matrix(x, params: LinkFailParams, step: int, rng) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    p = params.failure_prob(step)
    if not 0.0 <= p <= 1.0:
        raise ModelError(f"failure probability {p} at step {step} outside [0, 1]")
    adj = np.abs(x[:, None] - x[None, :]) <= params.base.epsilon
    # ordered pairs fail independently; a link is never removed from itself
    adj &= (rng.random((m, m)) >= p) | np.eye(m, dtype=bool)
    return _average_rows(adj)


def hk_randconf_matrix(x, params: RandConfParams, step: int, rng) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    eps = np.asarray(params.confidence_sampler(step, x.shape[0], rng), dtype=float)
    if not (np.all(np.isfinite(eps)) and np.all(eps >= 0)):
        raise ModelError(f"confidence sampler returned {eps}")
    adj = np.abs(x[:, None] - x[None, :]) <= eps[:, None]
    return _average_rows(adj)


def gossip_matrix(m: int, i: int, j: int, gamma: float) -> np.ndarray:
    """Receiver ``j`` moves a fraction ``gamma`` toward sender ``i``."""
    if i == j:
        raise SelfGossip(f"sender and receiver are both agent {i}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    W = np.eye(m)
    W[j, j] = 1.0 - gamma
    W[j, i] = gamma
    return W


def gossip_sample_pair(x, params: GossipParams, rng):
    """Draw an ordered (sender, receiver) pair, or None for a no-op step."""
    if callable(params.pair_rule):
        return params.pair_rule(x, rng)
    m = params.m
    i = min(int(rng.random() * m), m - 1)
    xs = x.tolist()
    xi, eps = xs[i], params.epsilon
    cand = [j for j, v in enumerate(xs) if j != i and abs(v - xi) <= eps]
    if not cand:
        return None
    j = cand[min(int(rng.random() * len(cand)), len(cand) - 1)]
    return i, j


def _pick(probs, rng) -> int:
    m = len(probs)
    u = rng.random()
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, u, side="right")), m - 1)


# ----------------------------------------------------------------------------
# process models


class ProcessModel:
    """Sampler of the next stochastic matrix given the current state.

    Subclasses implement ``_sample(x, step, rng)``.  ``sample_batch`` draws one
    matrix per row of a state stack at a common step; the default loops.

    ``diagonal_bound`` is the model's guaranteed lower bound on every diagonal
    entry (None when it has none).  ``claims_balanced`` records whether the
    model is expected to be balanced; diagnostics never rely on it.
    """

    m: int
    diagonal_bound: float | None = None
    claims_balanced: bool = False
    kind: str = "custom"

    def __init__(self):
        self.step = 0

    def sample_next(self, x, rng) -> np.ndarray:
        W = self._sample(x, self.step, rng)
        self.step += 1
        return W

    def _sample(self, x, step, rng):
        raise NotImplementedError

    def sample_batch(self, X, step, rng) -> np.ndarray:
        return np.stack([self._sample(row, step, rng) for row in X])

    def clone_state(self) -> dict:
        return {"step": self.step}

    def restore_state(self, state: dict) -> None:
        self.step = int(state["step"])

    def clone(self) -> "ProcessModel":
        return copy.deepcopy(self)

    def __repr__(self):
        return f"{type(self).__name__}(m={self.m}, step={self.step})"


class HkSyncModel(ProcessModel):
    kind = "hk_sync"
    claims_balanced = True

    def __init__(self, params: HkParams):
        super().__init__()
        self.params = params
        self.m = params.m
        self.diagonal_bound = 1.0 / params.m

    def _sample(self, x, step, rng):
        return hk_sync_matrix(x, self.params)

    def sample_batch(self, X, step, rng):
        adj = np.abs(X[:, :, None] - X[:, None, :]) <= self.params.epsilon
        return _average_rows(adj)


class AsyncHkModel(ProcessModel):
    kind = "hk_async"
    claims_balanced = True

    def __init__(self, params: AsyncHkParams):
        super().__init__()
        self.params = params
        self.m = m = params.base.m
        self.diagonal_bound = 1.0 / m
        self._eps = params.base.epsilon
        self._eye = np.eye(m)
        self._cum = np.cumsum(params.pick_probabilities)
        self._cum[-1] = 1.0

    def _picks(self, rng, size=None):
        u = rng.random(size)
        return np.minimum(np.searchsorted(self._cum, u, side="right"), self.m - 1)

    def _sample(self, x, step, rng):
        i = int(self._picks(rng))
        W = self._eye.copy()
        nbr = np.abs(x - x[i]) <= self._eps
        W[i] = nbr / np.count_nonzero(nbr)
        return W

    def sample_batch(self, X, step, rng):
        B, m = X.shape
        rows = np.arange(B)
        picks = self._picks(rng, B)
        nbr = np.abs(X - X[rows, picks][:, None]) <= self._eps
        W = np.broadcast_to(self._eye, (B, m, m)).copy()
        W[rows, picks] = _average_rows(nbr)
        return W


class LinkFailureHkModel(ProcessModel):
    kind = "hk_linkfail"
    claims_balanced = True

    def __init__(self, params: LinkFailParams):
        super().__init__()
        self.params = params
        self.m = params.base.m
        self.diagonal_bound = 1.0 / self.m

    def _sample(self, x, step, rng):
        return hk_linkfail_matrix(x, self.params, step, rng)

    def sample_batch(self, X, step, rng):
        B, m = X.shape
        p = self.params.failure_prob(step)
        if not 0.0 <= p <= 1.0:
            raise ModelError(f"failure probability {p} at step {step} outside [0, 1]")
        adj = np.abs(X[:, :, None] - X[:, None, :]) <= self.params.base.epsilon
        adj &= (rng.random((B, m, m)) >= p) | np.eye(m, dtype=bool)
        return _average_rows(adj)


class RandomConfidenceHkModel(ProcessModel):
    kind = "hk_randconf"
    claims_balanced = True

    def __init__(self, params: RandConfParams):
        super().__init__()
        self.params = params
        self.m = params.base.m
        self.diagonal_bound = 1.0 / self.m

    def _sample(self, x, step, rng):
        return hk_randconf_matrix(x, self.params, step, rng)

    def sample_batch(self, X, step, rng):
        eps = np.asarray(self.params.confidence_sampler(step, X.shape, rng), dtype=float)
        if not (np.all(np.isfinite(eps)) and np.all(eps >= 0)):
            raise ModelError("confidence sampler returned negative or non-finite values")
        adj = np.abs(X[:, :, None] - X[:, None, :]) <= eps[:, :, None]
        return _average_rows(adj)


class GossipModel(ProcessModel):
    kind = "gossip"
    claims_balanced = True

    def __init__(self, params: GossipParams):
        super().__init__()
        self.params = params
        self.m = params.m
        self.diagonal_bound = 1.0 - params.gamma_high
        self._eye = np.eye(params.m)

    def _gamma(self, step, size, rng):
        g = self.params.gamma_sampler(step, size, rng)
        lo, hi = self.params.gamma_low, self.params.gamma_high
        if size is None:
            g = float(g)
            ok = lo <= g <= hi
        else:
            g = np.asarray(g, dtype=float)
            ok = bool(np.all((g >= lo) & (g <= hi)))
        if not ok:
            raise ModelError(f"gamma sample outside [{lo}, {hi}]")
        return g

    def sample_pair(self, x, rng):
        return gossip_sample_pair(x, self.params, rng)

    def _sample(self, x, step, rng):
        pair = gossip_sample_pair(x, self.params, rng)
        if pair is None:
            return self._eye.copy()
        i, j = pair
        g = self._gamma(step, None, rng)
        W = self._eye.copy()
        W[j, j] = 1.0 - g
        W[j, i] = g
        return W

    def sample_pairs(self, X, rng):
        """Vectorized endogenous-uniform pair draw; receiver is -1 for no-op rows."""
        B, m = X.shape
        rows = np.arange(B)
        senders = np.minimum((rng.random(B) * m).astype(np.int64), m - 1)
        nbr = np.abs(X - X[rows, senders][:, None]) <= self.params.epsilon
        nbr[rows, senders] = False
        counts = nbr.sum(axis=1)
        r = np.minimum((rng.random(B) * counts).astype(np.int64), np.maximum(counts - 1, 0))
        receivers = np.argmax(np.cumsum(nbr, axis=1) > r[:, None], axis=1)
        receivers[counts == 0] = -1
        return senders, receivers

    def sample_batch(self, X, step, rng):
        if callable(self.params.pair_rule):
            return super().sample_batch(X, step, rng)
        B, m = X.shape
        senders, receivers = self.sample_pairs(X, rng)
        g = np.asarray(self._gamma(step, B, rng), dtype=float)
        W = np.broadcast_to(self._eye, (B, m, m)).copy()
        act = np.flatnonzero(receivers >= 0)
        W[act, receivers[act], receivers[act]] = 1.0 - g[act]
        W[act, receivers[act], senders[act]] = g[act]
        return W


class FixedMatrixModel(ProcessModel):
    """Emits the same matrix every step (test and reference model)."""

    kind = "fixed"

    def __init__(self, W, claims_balanced: bool = False):
        super().__init__()
        W = np.array(W, dtype=float)
        self.W = W
        self.m = W.shape[0]
        d = float(W.diagonal().min())
        self.diagonal_bound = d if d > 0 else None
        self.claims_balanced = claims_balanced

    def _sample(self, x, step, rng):
        return self.W.copy()

    def sample_batch(self, X, step, rng):
        return np.broadcast_to(self.W, (X.shape[0], self.m, self.m)).copy()


class CyclicMatrixModel(ProcessModel):
    """Cycles deterministically through a list of matrices by step."""

    kind = "cyclic"

    def __init__(self, matrices: Sequence):
        super().__init__()
        self.matrices = [np.array(W, dtype=float) for W in matrices]
        self.m = self.matrices[0].shape[0]
        d = min(float(W.diagonal().min()) for W in self.matrices)
        self.diagonal_bound = d if d > 0 else None

    def _sample(self, x, step, rng):
        return self.matrices[step % len(self.matrices)].copy()


MODEL_KINDS = {
    cls.kind: cls
    for cls in (HkSyncModel, AsyncHkModel, LinkFailureHkModel, RandomConfidenceHkModel, GossipModel)
}
