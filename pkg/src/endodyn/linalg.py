"""Deterministic primitives for averaging dynamics.

Matrices are plain ``float64`` arrays; subsets of agents are boolean masks
of length ``m`` (``mask[j]`` is True when agent ``j`` belongs to the set).
Agents are 0-based everywhere in code.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    NegativeEntry,
    NonFinite,
    RowSumViolation,
    TooLarge,
)

ROW_SUM_TOL = 1e-12
MAX_ENUM_AGENTS = 20


class Ordering(NamedTuple):
    """Ascending rearrangement of a state vector.

    ``sorted[p] == original[permutation[p]]``; ties keep the original index
    order so the lower-``l`` index set is a deterministic function of the state.
    """

    sorted: np.ndarray
    permutation: np.ndarray


def validate_stochastic(raw, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Check that ``raw`` is row-stochastic and return a clean copy.

    Entries in ``[-tol, 0)`` are clipped to zero and each row is divided by
    its sum; both corrections are only made inside the tolerance, anything
    larger raises.
    """
    W = np.array(raw, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {W.shape}")
    if W.shape[0] < 2:
        raise DimensionMismatch("need at least two agents")
    if not np.all(np.isfinite(W)):
        raise NonFinite("matrix has NaN or infinite entries")
    neg = W < -tol
    if neg.any():
        i, j = np.argwhere(neg)[0]
        raise NegativeEntry(f"entry ({i}, {j}) = {W[i, j]!r} is negative")
    np.maximum(W, 0.0, out=W)
    sums = W.sum(axis=1)
    bad = np.abs(sums - 1.0) > tol
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise RowSumViolation(f"row {i} sums to {sums[i]!r}")
    W /= sums[:, None]
    W.flags.writeable = False
    return W


def as_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"state must be 1-d, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("state has NaN or infinite entries")
    return x


def apply(W: np.ndarray, x) -> np.ndarray:
    """One averaging step ``W @ x``.

    The result is clipped to ``[min(x), max(x)]``: every entry is a convex
    combination of ``x``, and the clip removes the last-ulp excursions of the
    floating-point dot product (so a consensus vector is an exact fixed point).
    """
    x = np.asarray(x, dtype=float)
    if W.shape[1] != x.shape[0]:
        raise DimensionMismatch(f"matrix {W.shape} vs state of length {x.shape[0]}")
    return np.clip(W @ x, x.min(), x.max())


def apply_batch(Ws: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row-wise :func:`apply` for ``(B, m, m)`` matrices and ``(B, m)`` states."""
    Y = np.einsum("bij,bj->bi", Ws, X)
    return np.clip(Y, X.min(axis=1, keepdims=True), X.max(axis=1, keepdims=True))


def _check_mask(mask, m: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (m,):
        raise DimensionMismatch(f"subset mask of shape {mask.shape}, expected ({m},)")
    return mask


def flow(W: np.ndarray, S, T) -> float:
    """Total weight ``sum_{i in S, j in T} W[i, j]``."""
    m = W.shape[0]
    S = _check_mask(S, m)
    T = _check_mask(T, m)
    return float(W[np.ix_(S, T)].sum())


def batch_flow(Ws: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Flows for a stack of matrices and a stack of subset pairs.

    ``Ws`` is ``(n, m, m)``, ``rows`` and ``cols`` are ``(s, m)`` masks.
    Returns the ``(n, s)`` array of flows.
    """
    r = np.asarray(rows, dtype=float)
    c = np.asarray(cols, dtype=float)
    return np.einsum("si,nij,sj->ns", r, Ws, c, optimize=True)


def paired_flow(Ws: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Flow of matrix ``n`` from ``rows[n]`` to ``cols[n]``; returns ``(n,)``."""
    r = np.asarray(rows, dtype=float)
    c = np.asarray(cols, dtype=float)
    return np.einsum("ni,nij,nj->n", r, Ws, c, optimize=True)


def complement(mask) -> np.ndarray:
    return ~np.asarray(mask, dtype=bool)


def subset(m: int, members) -> np.ndarray:
    """Boolean mask of length ``m`` with ``members`` set."""
    mask = np.zeros(m, dtype=bool)
    idx = np.asarray(list(members), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise IndexOutOfRange(f"members {sorted(members)} outside 0..{m - 1}")
    mask[idx] = True
    return mask


def ordering(x) -> Ordering:
    x = as_state(x)
    perm = np.argsort(x, kind="stable")
    return Ordering(x[perm], perm)


def v_ell(z, ell: int, beta: float) -> float:
    """Geometric-weighted sum of the ``ell`` smallest coordinates.

    ``z`` is an :class:`Ordering` or a state vector, which is sorted first.
    Returns ``sum_{i=1..ell} beta**i * z_i``.
    """
    zs = z.sorted if isinstance(z, Ordering) else np.sort(as_state(z))
    m = zs.shape[0]
    if not 1 <= ell <= m:
        raise IndexOutOfRange(f"ell={ell} outside 1..{m}")
    if not 0.0 < beta <= 0.5:
        raise ValueError(f"beta={beta} outside (0, 1/2]")
    weights = beta ** np.arange(1, ell + 1)
    return float(weights @ zs[:ell])


def v_ell_weights(m: int, ell: int, beta: float) -> np.ndarray:
    """Length-``m`` weight vector so that ``V_ell = weights @ sorted``."""
    if not 1 <= ell <= m:
        raise IndexOutOfRange(f"ell={ell} outside 1..{m}")
    w = np.zeros(m)
    w[:ell] = beta ** np.arange(1, ell + 1)
    return w


def enumerate_nontrivial_subsets(m: int) -> np.ndarray:
    """All ``2**m - 2`` proper nonempty subsets in ascending bitmask order.

    Row ``r`` is the mask of bitmask ``r + 1``; agent ``j`` is bit ``j``.
    """
    if m < 2:
        raise ValueError(f"no nontrivial subset of {m} agent(s)")
    if m > MAX_ENUM_AGENTS:
        raise TooLarge(f"m={m} exceeds the enumeration limit of {MAX_ENUM_AGENTS}")
    codes = np.arange(1, 2**m - 1, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
