"""Monte-Carlo checks of the one-step conditional structure of a process.

Every check draws W(k+1) from a snapshot (see :func:`engine.resample_next`),
forms paired per-draw numerator and denominator quantities and reports
ratios of their means.  Conventions shared by all checks:

* a constraint whose denominator estimate is within ``z`` standard errors of
  zero is vacuous and gets ratio ``+inf``;
* the ratio's standard error is the delta-method one computed from the paired
  residuals ``num - ratio * den``;
* against a required coefficient ``c`` the test statistic is the paired
  margin ``num - c * den``; a hard violation is a mean margin below
  ``-z`` standard errors (with ``1e-12`` absolute slack for exact cases).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..engine import mean_se, resample_next
from ..errors import TooLarge
from ..linalg import (
    MAX_ENUM_AGENTS,
    apply_batch,
    batch_flow,
    enumerate_nontrivial_subsets,
    paired_flow,
)

Z_DEFAULT = 3.0
EXACT_SLACK = 1e-12
SUBSET_CHUNK = 512


@dataclass
class RatioReport:
    """Paired ratio estimates for a family of constraints ``E[num] >= c E[den]``."""

    kind: str
    labels: list
    num: np.ndarray
    num_se: np.ndarray
    den: np.ndarray
    den_se: np.ndarray
    ratio: np.ndarray
    ratio_se: np.ndarray
    n_samples: int
    z: float = Z_DEFAULT
    bound: float | None = None
    margin: np.ndarray | None = None
    margin_se: np.ndarray | None = None
    notes: list = field(default_factory=list)

    @property
    def vacuous(self) -> np.ndarray:
        return np.isinf(self.ratio)

    @property
    def argmin(self) -> int | None:
        if self.vacuous.all():
            return None
        return int(np.argmin(self.ratio))

    @property
    def coefficient(self) -> float:
        """Smallest estimated ratio (``+inf`` when every constraint is vacuous)."""
        return float(self.ratio.min()) if self.ratio.size else np.inf

    @property
    def coefficient_se(self) -> float:
        i = self.argmin
        return 0.0 if i is None else float(self.ratio_se[i])

    @property
    def certified(self) -> float:
        """Coefficient minus ``z`` standard errors."""
        c = self.coefficient
        return c if np.isinf(c) else c - self.z * self.coefficient_se

    @property
    def violations(self) -> np.ndarray:
        if self.bound is None:
            return np.zeros(0, dtype=int)
        bad = (self.margin < -self.z * self.margin_se - EXACT_SLACK) & ~self.vacuous
        return np.flatnonzero(bad)

    @property
    def passed(self) -> bool:
        return self.violations.size == 0

    def to_dict(self) -> dict:
        records = []
        for n, label in enumerate(self.labels):
            rec = {
                "constraint": label,
                "num": float(self.num[n]),
                "num_se": float(self.num_se[n]),
                "den": float(self.den[n]),
                "den_se": float(self.den_se[n]),
                "ratio": float(self.ratio[n]),
                "ratio_se": float(self.ratio_se[n]),
            }
            if self.bound is not None:
                rec["margin"] = float(self.margin[n])
                rec["margin_se"] = float(self.margin_se[n])
            records.append(rec)
        out = {
            "kind": self.kind,
            "n_samples": self.n_samples,
            "z": self.z,
            "coefficient": self.coefficient,
            "coefficient_se": self.coefficient_se,
            "certified": self.certified,
            "records": records,
            "notes": list(self.notes),
        }
        if self.bound is not None:
            out["bound"] = self.bound
            out["violations"] = [self.labels[i] for i in self.violations]
            out["verdict"] = "pass" if self.passed else "violation"
        return out


def _ratio_stats(num, den, z, bound):
    n = num.shape[0]
    nm, nse = mean_se(num)
    dm, dse = mean_se(den)
    defined = (dm > 0) & (dm > z * dse)
    ratio = np.full(nm.shape, np.inf)
    ratio[defined] = nm[defined] / dm[defined]
    r = np.where(defined, ratio, 0.0)
    _, rse = mean_se(num - r * den)
    rse = np.where(defined, rse / np.where(defined, dm, 1.0), 0.0)
    out = dict(num=nm, num_se=nse, den=dm, den_se=dse, ratio=ratio, ratio_se=rse, n_samples=n)
    if bound is not None:
        out["margin"], out["margin_se"] = mean_se(num - bound * den)
    return out


def _concat(parts):
    keys = parts[0].keys()
    return {
        k: parts[0][k] if k == "n_samples" else np.concatenate([p[k] for p in parts])
        for k in keys
    }


def _draws(model, snap, n_samples, seeds, draws):
    if draws is not None:
        return np.asarray(draws)
    return resample_next(model, snap, n_samples, seeds)


def _members(mask) -> list[int]:
    return [int(i) + 1 for i in np.flatnonzero(mask)]


# ----------------------------------------------------------------------------


class BalancednessReport(RatioReport):
    """``num = W_{S^c S}`` and ``den = W_{S S^c}`` for every nontrivial ``S``."""


def check_balancedness(
    model,
    snap,
    n_samples: int,
    seeds,
    z: float = Z_DEFAULT,
    bound: float | None = None,
    draws=None,
) -> BalancednessReport:
    """Estimate the balancedness coefficient over all nontrivial subsets.

    One batch of draws is shared by every subset.  ``bound`` turns the report
    into a test of ``E[W_{S^c S}] >= bound * E[W_{S S^c}]``.
    """
    m = model.m
    if m > MAX_ENUM_AGENTS:
        raise TooLarge(f"m={m} exceeds the enumeration limit of {MAX_ENUM_AGENTS}")
    Ws = _draws(model, snap, n_samples, seeds, draws)
    subsets = enumerate_nontrivial_subsets(m)
    parts = []
    for lo in range(0, len(subsets), SUBSET_CHUNK):
        S = subsets[lo:lo + SUBSET_CHUNK]
        num = batch_flow(Ws, ~S, S)
        den = batch_flow(Ws, S, ~S)
        parts.append(_ratio_stats(num, den, z, bound))
    labels = [{"S": _members(S)} for S in subsets]
    return BalancednessReport("balancedness", labels, z=z, bound=bound, **_concat(parts))


class SubsymmetryReport(RatioReport):
    """``num = W_ij`` and ``den = W_ji`` for every ordered pair ``i != j``.

    Sub-symmetry with coefficient eta implies balancedness with the same
    coefficient (sum the entrywise inequalities over ``S x S^c``).
    """


def check_subsymmetry(model, snap, n_samples: int, seeds, z: float = Z_DEFAULT,
                      bound: float | None = None, draws=None) -> SubsymmetryReport:
    m = model.m
    Ws = _draws(model, snap, n_samples, seeds, draws)
    ii, jj = np.nonzero(~np.eye(m, dtype=bool))
    stats = _ratio_stats(Ws[:, ii, jj], Ws[:, jj, ii], z, bound)
    labels = [{"i": int(i) + 1, "j": int(j) + 1} for i, j in zip(ii, jj)]
    rep = SubsymmetryReport("subsymmetry", labels, z=z, bound=bound, **stats)
    rep.notes.append("sub-symmetry with coefficient eta implies balancedness with coefficient eta")
    return rep


# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaptedSequenceRule:
    """Deterministic map from a state to an agent subset of fixed size ``ell``.

    ``prefix``: indices of the ``ell`` smallest entries (stable ordering);
    ``suffix``: the ``ell`` largest; ``constant``: ``members``; ``custom``:
    ``fn(x) -> mask``, checked for size ``ell``.
    """

    kind: str
    ell: int
    members: tuple = ()
    fn: Callable | None = None

    @property
    def name(self) -> str:
        if self.kind == "constant":
            return f"constant{[i + 1 for i in self.members]}"
        return f"{self.kind}-{self.ell}"

    def masks(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B, m = X.shape
        out = np.zeros((B, m), dtype=bool)
        rows = np.arange(B)[:, None]
        if self.kind in ("prefix", "suffix"):
            order = np.argsort(X, axis=1, kind="stable")
            sel = order[:, : self.ell] if self.kind == "prefix" else order[:, m - self.ell:]
            out[rows, sel] = True
        elif self.kind == "constant":
            out[:, list(self.members)] = True
        elif self.kind == "custom":
            for b in range(B):
                out[b] = np.asarray(self.fn(X[b]), dtype=bool)
        else:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if not np.all(out.sum(axis=1) == self.ell):
            raise ValueError(f"rule {self.name} produced a subset of the wrong size")
        return out

    def mask(self, x) -> np.ndarray:
        return self.masks(x)[0]


def sorted_rules(m: int) -> list[AdaptedSequenceRule]:
    """Sorted-prefix and sorted-suffix rules for ``ell = 1 .. m-1``."""
    return [AdaptedSequenceRule(kind, ell) for kind in ("prefix", "suffix") for ell in range(1, m)]


def reciprocity_coefficient(gamma: float, a: float, m: int) -> float:
    """Weak-reciprocity coefficient ``gamma * a / (4 m)`` implied by balancedness ``a``
    and diagonal bound ``gamma``."""
    return gamma * a / (4 * m)


class WeakReciprocityReport(RatioReport):
    """``num = W_{S(k+1)^c S(k)}`` and ``den = W_{S(k+1) S(k)^c}`` per rule."""


def check_weak_reciprocity(
    model,
    snap,
    rules: Sequence[AdaptedSequenceRule],
    n_samples: int,
    seeds,
    gamma: float | None = None,
    a: float | None = None,
    z: float = Z_DEFAULT,
    draws=None,
) -> WeakReciprocityReport:
    """Weak reciprocity along a finite family of adapted regular sequences.

    ``S(k)`` is the rule applied to the snapshot state and ``S(k+1)`` the same
    rule applied to ``W x(k)`` for each draw.  With ``gamma`` (defaulting to the
    model's diagonal bound) and ``a`` both known, each rule is tested against
    the coefficient ``gamma * a / (4 m)``.
    """
    m = model.m
    Ws = _draws(model, snap, n_samples, seeds, draws)
    n = Ws.shape[0]
    x = snap.state
    X1 = apply_batch(Ws, np.broadcast_to(x, (n, m)))
    gamma = model.diagonal_bound if gamma is None else gamma
    bound = None
    if gamma is not None and a is not None and np.isfinite(a):
        bound = reciprocity_coefficient(gamma, a, m)
    parts, labels = [], []
    for rule in rules:
        Sk = np.broadcast_to(rule.mask(x), (n, m))
        Sk1 = rule.masks(X1)
        num = paired_flow(Ws, ~Sk1, Sk)[:, None]
        den = paired_flow(Ws, Sk1, ~Sk)[:, None]
        parts.append(_ratio_stats(num, den, z, bound))
        labels.append({"rule": rule.name, "S_k": _members(Sk[0])})
    rep = WeakReciprocityReport("weak_reciprocity", labels, z=z, bound=bound, **_concat(parts))
    rep.notes.append(
        "partial certificate: only the listed adapted regular sequences were checked"
    )
    if bound is not None:
        rep.notes.append(f"predicted coefficient gamma*a/(4m) with gamma={gamma!r}, a={a!r}, m={m}")
    return rep


class PairReciprocityReport(RatioReport):
    """``num = 1{(i,j) interacts}`` and ``den = 1{(j,i) interacts}``.

    Agent ``i`` sends to ``j`` when ``W_ji > 0`` for ``i != j``; for gossip this
    is exactly the ordered-pair law of the step.
    """


def check_pair_reciprocity(model, snap, n_samples: int, seeds, z: float = Z_DEFAULT,
                           bound: float | None = None, draws=None) -> PairReciprocityReport:
    m = model.m
    Ws = _draws(model, snap, n_samples, seeds, draws)
    ii, jj = np.nonzero(~np.eye(m, dtype=bool))
    send = (Ws[:, jj, ii] > 0).astype(float)
    back = (Ws[:, ii, jj] > 0).astype(float)
    stats = _ratio_stats(send, back, z, bound)
    labels = [{"sender": int(i) + 1, "receiver": int(j) + 1} for i, j in zip(ii, jj)]
    return PairReciprocityReport("pair_reciprocity", labels, z=z, bound=bound, **stats)
