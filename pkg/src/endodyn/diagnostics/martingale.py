"""Martingale diagnostics and the absolute probability process.

The absolute probability vector at step ``k`` is estimated as the average
over simulated futures of the column means of the backward product
``W(k+T) ... W(k+1)``, truncated at horizon ``T``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..engine import mean_se, resample_next, run_futures
from ..errors import NonConvexCatalog
from ..linalg import apply_batch, v_ell_weights

Z_DEFAULT = 3.0
EXACT_SLACK = 1e-12
JACKKNIFE_GROUPS = 20
DEFAULT_INNER = 8

CONVEX_CATALOG = {
    "square": np.square,
    "abs": np.abs,
    "exp": np.exp,
    "linear": lambda t: np.asarray(t, dtype=float),
}


def convex_function(g):
    """Look up a catalog function by name; callables pass through with a warning."""
    if callable(g):
        warnings.warn("user-supplied g is not checked for convexity", stacklevel=3)
        return g
    try:
        return CONVEX_CATALOG[g]
    except KeyError:
        raise NonConvexCatalog(f"{g!r} is not one of {sorted(CONVEX_CATALOG)}") from None


@dataclass
class ProbeResult:
    replica: int
    step: int
    value: float
    next_mean: float
    next_se: float
    value_se: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def increment(self) -> float:
        return self.next_mean - self.value

    @property
    def increment_se(self) -> float:
        return float(np.hypot(self.next_se, self.value_se))


@dataclass
class MartingaleReport:
    """Conditional increments at probe snapshots.

    ``direction`` is ``"sub"`` (increments should be >= 0) or ``"super"``
    (<= 0); a probe violates when its increment is on the wrong side by more
    than ``z`` standard errors.
    """

    name: str
    direction: str
    probes: list
    n_samples: int
    z: float = Z_DEFAULT
    notes: list = field(default_factory=list)

    def _violates(self, p: ProbeResult) -> bool:
        slack = self.z * p.increment_se + EXACT_SLACK
        if self.direction == "sub":
            return p.increment < -slack
        return p.increment > slack

    @property
    def violations(self) -> list:
        return [p for p in self.probes if self._violates(p)]

    @property
    def violation_rate(self) -> float:
        return len(self.violations) / len(self.probes) if self.probes else 0.0

    @property
    def verdict(self) -> str:
        ok = not self.violations
        return f"{self.direction}martingale-consistent" if ok else "violated"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "direction": self.direction,
            "n_samples": self.n_samples,
            "z": self.z,
            "verdict": self.verdict,
            "violation_count": len(self.violations),
            "violation_rate": self.violation_rate,
            "probes": [
                {
                    "replica": p.replica,
                    "step": p.step,
                    "value": p.value,
                    "value_se": p.value_se,
                    "next_mean": p.next_mean,
                    "next_se": p.next_se,
                    "increment": p.increment,
                    "increment_se": p.increment_se,
                    **p.extra,
                }
                for p in self.probes
            ],
            "notes": list(self.notes),
        }


# ----------------------------------------------------------------------------
# V_ell


def martingale_test_v_ell(model, snaps, ell, beta: float, n_samples: int, seeds,
                          z: float = Z_DEFAULT) -> MartingaleReport:
    """Conditional increment of ``V_ell = sum_{i<=ell} beta^i z_i`` at each probe.

    ``ell`` may be an int or a sequence; every ``ell`` reuses the same draws.
    The submartingale property is only claimed for ``beta`` at most half the
    weak-reciprocity coefficient of the process.
    """
    ells = [ell] if np.isscalar(ell) else list(ell)
    m = model.m
    if not 0 < beta <= 0.5:
        raise ValueError(f"beta={beta} outside (0, 1/2]")
    probes = []
    for snap in snaps:
        Ws = resample_next(model, snap, n_samples, seeds)
        X1 = apply_batch(Ws, np.broadcast_to(snap.state, (n_samples, m)))
        Z1 = np.sort(X1, axis=1)
        z0 = np.sort(snap.state)
        for l in ells:
            w = v_ell_weights(m, l, beta)
            # one row-wise formula for both sides, so identical rows give identical values
            v0 = float((z0 * w).sum())
            nm, nse = mean_se((Z1 * w).sum(axis=1))
            probes.append(ProbeResult(snap.replica, snap.step, v0, float(nm), float(nse),
                                      extra={"ell": l}))
    rep = MartingaleReport("v_ell", "sub", probes, n_samples, z)
    rep.notes.append(f"beta={beta!r}")
    if m in ells:
        rep.notes.append("ell=m lies outside the sorted-prefix argument; reported only")
    return rep


# ----------------------------------------------------------------------------
# absolute probability process


@dataclass
class AbsProbEstimate:
    step: int
    horizon: int
    pi: np.ndarray
    se: np.ndarray
    n_samples: int
    spread_half: float
    spread_full: float
    drift: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "horizon": self.horizon,
            "pi": self.pi.tolist(),
            "se": self.se.tolist(),
            "n_samples": self.n_samples,
            "column_spread_half": self.spread_half,
            "column_spread_full": self.spread_full,
            "truncation_drift": self.drift,
        }


def _futures_label(snap, name):
    return f"{snap.label}/futures/{snap.step}/{name}"


def estimate_abs_prob(model, snap, horizon: int, n_samples: int, seeds,
                      name: str = "pi") -> AbsProbEstimate:
    """Average column means of ``n_samples`` truncated backward products.

    Also reports truncation proxies: the mean largest within-column spread of
    the product at ``T/2`` and ``T`` (zero once the product is rank one), and
    the mean sup-distance between the two column-mean vectors.
    """
    if horizon < 1 or n_samples < 1:
        raise ValueError("horizon and n_samples must be positive")
    m = model.m
    half = max(1, horizon // 2)
    X0 = np.broadcast_to(snap.state, (n_samples, m))
    fut = run_futures(model, X0, snap.step, horizon, seeds, _futures_label(snap, name),
                      record=(half,), spreads=True)
    pi, se = mean_se(fut[horizon])
    drift = float(np.abs(fut[horizon] - fut[half]).max(axis=1).mean())
    return AbsProbEstimate(
        snap.step, horizon, pi, se, n_samples,
        float(fut["spread"][half].mean()), float(fut["spread"][horizon].mean()), drift,
    )


@dataclass
class IdentityResidual:
    """``E[pi(k+1)^T W(k+1) | F_k] - pi(k)^T`` estimated with common futures."""

    step: int
    horizon: int
    residual: np.ndarray
    se: np.ndarray
    n_samples: int

    @property
    def sup(self) -> float:
        return float(np.abs(self.residual).max())

    @property
    def sup_se(self) -> float:
        return float(self.se[np.argmax(np.abs(self.residual))])

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "horizon": self.horizon,
            "residual": self.residual.tolist(),
            "se": self.se.tolist(),
            "sup": self.sup,
            "sup_se": self.sup_se,
            "n_samples": self.n_samples,
        }


def abs_prob_identity_residual(model, snap, horizon: int, n_samples: int, seeds,
                               name: str = "identity") -> IdentityResidual:
    """Residual of ``E[pi(k+1)^T W(k+1) | F_k] = pi(k)^T`` at truncation ``horizon``.

    Each simulated future of length ``T+1`` from the snapshot yields both a
    draw of ``pi(k)`` (its first ``T`` matrices) and a draw of
    ``pi(k+1)^T W(k+1)`` (all ``T+1`` matrices, with ``pi(k+1)`` built from
    the last ``T``).  The paired difference isolates the truncation error;
    the stream label does not depend on ``horizon``, so runs at different
    horizons share their leading steps.
    """
    m = model.m
    X0 = np.broadcast_to(snap.state, (n_samples, m))
    fut = run_futures(model, X0, snap.step, horizon + 1, seeds, _futures_label(snap, name),
                      record=(horizon,))
    res, se = mean_se(fut[horizon + 1] - fut[horizon])
    return IdentityResidual(snap.step, horizon, res, se, n_samples)


# ----------------------------------------------------------------------------
# convex Lyapunov family


def _jensen_gap_groups(pis, x, g, groups):
    """Plug-in gap on all samples plus its grouped-jackknife standard error."""
    n = (pis.shape[0] // groups) * groups
    if np.ptp(x) == 0:
        # the gap vanishes at consensus for every probability vector
        return 0.0, 0.0
    gx = g(x)

    def gap(p):
        return float(p @ gx - g(p @ x))

    full = gap(pis.mean(axis=0))
    if n < 2 * groups:
        return full, 0.0
    sums = pis[:n].reshape(groups, n // groups, -1).sum(axis=1)
    total = sums.sum(axis=0)
    loo = np.array([gap((total - s) / (n - n // groups)) for s in sums])
    se = np.sqrt((groups - 1) / groups * np.sum((loo - loo.mean()) ** 2))
    return full, float(se)


def lyapunov_test(model, snaps, g, horizon: int, n_samples: int, seeds,
                  n_inner: int = DEFAULT_INNER, z: float = Z_DEFAULT) -> MartingaleReport:
    """Supermartingale check of ``V_k = sum_i pi_i g(x_i) - g(pi^T x)``.

    At each probe ``V_k`` uses ``n_samples`` futures for ``pi(k)``.  For
    ``E[V_{k+1} | F_k]`` each of ``n_samples`` draws of ``W(k+1)`` gets
    ``n_inner`` futures from the post-step state; the linear term uses their
    mean and ``g(pi^T x)`` is delete-one jackknifed over them, which removes the
    leading small-sample bias of the nonlinear term without breaking
    ``V >= 0``.
    """
    g = convex_function(g)
    m = model.m
    probes = []
    for snap in snaps:
        x = snap.state
        X0 = np.broadcast_to(x, (n_samples, m))
        fut0 = run_futures(model, X0, snap.step, horizon, seeds, _futures_label(snap, "lyap0"))
        v0, v0_se = _jensen_gap_groups(fut0[horizon], x, g, JACKKNIFE_GROUPS)

        Ws = resample_next(model, snap, n_samples, seeds)
        X1 = apply_batch(Ws, X0)
        inner = np.repeat(X1, n_inner, axis=0)
        fut1 = run_futures(model, inner, snap.step + 1, horizon, seeds,
                           _futures_label(snap, "lyap1"))
        pis = fut1[horizon].reshape(n_samples, n_inner, m)
        lin = np.einsum("nrm,nm->n", pis, g(X1)) / n_inner
        y = np.einsum("nrm,nm->nr", pis, X1)
        ybar = y.mean(axis=1)
        if n_inner > 1:
            loo = (y.sum(axis=1, keepdims=True) - y) / (n_inner - 1)
            gterm = n_inner * g(ybar) - (n_inner - 1) * g(loo).mean(axis=1)
        else:
            gterm = g(ybar)
        gaps = np.where(np.ptp(X1, axis=1) == 0, 0.0, lin - gterm)
        v1, v1_se = mean_se(gaps)
        probes.append(ProbeResult(snap.replica, snap.step, v0, float(v1), float(v1_se), v0_se,
                                  extra={"pi": fut0[horizon].mean(axis=0).tolist()}))
    rep = MartingaleReport("lyapunov", "super", probes, n_samples, z)
    rep.notes.append(f"horizon={horizon}, inner futures per draw={n_inner}")
    return rep
