"""Conditional checks at a few probe snapshots of asynchronous HK.

Each probe freezes the process at some step, redraws the next transition
many times and estimates conditional expectations from those draws.  The
script chains the checks the way the convergence argument does: the
certified balancedness coefficient feeds the weak-reciprocity bound, whose
certified coefficient in turn fixes beta for the V_ell submartingale.
"""
from endodyn import AsyncHkModel, AsyncHkParams, HkParams
from endodyn.diagnostics import (
    check_balancedness,
    check_weak_reciprocity,
    lyapunov_test,
    martingale_test_v_ell,
    sorted_rules,
)
from endodyn.engine import probe_snapshots

m, seed, n = 5, 2024, 5000
model = AsyncHkModel(AsyncHkParams(HkParams(m, 0.3)))
snaps = probe_snapshots(model, "uniform(0,1)", 5, 25, seed)

bal = [check_balancedness(model, s, n, seed, bound=1 / m**2) for s in snaps]
a = min(r.certified for r in bal)
print(f"balancedness: certified coefficient {a:.3f} (uniform picks predict >= {1 / m**2:.3f})")

wr = [check_weak_reciprocity(model, s, sorted_rules(m), n, seed, a=a) for s in snaps]
alpha = min(r.certified for r in wr)
print(f"weak reciprocity: bound {wr[0].bound:.5f}, certified coefficient {alpha:.3f}, "
      f"violations {sum(len(r.violations) for r in wr)}")

beta = min(alpha / 2, 0.5)
rep = martingale_test_v_ell(model, snaps, range(1, m), beta, n, seed)
print(f"V_ell with beta={beta:.3f}: {rep.verdict}")
for p in rep.probes[: m - 1]:
    print(f"  probe step {p.step:>2} ell={p.extra['ell']}: increment {p.increment:+.2e} +/- {p.increment_se:.1e}")

lyap = lyapunov_test(model, snaps, "square", 100, 500, seed, n_inner=4)
print(f"Jensen-gap Lyapunov function: {lyap.verdict}")
for p in lyap.probes:
    print(f"  step {p.step:>2}: V={p.value:.4f}  E[V next]={p.next_mean:.4f} +/- {p.next_se:.1e}")
