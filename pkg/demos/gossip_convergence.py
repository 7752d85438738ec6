"""Endogenous gossip: pairs form only between agents within epsilon.

Prints the spread of opinions over time for one run, the final clusters,
and the empirical pairwise reciprocity coefficient at a few snapshots.
"""
import numpy as np

from endodyn import GossipModel, GossipParams, simulate
from endodyn.diagnostics import check_pair_reciprocity, consensus_clusters
from endodyn.engine import probe_snapshots

model = GossipModel(GossipParams(6, 0.4, 0.2, 0.8))
traj = simulate(model, np.linspace(0, 1, 6), 50_000, 7, retain_threshold=0)

for k in (0, 10, 100, 1000, 10_000, 50_000):
    x = traj.states[k]
    print(f"step {k:>6}: spread {np.ptp(x):.3e}  x = {np.array2string(x, precision=4)}")
print("clusters:", consensus_clusters(traj.final).to_report())

snaps = probe_snapshots(model, "equally-spaced(0,1)", 4, 200, 7)
for s in snaps:
    rep = check_pair_reciprocity(model, s, 5000, 7)
    print(f"probe at step {s.step:>3}: pairwise coefficient {rep.coefficient:.3f}")
