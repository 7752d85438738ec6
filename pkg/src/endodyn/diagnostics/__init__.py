"""Empirical checks of balancedness, reciprocity, martingale properties and
limit clustering."""
from .conditions import (
    AdaptedSequenceRule,
    BalancednessReport,
    PairReciprocityReport,
    RatioReport,
    SubsymmetryReport,
    WeakReciprocityReport,
    check_balancedness,
    check_pair_reciprocity,
    check_subsymmetry,
    check_weak_reciprocity,
    reciprocity_coefficient,
    sorted_rules,
)
from .limits import (
    ClusterPartition,
    ConvergenceReport,
    FlowGraph,
    PartitionComparison,
    UnionFind,
    compare_partitions,
    components,
    consensus_clusters,
    flow_graph,
    ordering_convergence,
    symmetric_function_series,
)
from .martingale import (
    AbsProbEstimate,
    IdentityResidual,
    MartingaleReport,
    ProbeResult,
    convex_function,
    abs_prob_identity_residual,
    estimate_abs_prob,
    lyapunov_test,
    martingale_test_v_ell,
)
