"""Simulation and Monte-Carlo diagnostics for random averaging dynamics
``x(k+1) = W(k+1) x(k)`` driven by state-dependent (endogenous) stochastic
matrices."""
from .engine import (
    SeedSpec,
    Snapshot,
    Trajectory,
    child_seed,
    child_stream,
    conditional_mean,
    initial_state,
    make_snapshot,
    probe_snapshots,
    replay,
    resample_next,
    simulate,
    snapshot_at,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    EndodynError,
    IndexOutOfRange,
    ModelError,
    NegativeEntry,
    NonConvexCatalog,
    NonFinite,
    NotConverged,
    RowSumViolation,
    SelfGossip,
    TooLarge,
)
from .linalg import (
    Ordering,
    apply,
    enumerate_nontrivial_subsets,
    flow,
    ordering,
    subset,
    v_ell,
    validate_stochastic,
)
from .models import (
    AsyncHkModel,
    AsyncHkParams,
    CyclicMatrixModel,
    FixedMatrixModel,
    GossipModel,
    GossipParams,
    HkParams,
    HkSyncModel,
    LinkFailParams,
    LinkFailureHkModel,
    ProcessModel,
    RandConfParams,
    RandomConfidenceHkModel,
)

__version__ = "0.1.0"
