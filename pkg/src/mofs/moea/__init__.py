"""SMS-EMOA feature-subset search."""

from .init import (
    InitKind,
    InitStrategy,
    init_binary_random,
    init_fixed_cardinality,
    init_segmented,
    repair_empty,
    segment_sizes,
)
from .pareto import dominates, hv_contribution_2d, hypervolume_2d, non_dominated_sort
from .sms_emoa import (
    MoeaConfig,
    ReferenceMode,
    RunHistory,
    Snapshot,
    default_reference_point,
    rank_and_contribution,
    run,
    survival_select,
)
from .variation import binary_tournament, make_offspring, vary

__all__ = [
    "InitKind",
    "InitStrategy",
    "init_binary_random",
    "init_fixed_cardinality",
    "init_segmented",
    "repair_empty",
    "segment_sizes",
    "dominates",
    "hv_contribution_2d",
    "hypervolume_2d",
    "non_dominated_sort",
    "MoeaConfig",
    "ReferenceMode",
    "RunHistory",
    "Snapshot",
    "default_reference_point",
    "rank_and_contribution",
    "run",
    "survival_select",
    "binary_tournament",
    "make_offspring",
    "vary",
]
