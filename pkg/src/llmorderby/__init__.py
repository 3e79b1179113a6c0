"""LLM-backed ORDER BY: five physical access paths over a pluggable oracle."""

__version__ = "0.1.0"

from .algorithms import (
    BatchSizeSearchConfig,
    MergeSortConfig,
    VoteConfig,
    determine_batch_size,
    run_algorithm,
    sort_external_bubble,
    sort_external_merge,
    sort_external_pointwise,
    sort_pointwise,
    sort_quicksort_mv,
    two_way_merge,
)
from .core import Dataset, Direction, Key, RankTask, Ranking, ResponseCache, UsageMeter
from .eval import fit_log_linear, kendall_tau_b, ndcg_at_k
from .oracle import LiveOracle, NoiseModel, SimulatedOracle, TokenCostModel

__all__ = [
    "BatchSizeSearchConfig",
    "Dataset",
    "Direction",
    "Key",
    "LiveOracle",
    "MergeSortConfig",
    "NoiseModel",
    "RankTask",
    "Ranking",
    "ResponseCache",
    "SimulatedOracle",
    "TokenCostModel",
    "UsageMeter",
    "VoteConfig",
    "determine_batch_size",
    "fit_log_linear",
    "kendall_tau_b",
    "ndcg_at_k",
    "run_algorithm",
    "sort_external_bubble",
    "sort_external_merge",
    "sort_external_pointwise",
    "sort_pointwise",
    "sort_quicksort_mv",
    "two_way_merge",
]
