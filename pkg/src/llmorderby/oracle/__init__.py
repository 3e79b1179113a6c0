from .base import (
    BatchSortResult,
    CompareOutcome,
    InvalidOutput,
    Oracle,
    TokenCostModel,
    is_permutation,
    repair_permutation,
)
from .live import LiveOracle, TransportError
from .simulated import ZERO_NOISE, NoiseModel, SimulatedOracle

__all__ = [
    "BatchSortResult",
    "CompareOutcome",
    "InvalidOutput",
    "LiveOracle",
    "NoiseModel",
    "Oracle",
    "SimulatedOracle",
    "TokenCostModel",
    "TransportError",
    "ZERO_NOISE",
    "is_permutation",
    "repair_permutation",
]
