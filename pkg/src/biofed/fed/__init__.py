"""Federated orchestration: server round loop, client runtime, aggregation."""

from .client import ClientRuntime
from .rounds import (
    CENTRALIZED_ID,
    FINAL_CHECKPOINT,
    RUN_LOG,
    TIMING_LOG,
    RunWriter,
    derive_client_seed,
    fedavg,
    make_evaluator,
    run_centralized,
    run_federation,
    run_round,
)
from .types import (
    AGGREGATING,
    COLLECTING,
    DISTRIBUTING,
    DONE,
    FAILED,
    FederationConfig,
    FitResult,
    RoundReport,
    RoundState,
)

__all__ = [
    "ClientRuntime",
    "CENTRALIZED_ID",
    "FINAL_CHECKPOINT",
    "RUN_LOG",
    "TIMING_LOG",
    "RunWriter",
    "derive_client_seed",
    "fedavg",
    "make_evaluator",
    "run_centralized",
    "run_federation",
    "run_round",
    "AGGREGATING",
    "COLLECTING",
    "DISTRIBUTING",
    "DONE",
    "FAILED",
    "FederationConfig",
    "FitResult",
    "RoundReport",
    "RoundState",
]
