"""Federation domain types and the round status machine."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import StateError, ValidationError
from ..nn.params import ModelParameters
from ..nn.train import TrainConfig

DISTRIBUTING = "distributing"
COLLECTING = "collecting"
AGGREGATING = "aggregating"
DONE = "done"
FAILED = "failed"

_TRANSITIONS = {
    DISTRIBUTING: {COLLECTING, FAILED},
    COLLECTING: {AGGREGATING, FAILED},
    AGGREGATING: {DONE, FAILED},
    DONE: set(),
    FAILED: set(),
}


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int
    rounds: int
    train_config: TrainConfig
    clients_required: int = 0
    round_timeout: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.clients_required == 0:
            object.__setattr__(self, "clients_required", self.num_clients)
        problems = []
        if not isinstance(self.num_clients, int) or self.num_clients < 1:
            problems.append(("num_clients", f"must be a positive integer, got {self.num_clients!r}"))
        if not isinstance(self.rounds, int) or self.rounds < 1:
            problems.append(("rounds", f"must be a positive integer, got {self.rounds!r}"))
        if not isinstance(self.clients_required, int) or self.clients_required < 1:
            problems.append(("clients_required", f"must be a positive integer, got {self.clients_required!r}"))
        elif isinstance(self.num_clients, int) and self.clients_required > self.num_clients:
            problems.append(
                ("clients_required", f"{self.clients_required} exceeds num_clients {self.num_clients}")
            )
        if not self.round_timeout > 0:
            problems.append(("round_timeout", f"must be positive, got {self.round_timeout!r}"))
        if not isinstance(self.seed, int) or self.seed < 0:
            problems.append(("seed", f"must be a nonnegative integer, got {self.seed!r}"))
        if not isinstance(self.train_config, TrainConfig):
            problems.append(("train_config", f"must be a TrainConfig, got {type(self.train_config).__name__}"))
        if problems:
            raise ValidationError(problems)


@dataclass(frozen=True)
class FitResult:
    """One client's round contribution."""

    client_id: str
    round_index: int
    params: ModelParameters
    num_examples: int
    train_loss: float

    def __post_init__(self):
        if self.num_examples < 1:
            raise ValidationError([("num_examples", f"must be at least 1, got {self.num_examples}")])


@dataclass
class RoundState:
    """Server-side state of one round; transitions are checked explicitly."""

    round_index: int
    global_params: ModelParameters
    pending: set = field(default_factory=set)
    received: list = field(default_factory=list)
    status: str = DISTRIBUTING
    failure_reason: str = ""

    def _move(self, new_status):
        if new_status not in _TRANSITIONS[self.status]:
            raise StateError(f"illegal transition {self.status} -> {new_status} in round {self.round_index}")
        self.status = new_status

    def to_collecting(self, selected):
        selected = set(selected)
        if not selected:
            raise StateError(f"round {self.round_index}: cannot collect from an empty selection")
        self._move(COLLECTING)
        self.pending = selected

    def add_result(self, result):
        if self.status != COLLECTING:
            raise StateError(f"round {self.round_index}: result received in status {self.status}")
        if result.client_id not in self.pending:
            known = any(r.client_id == result.client_id for r in self.received)
            kind = "duplicate result from" if known else "result from unselected client"
            raise StateError(f"round {self.round_index}: {kind} {result.client_id!r}")
        if result.round_index != self.round_index:
            raise StateError(
                f"round {self.round_index}: result from {result.client_id!r} is for round {result.round_index}"
            )
        self.pending.discard(result.client_id)
        self.received.append(result)

    def to_aggregating(self):
        if self.pending:
            raise StateError(
                f"round {self.round_index}: {len(self.pending)} clients still pending, no partial aggregation"
            )
        self._move(AGGREGATING)

    def to_done(self, new_global):
        self._move(DONE)
        self.global_params = new_global

    def to_failed(self, reason):
        self._move(FAILED)
        self.failure_reason = reason


@dataclass(frozen=True)
class RoundReport:
    """Per-round record: participants, training loss, and global evaluation."""

    round_index: int
    clients: tuple
    mean_train_loss: float
    metrics: "object | None" = None
    matrix: "object | None" = None
    eval_loss: "float | None" = None
    duration_s: float = 0.0

    def to_log_dict(self):
        """Deterministic fields only; wall-clock time never enters run logs."""
        doc = {
            "round": self.round_index,
            "clients": [
                {"id": cid, "num_examples": n, "train_loss": loss} for cid, n, loss in self.clients
            ],
            "mean_train_loss": self.mean_train_loss,
        }
        if self.metrics is not None:
            doc["accuracy"] = self.metrics.accuracy
            doc["macro_f1"] = self.metrics.macro_f1
        if self.eval_loss is not None:
            doc["eval_loss"] = self.eval_loss
        return doc
