"""Client-side runtime: reacts to server instructions over any transport."""

from __future__ import annotations

from ..errors import BiofedError
from ..metrics import evaluate_model
from ..nn.train import train_local
from ..transport.protocol import (
    ERR_INTERNAL,
    ERR_UNEXPECTED,
    Error,
    EvaluateInstruction,
    EvaluateResultMsg,
    FitInstruction,
    FitResultMsg,
    JoinAck,
    Shutdown,
)


class ClientRuntime:
    """Owns one shard's tensors and answers fit / evaluate instructions.

    Training state is not kept between rounds: every instruction carries the
    global parameters it starts from, so the handler is a pure reaction.
    """

    def __init__(self, client_id, network, x, y):
        self.client_id = client_id
        self.network = network
        self.x = x
        self.y = y
        self.done = False

    @property
    def num_examples(self):
        return int(self.x.shape[0])

    def handle(self, msg):
        try:
            if isinstance(msg, FitInstruction):
                params, n, loss = train_local(self.network, msg.params, self.x, self.y, msg.config)
                return FitResultMsg(self.client_id, msg.round_index, params, n, loss)
            if isinstance(msg, EvaluateInstruction):
                matrix, loss, _, _ = evaluate_model(self.network, msg.params, self.x, self.y)
                return EvaluateResultMsg(self.client_id, msg.round_index, loss, matrix)
            if isinstance(msg, Shutdown):
                self.done = True
                return None
            if isinstance(msg, (JoinAck, Error)):
                return None
            return Error(ERR_UNEXPECTED, f"client cannot handle {type(msg).__name__}", getattr(msg, "round_index", 0))
        except BiofedError as exc:
            return Error(ERR_INTERNAL, f"{type(exc).__name__}: {exc}", getattr(msg, "round_index", 0))
