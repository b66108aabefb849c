"""Round orchestration: FedAvg aggregation, the server loop, and the
centralized baseline trained with the identical seed schedule.

Client results are always sorted by client id before accumulating, so the
aggregate is bit-exactly invariant to arrival order. Aggregation runs in
float64 and rounds once back to the parameter dtype.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import replace

import numpy as np

from ..errors import (
    EmptyShardError,
    RoundFailedError,
    SchemaMismatchError,
    StateError,
    ValidationError,
)
from ..metrics import derive_metrics, evaluate_model, test_set_fingerprint
from ..nn.params import ModelParameters, check_same_schema
from ..nn.train import train_local
from ..transport.protocol import Error, FitInstruction, FitResultMsg, Shutdown
from .types import COLLECTING, DISTRIBUTING, FAILED, FitResult, RoundReport, RoundState

CLIENT_SEED_DOMAIN = 3

RUN_LOG = "run.jsonl"
TIMING_LOG = "timings.jsonl"
FINAL_CHECKPOINT = "final.bfck"
CENTRALIZED_ID = "centralized"


def derive_client_seed(base_seed, round_index, ordinal):
    """Per-(round, client) training seed, decoupled from id strings."""
    ss = np.random.SeedSequence((int(base_seed), CLIENT_SEED_DOMAIN, int(round_index), int(ordinal)))
    return int(ss.generate_state(1, np.uint64)[0])


def fedavg(results):
    """Sample-count-weighted parameter average over sorted client results."""
    if not results:
        raise ValidationError([("results", "cannot aggregate an empty result list")])
    ordered = sorted(results, key=lambda r: r.client_id)
    first = ordered[0]
    for r in ordered[1:]:
        check_same_schema(first.params, r.params, context=f"client {r.client_id!r}")
    total = float(sum(r.num_examples for r in ordered))
    entries = []
    for name in first.params.names():
        acc = np.zeros(first.params[name].shape, dtype=np.float64)
        for r in ordered:
            acc += float(r.num_examples) * r.params[name].astype(np.float64)
        entries.append((name, (acc / total).astype(first.params[name].dtype)))
    return ModelParameters(entries)


def make_evaluator(network, test_x, test_y):
    """Closure evaluating global parameters on a fixed held-out set."""
    if test_x.shape[0] == 0:
        raise EmptyShardError("evaluation requested on an empty sample set")
    fingerprint = test_set_fingerprint(test_x, test_y)

    def evaluate(params):
        matrix, loss, _, _ = evaluate_model(network, params, test_x, test_y)
        report = derive_metrics(matrix, test_set_hash=fingerprint, mean_loss=loss)
        return report, matrix, loss

    return evaluate


def run_round(state, transport, cfg, evaluator=None):
    """Execute one round: distribute, collect at a barrier, aggregate, evaluate.

    Success requires a result from every selected client before the timeout;
    there is no partial aggregation. On failure the returned state keeps the
    unchanged global parameters and carries the reason. On success the
    returned state is the next round's, and the report covers this one.
    """
    started = time.monotonic()
    if state.status != DISTRIBUTING:
        raise StateError(f"run_round needs status {DISTRIBUTING}, got {state.status}")
    r = state.round_index
    selected = transport.clients()
    if len(selected) < cfg.clients_required:
        state.to_failed(f"only {len(selected)} of {cfg.clients_required} required clients connected")
        return state, None

    for ordinal, client_id in enumerate(selected):
        seed = derive_client_seed(cfg.seed, r, ordinal)
        transport.send(client_id, FitInstruction(r, replace(cfg.train_config, seed=seed), state.global_params))
    state.to_collecting(selected)

    deadline = started + cfg.round_timeout
    while state.pending and state.status == COLLECTING:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        item = transport.recv(timeout=remaining)
        if item is None:
            break
        client_id, msg = item
        if msg is None:
            if client_id in state.pending:
                state.to_failed(f"client {client_id!r} disconnected mid-round (treated as its timeout)")
            continue
        if isinstance(msg, Error):
            state.to_failed(f"client {client_id!r} reported error {msg.code}: {msg.text}")
            continue
        if (
            not isinstance(msg, FitResultMsg)
            or msg.round_index != r
            or msg.client_id != client_id
            or client_id not in state.pending
        ):
            continue
        try:
            check_same_schema(state.global_params, msg.params, context=f"client {client_id!r}")
        except SchemaMismatchError as exc:
            state.to_failed(str(exc))
            continue
        state.add_result(FitResult(client_id, msg.round_index, msg.params, msg.num_examples, msg.train_loss))

    if state.status == FAILED:
        return state, None
    if state.pending:
        state.to_failed(f"timeout after {cfg.round_timeout}s waiting for {sorted(state.pending)}")
        return state, None

    state.to_aggregating()
    new_global = fedavg(state.received)
    ordered = sorted(state.received, key=lambda fr: fr.client_id)
    total = sum(fr.num_examples for fr in ordered)
    mean_train_loss = sum(fr.num_examples * fr.train_loss for fr in ordered) / total
    metrics = matrix = eval_loss = None
    if evaluator is not None:
        metrics, matrix, eval_loss = evaluator(new_global)
    state.to_done(new_global)
    report = RoundReport(
        round_index=r,
        clients=tuple((fr.client_id, fr.num_examples, fr.train_loss) for fr in ordered),
        mean_train_loss=mean_train_loss,
        metrics=metrics,
        matrix=matrix,
        eval_loss=eval_loss,
        duration_s=time.monotonic() - started,
    )
    return RoundState(r + 1, new_global), report


class RunWriter:
    """Per-run persistence: checkpoints, a deterministic JSON-lines run log,
    and a separate timing log (wall-clock times stay out of the run log so
    identical runs produce identical bytes)."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self._run_log = os.path.join(out_dir, RUN_LOG)
        self._timing_log = os.path.join(out_dir, TIMING_LOG)
        for path in (self._run_log, self._timing_log):
            with open(path, "w", encoding="utf-8"):
                pass

    def record(self, report, params):
        params.save(os.path.join(self.out_dir, f"round-{report.round_index:03d}.bfck"))
        with open(self._run_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(report.to_log_dict(), sort_keys=True, separators=(",", ":")) + "\n")
        with open(self._timing_log, "a", encoding="utf-8") as fh:
            doc = {"round": report.round_index, "duration_ms": round(report.duration_s * 1000.0, 3)}
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")

    def finish(self, params):
        params.save(os.path.join(self.out_dir, FINAL_CHECKPOINT))


def run_federation(cfg, transport, network, evaluator=None, out_dir=None, init_params=None, shutdown=True):
    """Run cfg.rounds successful rounds; any failed round aborts the run.

    Returns (reports, final global parameters). Round checkpoints and logs
    are written under out_dir when given.
    """
    params = init_params if init_params is not None else network.init_params(cfg.seed)
    writer = RunWriter(out_dir) if out_dir else None
    state = RoundState(0, params)
    reports = []
    for _ in range(cfg.rounds):
        r = state.round_index
        state, report = run_round(state, transport, cfg, evaluator)
        if state.status == FAILED:
            reason = state.failure_reason
            if shutdown:
                transport.shutdown(Shutdown(r))
            raise RoundFailedError(r, reason)
        reports.append(report)
        if writer:
            writer.record(report, state.global_params)
    if shutdown:
        transport.shutdown(Shutdown(cfg.rounds))
    if writer:
        writer.finish(state.global_params)
    return reports, state.global_params


def run_centralized(network, x, y, train_cfg, epochs, seed=0, evaluator=None, out_dir=None, init_params=None):
    """Train one model on the union of all data, reported round-style.

    Each report covers one call to train_local with the seed a sole federated
    client would receive that round, so a single-client federation and this
    baseline follow identical update schedules.
    """
    if x.shape[0] == 0:
        raise EmptyShardError("centralized training requires a non-empty dataset")
    if epochs < 1:
        raise ValidationError([("epochs", f"must be at least 1, got {epochs}")])
    params = init_params if init_params is not None else network.init_params(seed)
    writer = RunWriter(out_dir) if out_dir else None
    reports = []
    for r in range(epochs):
        started = time.monotonic()
        cfg_r = replace(train_cfg, seed=derive_client_seed(seed, r, 0))
        params, n, loss = train_local(network, params, x, y, cfg_r)
        metrics = matrix = eval_loss = None
        if evaluator is not None:
            metrics, matrix, eval_loss = evaluator(params)
        report = RoundReport(
            round_index=r,
            clients=((CENTRALIZED_ID, n, loss),),
            mean_train_loss=loss,
            metrics=metrics,
            matrix=matrix,
            eval_loss=eval_loss,
            duration_s=time.monotonic() - started,
        )
        reports.append(report)
        if writer:
            writer.record(report, params)
    if writer:
        writer.finish(params)
    return reports, params
