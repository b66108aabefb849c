"""Command-line entry points.

Subcommands: simulate (loopback federation plus optional centralized
baseline), server / client (socket federation across processes), partition
(write shard files), report (render metrics views from a finished run), and
config print-default.

Exit codes: 0 success, 2 validation, 3 runtime or protocol failure, 4 failed
closeness assertion. BIOFED_LOG sets the log level (debug, info, warning).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time

from .config import STRATEGIES, default_config, load_config, save_config
from .data import ingest, load_dataset, load_shard, partition, save_manifest, save_shard, synthesize
from .errors import BiofedError, TransportError, ValidationError
from .fed import ClientRuntime, FederationConfig, make_evaluator, run_centralized, run_federation
from .metrics import (
    compare_runs,
    comparison_to_dict,
    confusion_to_csv,
    confusion_to_svg,
    dump_json,
    report_from_dict,
    report_to_dict,
)
from .nn.network import reference_network
from .transport import LoopbackTransport, SocketClientSession, SocketServerTransport
from .transport.protocol import PROTOCOL_VERSION

log = logging.getLogger("biofed")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_NOT_CLOSE = 4

OWNED_ARTIFACTS = (
    "config.json",
    "manifest.json",
    "federated",
    "centralized",
    "comparison.json",
    "shards",
)

FEDERATED_DIR = "federated"
CENTRALIZED_DIR = "centralized"


def _setup_logging():
    name = os.environ.get("BIOFED_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _overrides_from(args):
    overrides = {}
    for flag, key in (("seed", "seed"), ("clients", "clients"), ("rounds", "rounds"),
                      ("strategy", "strategy"), ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _config_from_args(args):
    return load_config(getattr(args, "config", None), _overrides_from(args))


def build_dataset(cfg):
    if cfg.data.kind == "synthetic":
        return synthesize(
            cfg.data.classes,
            cfg.data.samples_per_class,
            cfg.data.image_shape,
            seed=cfg.seed,
            noise=cfg.data.noise,
            test_fraction=cfg.data.test_fraction,
        )
    manifest = ingest(cfg.data.manifest, seed=cfg.seed, test_fraction=cfg.data.test_fraction)
    return load_dataset(manifest)


def build_network(manifest):
    return reference_network(manifest.image_shape, len(manifest.classes))


def prepare_out_dir(path, force):
    """Create the output directory, clearing prior run artifacts only with --force."""
    if os.path.exists(path):
        present = [e for e in sorted(os.listdir(path)) if e in OWNED_ARTIFACTS]
        if present and not force:
            raise ValidationError(
                [("out", f"{path!r} already holds run artifacts {present}; pass --force to overwrite")]
            )
        for entry in present:
            full = os.path.join(path, entry)
            if os.path.isdir(full):
                shutil.rmtree(full)
            else:
                os.remove(full)
    else:
        os.makedirs(path)


def write_text_checked(path, content, force):
    """Idempotent write: identical content is fine, changes need --force."""
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            if fh.read() == content:
                return
        if not force:
            raise ValidationError([(path, "exists with different content; pass --force to overwrite")])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(content)


def write_model_report(run_dir, metrics_report, matrix, classes, force=True):
    title = os.path.basename(os.path.normpath(run_dir))
    dump_json(report_to_dict(metrics_report, matrix, classes), os.path.join(run_dir, "metrics.json"))
    write_text_checked(os.path.join(run_dir, "confusion.csv"), confusion_to_csv(matrix, classes), force)
    write_text_checked(os.path.join(run_dir, "confusion.svg"), confusion_to_svg(matrix, classes, title=title), force)


def _print_run_line(label, reports):
    final = reports[-1]
    print(
        f"{label}: accuracy {final.metrics.accuracy:.4f}  macro-F1 {final.metrics.macro_f1:.4f}  "
        f"eval-loss {final.eval_loss:.4f}  ({len(reports)} rounds)"
    )


def _federation_config(cfg):
    return FederationConfig(
        num_clients=cfg.clients,
        rounds=cfg.rounds,
        train_config=cfg.train,
        clients_required=cfg.clients_required,
        round_timeout=cfg.round_timeout_s,
        seed=cfg.seed,
    )


def cmd_simulate(args):
    cfg = _config_from_args(args)
    prepare_out_dir(cfg.out, args.force)
    dataset = build_dataset(cfg)
    save_config(cfg, os.path.join(cfg.out, "config.json"))
    save_manifest(dataset.manifest, os.path.join(cfg.out, "manifest.json"))
    network = build_network(dataset.manifest)
    shards = [s.materialize(dataset) for s in partition(dataset.manifest, cfg.clients, cfg.strategy, cfg.seed)]
    handlers = {s.client_id: ClientRuntime(s.client_id, network, s.x, s.y).handle for s in shards}
    transport = LoopbackTransport(handlers)
    test_x, test_y = dataset.test_arrays()
    evaluator = make_evaluator(network, test_x, test_y)
    classes = list(dataset.manifest.classes)

    log.info("simulate: %d clients, %d rounds, strategy %s, %d train / %d test samples",
             cfg.clients, cfg.rounds, cfg.strategy,
             len(dataset.manifest.train_indices()), len(dataset.manifest.test_indices()))
    fed_dir = os.path.join(cfg.out, FEDERATED_DIR)
    fed_reports, _ = run_federation(_federation_config(cfg), transport, network, evaluator, out_dir=fed_dir)
    write_model_report(fed_dir, fed_reports[-1].metrics, fed_reports[-1].matrix, classes)
    _print_run_line("federated  ", fed_reports)

    if cfg.centralized:
        train_x, train_y = dataset.train_arrays()
        cent_dir = os.path.join(cfg.out, CENTRALIZED_DIR)
        cent_reports, _ = run_centralized(
            network, train_x, train_y, cfg.train, epochs=cfg.rounds, seed=cfg.seed,
            evaluator=evaluator, out_dir=cent_dir,
        )
        write_model_report(cent_dir, cent_reports[-1].metrics, cent_reports[-1].matrix, classes)
        _print_run_line("centralized", cent_reports)
        verdict = compare_runs(cent_reports[-1].metrics, fed_reports[-1].metrics, cfg.compare_threshold)
        dump_json(comparison_to_dict(verdict), os.path.join(cfg.out, "comparison.json"))
        print(
            f"comparison : accuracy delta {verdict.deltas['accuracy']:+.4f}  "
            f"{'close' if verdict.close else 'not close'} (threshold {verdict.threshold})"
        )
        if args.assert_close and not verdict.close:
            return EXIT_NOT_CLOSE
    print(f"artifacts  : {cfg.out}")
    return EXIT_OK


def cmd_server(args):
    cfg = _config_from_args(args)
    prepare_out_dir(cfg.out, args.force)
    dataset = build_dataset(cfg)
    save_config(cfg, os.path.join(cfg.out, "config.json"))
    save_manifest(dataset.manifest, os.path.join(cfg.out, "manifest.json"))
    network = build_network(dataset.manifest)
    test_x, test_y = dataset.test_arrays()
    evaluator = make_evaluator(network, test_x, test_y)
    transport = SocketServerTransport(cfg.server_host, cfg.server_port, expected_clients=cfg.clients)
    try:
        print(f"listening on {transport.host}:{transport.port}", flush=True)
        if not transport.wait_for_clients(cfg.round_timeout_s):
            log.warning("not all %d clients joined within %.1fs", cfg.clients, cfg.round_timeout_s)
        fed_dir = os.path.join(cfg.out, FEDERATED_DIR)
        reports, _ = run_federation(_federation_config(cfg), transport, network, evaluator, out_dir=fed_dir)
        write_model_report(fed_dir, reports[-1].metrics, reports[-1].matrix, list(dataset.manifest.classes))
        _print_run_line("federated  ", reports)
        print(f"artifacts  : {cfg.out}")
        return EXIT_OK
    finally:
        transport.close()


def cmd_client(args):
    cfg = _config_from_args(args)
    dataset = build_dataset(cfg)
    network = build_network(dataset.manifest)
    shard = load_shard(args.shard)
    shard.materialize(dataset)
    client_id = args.client_id or shard.client_id
    runtime = ClientRuntime(client_id, network, shard.x, shard.y)

    deadline = time.monotonic() + args.connect_timeout
    session = None
    while session is None:
        try:
            session = SocketClientSession(
                cfg.server_host, cfg.server_port, client_id, join_version=args.protocol_version
            )
        except TransportError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.1)
    try:
        session.join()
        log.info("client %s joined %s:%d with %d samples",
                 client_id, cfg.server_host, cfg.server_port, runtime.num_examples)
        session.serve(runtime.handle)
    finally:
        session.close()
    return EXIT_OK


def cmd_partition(args):
    cfg = _config_from_args(args)
    prepare_out_dir(cfg.out, args.force)
    if args.manifest:
        manifest = ingest(args.manifest, seed=cfg.seed, test_fraction=cfg.data.test_fraction)
    else:
        manifest = build_dataset(cfg).manifest
    save_manifest(manifest, os.path.join(cfg.out, "manifest.json"))
    shards = partition(manifest, cfg.clients, cfg.strategy, cfg.seed)
    shard_dir = os.path.join(cfg.out, "shards")
    os.makedirs(shard_dir, exist_ok=True)
    for shard in shards:
        save_shard(shard, os.path.join(shard_dir, f"{shard.client_id}.json"))
    print(f"wrote {len(shards)} shard files to {shard_dir}")
    return EXIT_OK


def _load_model_report(run_dir, name):
    path = os.path.join(run_dir, name, "metrics.json")
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        report, matrix, classes = report_from_dict(json.load(fh))
    if matrix is None or classes is None:
        raise ValidationError([(path, "metrics file lacks the confusion matrix or class names")])
    return report, matrix, classes


def _print_metrics_table(label, report, classes):
    print(f"\n{label}")
    print(f"  accuracy {report.accuracy:.4f}  macro-P {report.macro_precision:.4f}  "
          f"macro-R {report.macro_recall:.4f}  macro-F1 {report.macro_f1:.4f}")
    width = max(len(c) for c in classes)
    print(f"  {'class':<{width}}  support  precision  recall  f1")
    for i, name in enumerate(classes):
        print(f"  {name:<{width}}  {report.support[i]:>7d}  {report.precision[i]:>9.4f}  "
              f"{report.recall[i]:>6.4f}  {report.f1[i]:.4f}")
    if report.flags:
        print(f"  flags: {', '.join(report.flags)}")


def cmd_report(args):
    run_dir = args.run_dir
    if not os.path.isdir(run_dir):
        raise ValidationError([("run_dir", f"not a directory: {run_dir!r}")])
    loaded = {}
    for name in (FEDERATED_DIR, CENTRALIZED_DIR):
        entry = _load_model_report(run_dir, name)
        if entry is None:
            continue
        report, matrix, classes = entry
        loaded[name] = entry
        model_dir = os.path.join(run_dir, name)
        write_text_checked(os.path.join(model_dir, "confusion.csv"), confusion_to_csv(matrix, classes), args.force)
        write_text_checked(
            os.path.join(model_dir, "confusion.svg"), confusion_to_svg(matrix, classes, title=name), args.force
        )
        _print_metrics_table(name, report, classes)
    if not loaded:
        raise ValidationError([("run_dir", f"no evaluated model found under {run_dir!r}")])

    verdict = None
    if FEDERATED_DIR in loaded and CENTRALIZED_DIR in loaded:
        threshold = 0.05
        config_path = os.path.join(run_dir, "config.json")
        if os.path.exists(config_path):
            with open(config_path, "r", encoding="utf-8") as fh:
                threshold = json.load(fh).get("compare_threshold", threshold)
        verdict = compare_runs(loaded[CENTRALIZED_DIR][0], loaded[FEDERATED_DIR][0], threshold)
        comparison = comparison_to_dict(verdict)
        write_text_checked(
            os.path.join(run_dir, "comparison.json"),
            json.dumps(comparison, indent=2, sort_keys=True) + "\n",
            args.force,
        )
        print(
            f"\ncomparison: accuracy delta {verdict.deltas['accuracy']:+.4f}  "
            f"{'close' if verdict.close else 'not close'} (threshold {verdict.threshold})"
        )
    if args.assert_close:
        if verdict is None:
            raise ValidationError([("assert_close", "needs both federated and centralized runs in the run dir")])
        if not verdict.close:
            return EXIT_NOT_CLOSE
    return EXIT_OK


def cmd_config(args):
    if args.action == "print-default":
        print(json.dumps(default_config(), indent=2, sort_keys=True))
        return EXIT_OK
    raise ValidationError([("action", f"unknown config action {args.action!r}")])


def _add_common(parser, out_flag=True):
    parser.add_argument("--config", help="JSON config file (defaults apply otherwise)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--clients", type=int, help="override the client count")
    parser.add_argument("--rounds", type=int, help="override the round count")
    parser.add_argument("--strategy", choices=STRATEGIES, help="override the partition strategy")
    if out_flag:
        parser.add_argument("--out", help="override the output directory")
        parser.add_argument("--force", action="store_true", help="overwrite artifacts in the output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="biofed", description="Desk-scale federated image classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a loopback federation plus the centralized baseline")
    _add_common(p)
    p.add_argument("--assert-close", action="store_true", help="exit 4 if federated is not close to centralized")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("server", help="run the federation server over sockets")
    _add_common(p)
    p.set_defaults(func=cmd_server)

    p = sub.add_parser("client", help="run one federation client over sockets")
    _add_common(p, out_flag=False)
    p.add_argument("--client-id", help="client identifier (defaults to the shard file's)")
    p.add_argument("--shard", required=True, help="shard file written by the partition command")
    p.add_argument("--connect-timeout", type=float, default=10.0, help="seconds to retry the initial connect")
    p.add_argument("--protocol-version", type=int, default=PROTOCOL_VERSION, help="wire protocol version to announce (diagnostic)")
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("partition", help="write per-client shard files")
    _add_common(p)
    p.add_argument("--manifest", help="manifest file to partition (default: the configured dataset)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("report", help="render metrics tables, CSV/SVG matrices, and the comparison")
    p.add_argument("run_dir", help="output directory of a finished run")
    p.add_argument("--force", action="store_true", help="overwrite derived views that changed")
    p.add_argument("--assert-close", action="store_true", help="exit 4 if federated is not close to centralized")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("action", choices=["print-default"])
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for path, msg in exc.problems:
            print(f"error: {path + ': ' if path else ''}{msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except BiofedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
