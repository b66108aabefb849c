import json
import socket

import pytest

from biofed import cli
from biofed.config import default_config, load_config
from biofed.metrics import ConfusionMatrix, derive_metrics, dump_json, report_to_dict

import numpy as np

TINY = {
    "rounds": 2,
    "clients": 2,
    "train": {"learning_rate": 0.1, "batch_size": 4, "local_epochs": 1},
    "data": {"classes": 3, "samples_per_class": 4, "image_shape": [1, 8, 8]},
}


def write_config(tmp_path, extra=None, name="config.json"):
    doc = json.loads(json.dumps(TINY))
    if extra:
        for key, value in extra.items():
            if isinstance(value, dict):
                doc.setdefault(key, {}).update(value)
            else:
                doc[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run_cli(*argv):
    return cli.main(list(argv))


def test_simulate_writes_artifact_tree(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out)) == 0
    printed = capsys.readouterr().out
    assert "federated  : accuracy" in printed
    assert "centralized: accuracy" in printed
    assert "comparison :" in printed

    assert (out / "config.json").exists()
    assert (out / "manifest.json").exists()
    assert (out / "comparison.json").exists()
    for sub in ("federated", "centralized"):
        d = out / sub
        assert (d / "run.jsonl").exists()
        assert (d / "timings.jsonl").exists()
        assert (d / "final.bfck").exists()
        assert (d / "round-000.bfck").exists()
        assert (d / "round-001.bfck").exists()
        assert (d / "metrics.json").exists()
        assert (d / "confusion.csv").exists()
        assert (d / "confusion.svg").exists()
    saved = json.loads((out / "config.json").read_text())
    assert saved["rounds"] == 2
    assert saved["out"] == str(out)


def test_simulate_is_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out_a)) == 0
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out_b)) == 0
    for rel in (
        "federated/run.jsonl",
        "federated/final.bfck",
        "federated/round-001.bfck",
        "federated/metrics.json",
        "centralized/run.jsonl",
        "centralized/final.bfck",
        "comparison.json",
        "manifest.json",
    ):
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel


def test_simulate_refuses_overwrite_without_force(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out)) == 0
    capsys.readouterr()
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out)) == 2
    err = capsys.readouterr().err
    assert "--force" in err
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out), "--force") == 0


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, extra={"roundz": 3})
    assert run_cli("simulate", "--config", str(cfg), "--out", str(tmp_path / "x")) == 2
    assert "unknown configuration key" in capsys.readouterr().err


def test_bad_override_value_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run_cli("simulate", "--config", str(cfg), "--out", str(tmp_path / "x"), "--rounds", "0") == 2
    assert "rounds" in capsys.readouterr().err


def test_missing_config_file_exits_3(tmp_path, capsys):
    assert run_cli("simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x")) == 3
    assert "not found" in capsys.readouterr().err


def test_config_print_default_round_trips(tmp_path, capsys):
    assert run_cli("config", "print-default") == 0
    printed = capsys.readouterr().out
    doc = json.loads(printed)
    assert doc == default_config()
    path = tmp_path / "default.json"
    path.write_text(printed)
    cfg = load_config(path)
    assert cfg.rounds == doc["rounds"]
    assert cfg.clients_required == cfg.clients


def test_partition_writes_disjoint_shards(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "parts"
    assert run_cli("partition", "--config", str(cfg), "--out", str(out)) == 0
    assert "wrote 2 shard files" in capsys.readouterr().out
    assert (out / "manifest.json").exists()
    shard_files = sorted((out / "shards").iterdir())
    assert [p.name for p in shard_files] == ["client-000.json", "client-001.json"]
    seen = []
    for p in shard_files:
        doc = json.loads(p.read_text())
        seen.extend(doc["indices"])
    assert len(seen) == len(set(seen)) == 9  # 3 classes x 3 train samples


def test_report_renders_and_is_idempotent(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out)) == 0
    capsys.readouterr()

    assert run_cli("report", str(out)) == 0
    printed = capsys.readouterr().out
    assert "federated" in printed
    assert "centralized" in printed
    assert "comparison:" in printed
    assert "species-00" in printed

    # unchanged artifacts: a second render needs no --force
    assert run_cli("report", str(out)) == 0

    # a derived view someone edited must not be silently replaced
    target = out / "federated" / "confusion.csv"
    target.write_text("tampered\n")
    assert run_cli("report", str(out)) == 2
    assert "--force" in capsys.readouterr().err
    assert run_cli("report", str(out), "--force") == 0
    assert target.read_text() != "tampered\n"


def test_report_missing_dir_exits_2(tmp_path, capsys):
    assert run_cli("report", str(tmp_path / "ghost")) == 2
    assert run_cli("report", str(tmp_path)) == 2  # empty dir, no runs inside


def doctored_run(tmp_path, fed_acc, cent_acc):
    run = tmp_path / "doctored"
    for name, acc in (("federated", fed_acc), ("centralized", cent_acc)):
        d = run / name
        d.mkdir(parents=True)
        diag = int(round(acc * 10))
        counts = np.array([[diag, 10 - diag], [0, 10]], dtype=np.int64)
        matrix = ConfusionMatrix(counts)
        report = derive_metrics(matrix, test_set_hash="shared")
        dump_json(report_to_dict(report, matrix, ["a", "b"]), d / "metrics.json")
    return run


def test_report_assert_close_exit_codes(tmp_path, capsys):
    far = doctored_run(tmp_path, fed_acc=0.4, cent_acc=1.0)
    assert run_cli("report", str(far), "--assert-close") == 4
    capsys.readouterr()

    near = doctored_run(tmp_path / "near", fed_acc=1.0, cent_acc=1.0)
    assert run_cli("report", str(near), "--assert-close") == 0


def test_report_assert_close_needs_both_runs(tmp_path, capsys):
    run = tmp_path / "half"
    d = run / "federated"
    d.mkdir(parents=True)
    matrix = ConfusionMatrix(np.array([[5, 0], [0, 5]], dtype=np.int64))
    dump_json(report_to_dict(derive_metrics(matrix, test_set_hash="h"), matrix, ["a", "b"]), d / "metrics.json")
    assert run_cli("report", str(run), "--assert-close") == 2


def test_client_exit_3_when_server_unreachable(tmp_path):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    dead_port = probe.getsockname()[1]
    probe.close()

    cfg = write_config(tmp_path, extra={"server": {"port": dead_port}})
    shard = tmp_path / "shard.json"
    shard.write_text(json.dumps({"client_id": "client-000", "indices": [0, 1, 2]}))
    code = run_cli(
        "client", "--config", str(cfg), "--shard", str(shard), "--connect-timeout", "0.3"
    )
    assert code == 3
