"""File-backed run configuration with defaults, overrides, and validation.

Configs are JSON. Every problem is collected and reported at once with its
dotted field path; unknown keys are rejected so typos surface instead of
silently falling back to defaults.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

from .errors import MissingFileError, ValidationError
from .nn.train import TrainConfig

STRATEGIES = ("iid", "label-skew")

DEFAULT_CONFIG = {
    "seed": 0,
    "rounds": 15,
    "clients": 3,
    "clients_required": 0,
    "round_timeout_s": 600.0,
    "strategy": "iid",
    "centralized": True,
    "compare_threshold": 0.05,
    "out": "out",
    "train": {
        "learning_rate": 0.08,
        "batch_size": 16,
        "local_epochs": 2,
    },
    "data": {
        "kind": "synthetic",
        "classes": 5,
        "samples_per_class": 100,
        "image_shape": [1, 16, 16],
        "noise": 0.1,
        "test_fraction": 0.2,
        "manifest": None,
    },
    "server": {
        "host": "127.0.0.1",
        "port": 7733,
    },
}


def default_config():
    return copy.deepcopy(DEFAULT_CONFIG)


@dataclass(frozen=True)
class DataConfig:
    kind: str
    classes: int
    samples_per_class: int
    image_shape: tuple
    noise: float
    test_fraction: float
    manifest: "str | None"


@dataclass(frozen=True)
class RunConfig:
    seed: int
    rounds: int
    clients: int
    clients_required: int
    round_timeout_s: float
    strategy: str
    centralized: bool
    compare_threshold: float
    out: str
    train: TrainConfig
    data: DataConfig
    server_host: str
    server_port: int

    def to_dict(self):
        return {
            "seed": self.seed,
            "rounds": self.rounds,
            "clients": self.clients,
            "clients_required": self.clients_required,
            "round_timeout_s": self.round_timeout_s,
            "strategy": self.strategy,
            "centralized": self.centralized,
            "compare_threshold": self.compare_threshold,
            "out": self.out,
            "train": {
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
                "local_epochs": self.train.local_epochs,
            },
            "data": {
                "kind": self.data.kind,
                "classes": self.data.classes,
                "samples_per_class": self.data.samples_per_class,
                "image_shape": list(self.data.image_shape),
                "noise": self.data.noise,
                "test_fraction": self.data.test_fraction,
                "manifest": self.data.manifest,
            },
            "server": {"host": self.server_host, "port": self.server_port},
        }


def _merge(base, overlay, path, problems):
    for key, value in overlay.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            problems.append((where, "unknown configuration key"))
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                problems.append((where, f"must be an object, got {type(value).__name__}"))
                continue
            _merge(base[key], value, where, problems)
        else:
            base[key] = value


def resolve_config(doc):
    """Merged document -> validated RunConfig. Collects every problem."""
    problems = []
    merged = default_config()
    if doc:
        _merge(merged, doc, "", problems)
    if problems:
        raise ValidationError(problems)

    def check(path, value, ok, hint):
        if not ok(value):
            problems.append((path, f"{hint}, got {value!r}"))
            return False
        return True

    is_int = lambda v: isinstance(v, int) and not isinstance(v, bool)
    is_num = lambda v: isinstance(v, (int, float)) and not isinstance(v, bool)

    check("seed", merged["seed"], lambda v: is_int(v) and v >= 0, "must be a nonnegative integer")
    check("rounds", merged["rounds"], lambda v: is_int(v) and v >= 1, "must be a positive integer")
    check("clients", merged["clients"], lambda v: is_int(v) and v >= 1, "must be a positive integer")
    check(
        "clients_required",
        merged["clients_required"],
        lambda v: is_int(v) and 0 <= v <= (merged["clients"] if is_int(merged["clients"]) else v),
        "must be an integer in [0, clients] (0 means all clients)",
    )
    check("round_timeout_s", merged["round_timeout_s"], lambda v: is_num(v) and v > 0, "must be positive")
    check("strategy", merged["strategy"], lambda v: v in STRATEGIES, f"must be one of {STRATEGIES}")
    check("centralized", merged["centralized"], lambda v: isinstance(v, bool), "must be true or false")
    check(
        "compare_threshold",
        merged["compare_threshold"],
        lambda v: is_num(v) and 0 < v < 1,
        "must be in (0, 1)",
    )
    check("out", merged["out"], lambda v: isinstance(v, str) and v, "must be a non-empty string")

    train = merged["train"]
    check("train.learning_rate", train["learning_rate"], lambda v: is_num(v) and v > 0, "must be positive")
    check("train.batch_size", train["batch_size"], lambda v: is_int(v) and v >= 1, "must be a positive integer")
    check("train.local_epochs", train["local_epochs"], lambda v: is_int(v) and v >= 1, "must be a positive integer")

    data = merged["data"]
    check("data.kind", data["kind"], lambda v: v in ("synthetic", "manifest"), "must be 'synthetic' or 'manifest'")
    check("data.classes", data["classes"], lambda v: is_int(v) and v >= 2, "must be an integer >= 2")
    check(
        "data.samples_per_class",
        data["samples_per_class"],
        lambda v: is_int(v) and v >= 2,
        "must be an integer >= 2",
    )
    check(
        "data.image_shape",
        data["image_shape"],
        lambda v: isinstance(v, (list, tuple)) and len(v) == 3 and all(is_int(d) and d >= 1 for d in v),
        "must be [C, H, W] positive integers",
    )
    check("data.noise", data["noise"], lambda v: is_num(v) and v >= 0, "must be nonnegative")
    check(
        "data.test_fraction",
        data["test_fraction"],
        lambda v: is_num(v) and 0 < v < 1,
        "must be in (0, 1)",
    )
    if data["kind"] == "manifest":
        check("data.manifest", data["manifest"], lambda v: isinstance(v, str) and v, "must name a manifest file")
    elif data["manifest"] is not None:
        check("data.manifest", data["manifest"], lambda v: isinstance(v, str), "must be a path or null")

    server = merged["server"]
    check("server.host", server["host"], lambda v: isinstance(v, str) and v, "must be a non-empty string")
    check("server.port", server["port"], lambda v: is_int(v) and 0 <= v <= 65535, "must be a port number")

    if problems:
        raise ValidationError(problems)

    train_cfg = TrainConfig(
        learning_rate=float(train["learning_rate"]),
        batch_size=train["batch_size"],
        local_epochs=train["local_epochs"],
        seed=0,
    )
    required = merged["clients_required"] or merged["clients"]
    return RunConfig(
        seed=merged["seed"],
        rounds=merged["rounds"],
        clients=merged["clients"],
        clients_required=required,
        round_timeout_s=float(merged["round_timeout_s"]),
        strategy=merged["strategy"],
        centralized=merged["centralized"],
        compare_threshold=float(merged["compare_threshold"]),
        out=merged["out"],
        train=train_cfg,
        data=DataConfig(
            kind=data["kind"],
            classes=data["classes"],
            samples_per_class=data["samples_per_class"],
            image_shape=tuple(data["image_shape"]),
            noise=float(data["noise"]),
            test_fraction=float(data["test_fraction"]),
            manifest=data["manifest"],
        ),
        server_host=server["host"],
        server_port=server["port"],
    )


def load_config(path=None, overrides=None):
    """Read a config file (optional), apply flag overrides, validate."""
    doc = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise MissingFileError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError([(str(path), f"not valid JSON: {exc}")]) from exc
        if not isinstance(doc, dict):
            raise ValidationError([(str(path), "config must be a JSON object")])
    if overrides:
        problems = []
        _merge_overrides(doc, overrides, problems)
        if problems:
            raise ValidationError(problems)
    return resolve_config(doc)


def _merge_overrides(doc, overrides, problems):
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        cursor = doc
        node = DEFAULT_CONFIG
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                problems.append((dotted, "unknown configuration key"))
                break
            node = node[part]
            cursor = cursor.setdefault(part, {})
        else:
            leaf = parts[-1]
            if not isinstance(node, dict) or leaf not in node:
                problems.append((dotted, "unknown configuration key"))
            else:
                cursor[leaf] = value


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
