"""Partitioning of a manifest's train split into per-client shards."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..nn.train import fisher_yates

PARTITION_DOMAIN = 4

STRATEGIES = ("iid", "label-skew")


def client_name(ordinal):
    return f"client-{ordinal:03d}"


@dataclass
class Shard:
    """One client's slice of the train split.

    ``indices`` point into the manifest's sample list and are kept sorted
    ascending, so a single shard covering everything enumerates samples in
    dataset order. Tensors are attached lazily by ``materialize``.
    """

    client_id: str
    indices: tuple
    x: "np.ndarray | None" = field(default=None, repr=False)
    y: "np.ndarray | None" = field(default=None, repr=False)

    def __len__(self):
        return len(self.indices)

    def materialize(self, dataset):
        self.x, self.y = dataset.subset(self.indices)
        return self


def partition(manifest, num_clients, strategy="iid", seed=0):
    """Split the train samples into disjoint, exhaustive shards.

    iid: a seeded shuffle dealt round-robin, so shard sizes differ by at most
    one and the remainder lands on the lowest client ordinals. label-skew:
    class k goes to client k mod num_clients, giving disjoint class subsets
    whenever there are at least as many classes as clients.
    """
    if strategy not in STRATEGIES:
        raise ValidationError([("strategy", f"must be one of {STRATEGIES}, got {strategy!r}")])
    if num_clients < 1:
        raise ValidationError([("num_clients", f"must be at least 1, got {num_clients}")])
    train = manifest.train_indices()
    if len(train) < num_clients:
        raise ValidationError(
            [("num_clients", f"{len(train)} train samples cannot cover {num_clients} clients")]
        )
    buckets = [[] for _ in range(num_clients)]
    if strategy == "iid":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(PARTITION_DOMAIN,)))
        order = fisher_yates(len(train), rng)
        for pos, j in enumerate(order):
            buckets[pos % num_clients].append(train[j])
    else:
        for i in train:
            label = manifest.samples[i].label
            buckets[label % num_clients].append(i)
        empty = [k for k, b in enumerate(buckets) if not b]
        if empty:
            raise ValidationError(
                [("num_clients", f"label-skew left clients {empty} with no samples (need num_classes >= num_clients)")]
            )
    return [Shard(client_name(k), tuple(sorted(b))) for k, b in enumerate(buckets)]


def save_shard(shard, path):
    doc = {"client_id": shard.client_id, "indices": list(shard.indices)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_shard(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "client_id" not in doc or "indices" not in doc:
        raise ValidationError([("", f"not a shard file: {path}")])
    return Shard(str(doc["client_id"]), tuple(int(i) for i in doc["indices"]))
