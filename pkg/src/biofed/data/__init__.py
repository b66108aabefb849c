"""Dataset ingestion, preprocessing, partitioning, and synthesis."""

from .images import (
    RawImage,
    decode_netpbm,
    encode_netpbm,
    preprocess,
    read_image,
    resize_nearest,
    write_sidecar,
)
from .manifest import (
    Dataset,
    DatasetManifest,
    SampleRef,
    SourceSite,
    derive_split,
    ingest,
    load_dataset,
    manifest_from_dict,
    manifest_to_dict,
    save_manifest,
)
from .partition import Shard, client_name, load_shard, partition, save_shard
from .synthetic import synthesize

__all__ = [
    "RawImage",
    "decode_netpbm",
    "encode_netpbm",
    "preprocess",
    "read_image",
    "resize_nearest",
    "write_sidecar",
    "Dataset",
    "DatasetManifest",
    "SampleRef",
    "SourceSite",
    "derive_split",
    "ingest",
    "load_dataset",
    "manifest_from_dict",
    "manifest_to_dict",
    "save_manifest",
    "Shard",
    "client_name",
    "load_shard",
    "partition",
    "save_shard",
    "synthesize",
]
