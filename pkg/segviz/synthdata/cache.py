"""Dataset export/import: flat binary tensors plus a YAML manifest.

Layout of a cache directory::

    manifest.yaml
    <sample_id>.image.f32    raw little-endian float32, shape [1, spatial...]
    <sample_id>.labels.u8    raw uint8, shape [spatial...]

The manifest records the data configuration the cache was generated from, the
nodes, and for every sample its id, group, split, shape and annotated classes.
"""

import logging
from pathlib import Path

import numpy as np
import yaml

from segviz.core.errors import ConfigError
from segviz.synthdata.config import DataConfig
from segviz.synthdata.datasets import NodeDataset, build_datasets
from segviz.synthdata.phantom import Sample

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.yaml"
FORMAT_VERSION = 1


def _config_fingerprint(data: DataConfig) -> dict:
    return data.model_dump(mode="json", exclude={"cache_dir"})


def _write_sample(directory: Path, sample: Sample) -> None:
    sample.image.astype("<f4").tofile(directory / f"{sample.sample_id}.image.f32")
    sample.labels.astype(np.uint8).tofile(directory / f"{sample.sample_id}.labels.u8")


def _sample_record(sample: Sample, group: str, split: str) -> dict:
    return {
        "sample_id": sample.sample_id,
        "group": group,
        "split": split,
        "shape": list(sample.spatial_shape),
        "annotated_classes": sorted(sample.annotated_classes),
    }


def export_dataset(
    directory: Path,
    data: DataConfig,
    nodes: list[NodeDataset],
    test_set: list[Sample],
) -> Path:
    """Write every node and test sample plus the manifest into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    records = []
    for node in nodes:
        for split, samples in (("train", node.train), ("validation", node.validation)):
            for sample in samples:
                _write_sample(directory, sample)
                records.append(_sample_record(sample, f"node:{node.node_id}", split))
    for sample in test_set:
        _write_sample(directory, sample)
        records.append(_sample_record(sample, "test", "test"))

    manifest = {
        "format_version": FORMAT_VERSION,
        "data": _config_fingerprint(data),
        "nodes": [
            {"node_id": n.node_id, "task": n.task, "class_id": n.class_id} for n in nodes
        ],
        "samples": records,
    }
    path = directory / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, sort_keys=False)
    logger.info(f"exported {len(records)} samples to {directory}")
    return path


def _read_sample(directory: Path, record: dict) -> Sample:
    shape = tuple(record["shape"])
    sample_id = record["sample_id"]
    image = np.fromfile(directory / f"{sample_id}.image.f32", dtype="<f4")
    labels = np.fromfile(directory / f"{sample_id}.labels.u8", dtype=np.uint8)
    expected = int(np.prod(shape))
    if image.size != expected or labels.size != expected:
        raise ConfigError(f"cache entry {sample_id} does not match its manifest shape {shape}")
    image = image.astype(np.float32).reshape((1,) + shape)
    labels = labels.reshape(shape)
    image.flags.writeable = False
    labels.flags.writeable = False
    return Sample(
        sample_id=sample_id,
        image=image,
        labels=labels,
        annotated_classes=frozenset(record["annotated_classes"]),
    )


def import_dataset(directory: Path) -> tuple[dict, list[NodeDataset], list[Sample]]:
    """Read a cache directory; returns (config fingerprint, nodes, test set)."""
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"no dataset manifest at {path}")
    with open(path, encoding="utf-8") as f:
        manifest = yaml.safe_load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported cache format {manifest.get('format_version')!r}")

    nodes = {
        n["node_id"]: NodeDataset(node_id=n["node_id"], task=n["task"], class_id=n["class_id"])
        for n in manifest["nodes"]
    }
    test_set = []
    for record in manifest["samples"]:
        sample = _read_sample(directory, record)
        if record["group"] == "test":
            test_set.append(sample)
        else:
            node = nodes[int(record["group"].split(":", 1)[1])]
            getattr(node, record["split"]).append(sample)
    return manifest["data"], [nodes[k] for k in sorted(nodes)], test_set


def load_or_generate(data: DataConfig, tasks: list[str]) -> tuple[list[NodeDataset], list[Sample]]:
    """Use ``data.cache_dir`` when it holds a matching export, else generate (and export)."""
    if data.cache_dir is None:
        return build_datasets(data, tasks)

    manifest = Path(data.cache_dir) / MANIFEST_NAME
    if manifest.exists():
        fingerprint, nodes, test_set = import_dataset(data.cache_dir)
        if fingerprint == _config_fingerprint(data) and [n.task for n in nodes] == list(tasks):
            logger.info(f"loaded cached dataset from {data.cache_dir}")
            return nodes, test_set
        logger.warning(f"dataset cache at {data.cache_dir} is stale, regenerating")

    nodes, test_set = build_datasets(data, tasks)
    export_dataset(data.cache_dir, data, nodes, test_set)
    return nodes, test_set
