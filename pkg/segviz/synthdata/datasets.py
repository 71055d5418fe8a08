"""Per-node datasets with incomplete annotations and the external test set."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from segviz.synthdata.config import DataConfig, PhantomConfig
from segviz.synthdata.phantom import Sample, generate_sample, mask_annotations

logger = logging.getLogger(__name__)

NODE_ID_STRIDE = 100_000  # sample ids of node k start at (k + 1) * NODE_ID_STRIDE
TEST_ID_BASE = 10_000_000


@dataclass
class NodeDataset:
    """Training and validation samples of one node, annotated for its task only."""

    node_id: int
    task: str
    class_id: int
    train: list[Sample] = field(default_factory=list)
    validation: list[Sample] = field(default_factory=list)

    @property
    def sample_count(self) -> int:
        return len(self.train)

    def sample_ids(self) -> set[int]:
        return {s.sample_id for s in self.train + self.validation}


def split_train_validation(
    samples: list[Sample], ratio: float, seed: int | list[int]
) -> tuple[list[Sample], list[Sample]]:
    """Reproducible shuffle-and-cut split; the training share is ``round(ratio * n)``."""
    if not samples:
        return [], []
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = min(max(int(math.floor(ratio * len(samples) + 0.5)), 1), len(samples))
    train = sorted((samples[i] for i in order[:n_train]), key=lambda s: s.sample_id)
    validation = sorted((samples[i] for i in order[n_train:]), key=lambda s: s.sample_id)
    return train, validation


def build_node_dataset(
    phantom: PhantomConfig,
    node_id: int,
    task: str,
    class_id: int,
    size: int,
    split_ratio: float = 0.8,
) -> NodeDataset:
    """Generate a node's volumes and keep only its own class annotated."""
    base = (node_id + 1) * NODE_ID_STRIDE
    samples = [
        mask_annotations(generate_sample(phantom, base + i), keep={class_id}) for i in range(size)
    ]
    train, validation = split_train_validation(samples, split_ratio, [phantom.seed, node_id])
    logger.info(
        f"node {node_id} ({task}): {len(train)} train / {len(validation)} validation samples"
    )
    return NodeDataset(
        node_id=node_id, task=task, class_id=class_id, train=train, validation=validation
    )


def build_test_set(phantom: PhantomConfig, size: int) -> list[Sample]:
    """Fully annotated held-out samples from an id range no node uses."""
    return [generate_sample(phantom, TEST_ID_BASE + i) for i in range(size)]


def build_datasets(data: DataConfig, tasks: list[str]) -> tuple[list[NodeDataset], list[Sample]]:
    """One node per task (node id = position in ``tasks``) plus the test set."""
    nodes = [
        build_node_dataset(
            data.phantom,
            node_id,
            task,
            data.task_classes[task],
            data.node_sizes[task],
            data.split_ratio,
        )
        for node_id, task in enumerate(tasks)
    ]
    test_set = build_test_set(data.phantom, data.test_size)
    logger.info(f"external test set: {len(test_set)} fully annotated samples")
    return nodes, test_set
