"""Shared fixtures for the segviz test suite."""

import numpy as np
import pytest

from segviz.ndtensor import checked_numerics
from segviz.nn import ModelConfig
from segviz.optim import TrainConfig
from segviz.synthdata import DataConfig, PhantomConfig, build_datasets


@pytest.fixture(autouse=True)
def _checked_numerics():
    """Raise on NaN/Inf in every op run by a test."""
    with checked_numerics(True):
        yield


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_data():
    """16x16 phantoms, a handful of samples per node."""
    return DataConfig(
        phantom=PhantomConfig(size=[16, 16]),
        node_sizes={"liver": 4, "spleen": 3},
        test_size=2,
    )


@pytest.fixture
def tiny_model():
    """Two-level network with two channels at full resolution."""
    return ModelConfig(depth=2, channels=[2, 4], num_res_units=1, tasks=["liver", "spleen"])


@pytest.fixture
def tiny_train():
    """8x8 patches, one per volume, batches of two."""
    return TrainConfig(
        batch_size=2, base_lr=1e-2, baseline_epochs=2, patch_size=[8, 8], patches_per_volume=1
    )


@pytest.fixture
def tiny_nodes(tiny_data):
    """Liver node 0, spleen node 1 and the test set."""
    return build_datasets(tiny_data, ["liver", "spleen"])


TINY_CONFIG = """\
# tiny study for tests
name = tiny
seed = 0

data.phantom.size = [16, 16]
data.task_classes = {liver: 1, spleen: 2}
data.node_sizes = {liver: 4, spleen: 3}
data.test_size = 2

model.depth = 2
model.channels = [2, 4]
model.num_res_units = 1
model.tasks = [liver, spleen]

train.batch_size = 2
train.base_lr = 1.0e-2
train.baseline_epochs = 2
train.patch_size = [8, 8]
train.patches_per_volume = 1

fed.rounds = 1
fed.local_epochs = 2
"""


@pytest.fixture
def tiny_config_file(tmp_path):
    """Config file for the tiny study; outputs go to tmp_path/runs via --out."""
    path = tmp_path / "tiny.conf"
    path.write_text(TINY_CONFIG)
    return path
