"""Synthetic phantom data for federated segmentation experiments.

This module provides:
- Deterministic two-organ phantoms (liver-like and spleen-like ellipses)
- Annotation masking to model incomplete labels per node
- Foreground/background-centred patch sampling
- Node datasets with 80:20 splits and a fully annotated test set
- Export/import of datasets as flat binary tensors plus a manifest
"""

from segviz.synthdata.cache import export_dataset, import_dataset, load_or_generate
from segviz.synthdata.config import DataConfig, OrganSpec, PhantomConfig
from segviz.synthdata.datasets import (
    NODE_ID_STRIDE,
    TEST_ID_BASE,
    NodeDataset,
    build_datasets,
    build_node_dataset,
    build_test_set,
    split_train_validation,
)
from segviz.synthdata.patches import Patch, sample_patches
from segviz.synthdata.phantom import (
    Sample,
    generate_sample,
    mask_annotations,
    normalize_intensity,
)

__all__ = [
    "NODE_ID_STRIDE",
    "TEST_ID_BASE",
    "DataConfig",
    "NodeDataset",
    "OrganSpec",
    "Patch",
    "PhantomConfig",
    "Sample",
    "build_datasets",
    "build_node_dataset",
    "build_test_set",
    "export_dataset",
    "generate_sample",
    "import_dataset",
    "load_or_generate",
    "mask_annotations",
    "normalize_intensity",
    "sample_patches",
    "split_train_validation",
]
