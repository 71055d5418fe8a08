"""Foreground/background-centred patch sampling."""

import logging
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from segviz.core.errors import DataGenerationError, ShapeError
from segviz.synthdata.phantom import Sample

logger = logging.getLogger(__name__)


class Patch(NamedTuple):
    image: np.ndarray  # [1, patch...] float32
    label: np.ndarray  # [1, patch...] uint8 in {0, 1}
    center: tuple[int, ...]  # centre voxel in volume coordinates


def _centre_pool(mask: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Candidate centres: prefer voxels whose patch fits without clamping."""
    inside = np.argwhere(mask & valid)
    return inside if len(inside) else np.argwhere(mask)


def sample_patches(
    sample: Sample,
    patch_size: Sequence[int],
    count: int,
    pos_ratio: float,
    class_id: int,
    seed: int | Sequence[int],
) -> list[Patch]:
    """Draw ``count`` patches whose centre voxel is foreground with probability ``pos_ratio``.

    Centres are drawn among voxels whose patch fits in the volume; when a class has
    no such voxel any voxel of the class is used and the patch is clamped inside the
    bounds. Labels are binarized to ``class_id``.
    """
    dims = sample.spatial_shape
    size = tuple(int(p) for p in patch_size)
    if len(size) != len(dims):
        raise ShapeError(f"patch size {size} does not match volume rank {len(dims)}")
    if any(p < 1 or p > d for p, d in zip(size, dims)):
        raise ShapeError(f"patch {size} larger than volume {dims}")
    if not 0.0 <= pos_ratio <= 1.0:
        raise ValueError(f"pos_ratio must be in [0, 1], got {pos_ratio}")

    binary = sample.labels == class_id
    valid = np.zeros(dims, dtype=bool)
    valid[tuple(slice(p // 2, d - p + p // 2 + 1) for p, d in zip(size, dims))] = True

    foreground = _centre_pool(binary, valid)
    background = _centre_pool(~binary, valid)
    if pos_ratio > 0 and len(foreground) == 0:
        raise DataGenerationError(
            f"sample {sample.sample_id} has no voxel of class {class_id} for positive patches"
        )
    if pos_ratio < 1 and len(background) == 0:
        raise DataGenerationError(f"sample {sample.sample_id} has no background voxel")

    rng = np.random.default_rng(seed)
    dims_arr = np.asarray(dims)
    size_arr = np.asarray(size)
    patches = []
    for _ in range(count):
        pool = foreground if rng.random() < pos_ratio else background
        center = pool[rng.integers(len(pool))]
        start = np.clip(center - size_arr // 2, 0, dims_arr - size_arr)
        window = tuple(slice(s, s + p) for s, p in zip(start, size))
        patches.append(
            Patch(
                image=sample.image[(slice(None),) + window].copy(),
                label=binary[window].astype(np.uint8)[np.newaxis],
                center=tuple(int(c) for c in start + size_arr // 2),
            )
        )
    return patches
