"""Phantom volumes: ellipse organs on a noisy background."""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from segviz.core.errors import DataGenerationError
from segviz.synthdata.config import OrganSpec, PhantomConfig

logger = logging.getLogger(__name__)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Sample:
    """One volume with its (possibly incomplete) label map.

    ``image`` is [1, spatial...] float32 in [0, 1]; ``labels`` is uint8 with 0 for
    background and organ class ids elsewhere. Classes outside
    ``annotated_classes`` are never present in ``labels``.
    """

    sample_id: int
    image: np.ndarray
    labels: np.ndarray
    annotated_classes: frozenset[int] = field(default_factory=frozenset)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.labels.shape

    def mask(self, class_id: int) -> np.ndarray:
        """Binary uint8 mask of one class."""
        return (self.labels == class_id).astype(np.uint8)


def _ellipse(
    coords: np.ndarray, center: np.ndarray, semi: np.ndarray, angle: float
) -> np.ndarray:
    """Boolean ellipse (ellipsoid in 3-D), rotated in the plane of the first two axes."""
    d = coords - center.reshape((-1,) + (1,) * (coords.ndim - 1))
    cos, sin = math.cos(angle), math.sin(angle)
    u = cos * d[0] + sin * d[1]
    w = -sin * d[0] + cos * d[1]
    dist = (u / semi[0]) ** 2 + (w / semi[1]) ** 2
    if len(semi) == 3:
        dist = dist + (d[2] / semi[2]) ** 2
    return dist <= 1.0


def _place_organ(
    rng: np.random.Generator,
    organ: OrganSpec,
    config: PhantomConfig,
    coords: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one organ; returns (mask, mask grown by one voxel)."""
    extent = np.asarray(config.size, dtype=np.float64)
    semi = rng.uniform(organ.min_axis_frac, organ.max_axis_frac, size=len(extent)) * extent / 2
    semi = np.maximum(semi, config.min_semi_axis)
    angle = rng.uniform(0.0, math.pi)

    # Rotation mixes the first two axes, so both must clear the larger semi-axis.
    reach = semi.copy()
    reach[:2] = semi[:2].max()
    low = config.margin + reach
    high = extent - 1 - config.margin - reach
    if np.any(high < low):
        raise DataGenerationError(
            f"{organ.name} with semi-axes {np.round(semi, 2).tolist()} cannot fit "
            f"in {config.size} with margin {config.margin}"
        )
    center = rng.uniform(low, high)
    return _ellipse(coords, center, semi, angle), _ellipse(coords, center, semi + 1.0, angle)


def generate_sample(config: PhantomConfig, sample_id: int) -> Sample:
    """Deterministic phantom for ``(config.seed, sample_id)`` with every organ annotated."""
    rng = np.random.default_rng([config.seed, sample_id])
    shape = tuple(config.size)
    coords = np.indices(shape, dtype=np.float64)

    for attempt in range(config.max_placement_attempts):
        labels = np.zeros(shape, dtype=np.uint8)
        placed = True
        for organ in config.organs:
            mask, grown = _place_organ(rng, organ, config, coords)
            if not mask.any() or np.any(grown & (labels > 0)):
                placed = False
                break
            labels[mask] = organ.class_id
        if placed:
            break
    else:
        raise DataGenerationError(
            f"sample {sample_id}: organs could not be placed disjointly after "
            f"{config.max_placement_attempts} attempts"
        )
    if attempt:
        logger.debug(f"sample {sample_id}: placed after {attempt + 1} attempts")

    image = np.full(shape, config.background, dtype=np.float64)
    for organ in config.organs:
        image[labels == organ.class_id] = organ.intensity
    image += rng.normal(0.0, config.noise_sigma, size=shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)[np.newaxis]

    return Sample(
        sample_id=sample_id,
        image=_readonly(image),
        labels=_readonly(labels),
        annotated_classes=frozenset(config.class_ids),
    )


def mask_annotations(sample: Sample, keep: Iterable[int]) -> Sample:
    """Drop the labels of every class not in ``keep``; the image is shared untouched."""
    keep = frozenset(keep)
    labels = np.where(np.isin(sample.labels, list(keep)), sample.labels, 0).astype(np.uint8)
    return Sample(
        sample_id=sample.sample_id,
        image=sample.image,
        labels=_readonly(labels),
        annotated_classes=keep,
    )


def normalize_intensity(volume: np.ndarray) -> np.ndarray:
    """Min-max scale a volume to [0, 1]."""
    volume = np.asarray(volume)
    low, high = volume.min(), volume.max()
    if high == low:
        raise ValueError(f"degenerate intensity range: volume is constant ({low})")
    return (volume - low) / (high - low)
