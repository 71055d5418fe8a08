"""Soft dice loss for training and the hard dice score for evaluation."""

import numpy as np

from segviz.core.errors import ShapeError
from segviz.ndtensor import Tensor, sigmoid, sum_all

DICE_EPS = 1e-5


def _as_array(value: Tensor | np.ndarray) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def _require_binary(name: str, values: np.ndarray) -> None:
    if not np.all((values == 0) | (values == 1)):
        raise ValueError(f"{name} must be binary (0/1)")


def soft_dice_loss(logits: Tensor, target: Tensor, eps: float = DICE_EPS) -> Tensor:
    """1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), p = sigmoid(logits).

    Sums run over every voxel of the batch.
    """
    if logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} and target {target.shape} differ")
    _require_binary("target", target.data)

    probs = sigmoid(logits)
    intersection = sum_all(probs * target)
    denominator = sum_all(probs) + sum_all(target)
    return 1.0 - (intersection * 2.0 + eps) / (denominator + eps)


def binarize(logits: Tensor | np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """sigmoid(logits) > threshold as a uint8 mask."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    # sigmoid(x) > t  <=>  x > log(t / (1 - t))
    cutoff = np.log(threshold / (1.0 - threshold))
    return (_as_array(logits).astype(np.float64) > cutoff).astype(np.uint8)


def dice_score(pred: Tensor | np.ndarray, target: Tensor | np.ndarray) -> float:
    """2|P n T| / (|P| + |T|); 1.0 when both masks are empty, 0.0 when one is."""
    p = _as_array(pred)
    t = _as_array(target)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    _require_binary("prediction", p)
    _require_binary("target", t)

    p = p.astype(bool)
    t = t.astype(bool)
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, t).sum()) / total
