"""
Scoring

Anomaly maps from reconstruction residuals, image scores, rank-based AUROC
and grayscale heatmap output.
"""

import logging
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np
from PIL import Image
from scipy.stats import rankdata

from core.tensor import Tensor, resize_bilinear
from models.report import AnomalyMap
from utils.constants import ERROR_MESSAGES, HEATMAP_FLAT_VALUE
from utils.errors import DegenerateLabels, EmptyMap, IoError, ShapeMismatch

logger = logging.getLogger(__name__)


def anomaly_map(
    y: Tensor,
    x_ref: Tensor,
    grid: Tuple[int, int],
    out_hw: Tuple[int, int],
    image_id: str = "",
) -> AnomalyMap:
    """
    Per-token channel norm of ``y - x_ref`` on ``grid``, upsampled to ``out_hw``
    with aligned-corner bilinear interpolation.
    """
    if y.shape != x_ref.shape or y.shape[0] != grid[0] * grid[1]:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="anomaly_map", left=y.shape, right=x_ref.shape))
    if out_hw[0] < grid[0] or out_hw[1] < grid[1]:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="anomaly_map", left=grid, right=out_hw))

    residual = y.data.astype(np.float64) - x_ref.data.astype(np.float64)
    token_norms = np.sqrt((residual * residual).sum(axis=1)).reshape(1, grid[0], grid[1])
    upsampled = resize_bilinear(Tensor(token_norms, dtype=np.float64), out_hw, align_corners=True)
    values = np.maximum(upsampled.data[0], 0.0)
    return AnomalyMap(values=values, image_id=image_id)


def anomaly_score(amap: AnomalyMap) -> float:
    """Image-level score: the maximum of the map."""
    if amap.values.size == 0:
        raise EmptyMap(ERROR_MESSAGES["EMPTY_MAP"].format(image_id=amap.image_id))
    return float(amap.values.max())


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Area under the ROC curve via the Mann-Whitney U statistic (midranks for ties).

    Raises:
        DegenerateLabels: only one class present
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="auroc", left=scores.shape, right=labels.shape))
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise DegenerateLabels(ERROR_MESSAGES["DEGENERATE_LABELS"].format(positives=positives, negatives=negatives))

    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - positives * (positives + 1) / 2.0
    return float(u / (positives * negatives))


def pixel_auroc(maps: Sequence[AnomalyMap], masks: Sequence[np.ndarray]) -> float:
    """AUROC over every pixel of every image pooled together."""
    if len(maps) != len(masks):
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="pixel_auroc", left=len(maps), right=len(masks)))
    for amap, mask in zip(maps, masks):
        if amap.values.shape != mask.shape:
            raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                op="pixel_auroc", left=amap.values.shape, right=mask.shape))
    scores = np.concatenate([m.values.ravel() for m in maps]) if maps else np.empty(0)
    labels = np.concatenate([np.asarray(m, dtype=bool).ravel() for m in masks]) if masks else np.empty(0, bool)
    return auroc(scores, labels)


def heatmap_pixels(amap: AnomalyMap) -> np.ndarray:
    """Min-max normalize to uint8; a constant map becomes mid-gray."""
    values = amap.values
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, HEATMAP_FLAT_VALUE, dtype=np.uint8)
    return np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def emit_heatmap(amap: AnomalyMap, path: Path) -> Path:
    """
    Write the map as an 8-bit binary PGM (P5).

    Raises:
        EmptyMap: map has no pixels
        IoError: the file could not be written
    """
    if amap.values.size == 0:
        raise EmptyMap(ERROR_MESSAGES["EMPTY_MAP"].format(image_id=amap.image_id))
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(heatmap_pixels(amap)).save(path, format="PPM")
    except OSError as e:
        logger.error(f"Failed to write heatmap {path}: {e}")
        raise IoError(f"cannot write heatmap {path}: {e}") from e
    logger.debug("Heatmap written: %s", path)
    return path
