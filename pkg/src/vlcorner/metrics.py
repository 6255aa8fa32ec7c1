"""Evaluation metrics for four-corner regression.

All batch metrics share one per-corner residual: ``||p * w - t||_2`` where
``w`` is 1 for a visible corner and ``INVISIBLE_WEIGHT`` otherwise. Invisible
targets are stored as (0, 0), so their residual is ``1e-8 * ||p||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InputError
from .geometry import CropSample, CropSpec, LightType

INVISIBLE_WEIGHT = 1e-8
DEFAULT_THRESHOLDS = (0.25, 0.5)
METRIC_KEYS = ("regression_loss", "ade", "pct_error")


@dataclass
class BatchEval:
    predictions: np.ndarray  # (N, 4, 2)
    targets: np.ndarray  # (N, 4, 2)
    mask: np.ndarray  # (N, 4) bool
    width: np.ndarray  # (N,) light box width, px
    height: np.ndarray  # (N,)

    def __post_init__(self):
        n = len(self.targets)
        self.predictions = np.asarray(self.predictions, dtype=float).reshape(n, 4, 2)
        self.targets = np.asarray(self.targets, dtype=float).reshape(n, 4, 2)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(n, 4)
        self.width = np.asarray(self.width, dtype=float).reshape(n)
        self.height = np.asarray(self.height, dtype=float).reshape(n)

    def __len__(self):
        return len(self.targets)

    @property
    def visible_count(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @classmethod
    def from_samples(cls, samples: Sequence[CropSample], predictions) -> "BatchEval":
        return cls(
            predictions=np.asarray(predictions, dtype=float).reshape(len(samples), 4, 2),
            targets=np.stack([s.targets for s in samples]) if samples else np.zeros((0, 4, 2)),
            mask=np.stack([s.mask for s in samples]) if samples else np.zeros((0, 4), bool),
            width=[s.light_w for s in samples],
            height=[s.light_h for s in samples],
        )


def corner_weights(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 1.0, INVISIBLE_WEIGHT)


def corner_residuals(batch: BatchEval) -> np.ndarray:
    """(N, 4) residual norms ``||p*w - t||``."""
    w = corner_weights(batch.mask)[..., None]
    return np.linalg.norm(batch.predictions * w - batch.targets, axis=-1)


def _per_example(batch: BatchEval) -> np.ndarray:
    v = batch.visible_count
    if len(batch) and v.min() < 1:
        bad = int(np.argmin(v))
        raise InputError(f"example {bad} has no visible corners")
    return corner_residuals(batch).sum(axis=1) / v


def masked_corner_loss(batch: BatchEval) -> float:
    """Mean over examples of the visible-count-normalized residual sum."""
    if len(batch) == 0:
        return math.nan
    return float(_per_example(batch).mean())


def average_distance_error(batch: BatchEval, spec: CropSpec = CropSpec()) -> float:
    """Mean per-example corner distance in pixels (residual times half-extent)."""
    if len(batch) == 0:
        return math.nan
    return float((spec.half_extent * _per_example(batch)).mean())


def degenerate_mask(batch: BatchEval) -> np.ndarray:
    return (batch.width <= 0) | (batch.height <= 0)


def percent_error(batch: BatchEval, spec: CropSpec = CropSpec()) -> float:
    """Corner distance relative to the light box diagonal, in percent.

    Examples with a zero-width or zero-height box are skipped; use
    ``degenerate_mask`` to count them. Returns nan if nothing remains.
    """
    per = _per_example(batch) if len(batch) else np.zeros(0)
    keep = ~degenerate_mask(batch)
    if not keep.any():
        return math.nan
    diag = np.hypot(batch.width[keep], batch.height[keep])
    return float(100.0 * (per[keep] * spec.half_extent / diag).mean())


def corner_box(points: Iterable) -> tuple:
    """Axis-aligned (x0, y0, x1, y1) around the present points."""
    pts = [p for p in points if p is not None]
    if not pts:
        raise InputError("corner_box needs at least one point")
    arr = np.asarray(pts, dtype=float).reshape(-1, 2)
    x0, y0 = arr.min(axis=0)
    x1, y1 = arr.max(axis=0)
    return float(x0), float(y0), float(x1), float(y1)


def iou(box_a, box_b) -> float:
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    if area_a <= 0 or area_b <= 0:
        return 1.0 if tuple(box_a) == tuple(box_b) else 0.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def corner_ious(batch: BatchEval, spec: CropSpec = CropSpec()) -> np.ndarray:
    """Per-light IoU between predicted and ground-truth corner boxes.

    Both boxes use only the corners visible in the ground truth, and are
    measured in crop pixels (the shared crop-center offset cancels).
    """
    h = spec.half_extent
    out = np.zeros(len(batch))
    for i in range(len(batch)):
        m = batch.mask[i]
        gt = corner_box(batch.targets[i][m] * h)
        pr = corner_box(batch.predictions[i][m] * h)
        out[i] = iou(pr, gt)
    return out


def rates_from_ious(ious, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> dict:
    ious = np.asarray(ious, dtype=float)
    if len(ious) == 0:
        return {float(a): math.nan for a in thresholds}
    return {float(a): float(np.count_nonzero(ious > a) / len(ious)) for a in thresholds}


def detection_rate(
    batch: BatchEval,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    spec: CropSpec = CropSpec(),
) -> dict:
    """Fraction of lights whose corner-box IoU exceeds each threshold."""
    return rates_from_ious(corner_ious(batch, spec), thresholds)


def evaluate_batch(batch: BatchEval, spec: CropSpec = CropSpec(),
                   thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> dict:
    return {
        "regression_loss": masked_corner_loss(batch),
        "ade": average_distance_error(batch, spec),
        "pct_error": percent_error(batch, spec),
        "n_test": len(batch),
        "n_degenerate": int(degenerate_mask(batch).sum()),
        "detection_rate": detection_rate(batch, thresholds, spec),
    }


def weighted_aggregate(
    per_light: Mapping[LightType, tuple], keys: Optional[Sequence[str]] = None
) -> dict:
    """Test-set-size weighted mean of per-light metrics.

    ``per_light`` maps light type to ``(metrics_dict, n_test)``. Entries with
    ``n_test == 0`` carry no weight and may hold nan metrics.
    """
    items = [(m, n) for m, n in per_light.values() if n > 0]
    if not items:
        raise InputError("weighted_aggregate: every light type has n_test = 0")
    keys = list(keys) if keys is not None else list(items[0][0].keys())
    total = sum(n for _, n in items)
    return {k: sum(n * m[k] for m, n in items) / total for k in keys}
