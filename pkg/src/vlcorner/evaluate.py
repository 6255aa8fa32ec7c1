"""Evaluate a model registry on a test split, clean and with frozen noise."""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import LIGHT_TYPES, CropSpec, LightAnnotation, make_sample
from .metrics import (
    DEFAULT_THRESHOLDS, METRIC_KEYS, BatchEval, corner_ious, evaluate_batch,
    rates_from_ious, weighted_aggregate,
)
from .noise import shift_center
from .train import ModelRegistry, predict_batch

log = logging.getLogger(__name__)


def threshold_key(alpha: float) -> str:
    return f"map@{int(round(alpha * 100))}"


def build_samples(annotations: Sequence[LightAnnotation], indices: Sequence[int], images,
                  spec: CropSpec, eps_for: Optional[Callable[[int], tuple]] = None):
    """Crops for the given annotation indices, shifted by ``eps_for(i)`` if given."""
    samples = []
    for i in indices:
        a = annotations[i]
        if eps_for is None:
            samples.append(make_sample(images[a.image], a, spec, scale=None))
        else:
            eps = eps_for(i)
            samples.append(make_sample(images[a.image], a, spec, center=shift_center(a, eps),
                                       noise=eps, scale=None))
    return samples


def predict_samples(registry: ModelRegistry, samples) -> np.ndarray:
    if not samples:
        return np.zeros((0, 8))
    crops = np.stack([s.pixels for s in samples])
    return predict_batch(registry, samples[0].light_type, crops)


def evaluate_split(registry: ModelRegistry, annotations: Sequence[LightAnnotation],
                   indices: Sequence[int], images, spec: CropSpec,
                   eps_for: Optional[Callable[[int], tuple]] = None,
                   thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                   predictor: Optional[Callable] = None) -> dict:
    """Per-light metrics, the size-weighted aggregate and pooled detection rates.

    ``predictor(samples) -> (N, 8)`` replaces the registry, e.g. to feed the
    targets back as an oracle.
    """
    per_light, all_ious = {}, []
    for lt in LIGHT_TYPES:
        idx = [i for i in indices if annotations[i].light_type is lt]
        if not idx:
            per_light[lt.value] = None
            continue
        if predictor is None and lt not in registry:
            log.warning("no model for %s; its %d test lights are reported as n/a", lt.value, len(idx))
            per_light[lt.value] = None
            continue
        samples = build_samples(annotations, idx, images, spec, eps_for)
        preds = predictor(samples) if predictor else predict_samples(registry, samples)
        batch = BatchEval.from_samples(samples, preds)
        m = evaluate_batch(batch, spec, thresholds)
        rates = m.pop("detection_rate")
        for a in thresholds:
            m[threshold_key(a)] = rates[float(a)]
        per_light[lt.value] = m
        all_ious.append(corner_ious(batch, spec))

    present = {k: (m, m["n_test"]) for k, m in per_light.items() if m is not None}
    if present:
        weighted = weighted_aggregate(present, METRIC_KEYS)
        ious = np.concatenate(all_ious)
        rates = rates_from_ious(ious, thresholds)
    else:
        weighted = {k: math.nan for k in METRIC_KEYS}
        rates = {float(a): math.nan for a in thresholds}
        ious = np.zeros(0)
    weighted["n_test"] = int(sum(n for _, n in present.values()))
    return {
        "per_light": per_light,
        "weighted": weighted,
        "detection_rate": {threshold_key(a): rates[float(a)] for a in thresholds},
    }


def oracle_predictor(samples) -> np.ndarray:
    """Feeds ground-truth targets back as predictions."""
    return np.stack([s.targets.reshape(8) for s in samples]) if samples else np.zeros((0, 8))


def evaluate_dataset(registry: ModelRegistry, dataset, spec: CropSpec,
                     thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                     predictor: Optional[Callable] = None) -> dict:
    """Clean and frozen-noise evaluations of the manifest's test split."""
    m = dataset.manifest
    test = list(m.test)
    return {
        "clean": evaluate_split(registry, dataset.annotations, test, dataset.images, spec,
                                None, thresholds, predictor),
        "noisy": evaluate_split(registry, dataset.annotations, test, dataset.images, spec,
                                m.eps, thresholds, predictor),
    }
