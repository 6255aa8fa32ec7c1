"""Per-light-type training loop, model registry and prediction routing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .geometry import (
    LIGHT_TYPES, CropSample, CropSpec, LightAnnotation, LightType,
    flip_targets, make_sample,
)
from .model import DEFAULT_MODEL, CornerRegressor, Params
from .noise import NoiseConfig, sample_noise, shift_center
from .optim import AdamState, SWAState, adam_step, swa_learning_rate, swa_params, swa_update

log = logging.getLogger(__name__)

ROUTES = ("mirrored", "same")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 25
    batch_size: int = 16
    swa_start_epoch: int = 21
    swa_lr_decay: float = 0.1
    seed: int = 0

    def __post_init__(self):
        # lr = 0 and weight_decay = 0 are allowed for frozen-parameter runs
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("train.lr and train.weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if not 1 <= self.swa_start_epoch <= self.epochs:
            raise ConfigError(
                f"train.swa_start_epoch must be in [1, {self.epochs}], got {self.swa_start_epoch}"
            )
        if self.swa_lr_decay <= 0:
            raise ConfigError("train.swa_lr_decay must be > 0")


@dataclass
class TrainResult:
    light_type: LightType
    params: Params
    loss_trace: List[float]
    swa: SWAState
    n_train: int
    first_batch: Optional[tuple] = None  # (targets, mask) of the first batch


def light_index(light_type: LightType) -> int:
    return LIGHT_TYPES.index(LightType(light_type))


@dataclass
class _Entry:
    annotation: LightAnnotation
    flip: bool


def training_pool(annotations: Sequence[LightAnnotation], light_type: LightType,
                  augment: bool = False, route: str = "mirrored") -> List[_Entry]:
    """Annotations feeding one model, with flip flags for augmented copies.

    With ``route="mirrored"`` flipped copies of the mirror type join the pool
    (a flipped FR crop looks like an FL crop); ``"same"`` flips the model's
    own type instead.
    """
    if route not in ROUTES:
        raise ConfigError(f"augment route must be one of {ROUTES}, got {route!r}")
    light_type = LightType(light_type)
    own = [_Entry(a, False) for a in annotations if a.light_type is light_type]
    if not own:
        raise InputError(f"no training annotations for light type {light_type.value}")
    if not augment:
        return own
    source = light_type.mirror if route == "mirrored" else light_type
    return own + [_Entry(a, True) for a in annotations if a.light_type is source]


def _crop_entry(entry: _Entry, images, spec: CropSpec, center=None):
    s = make_sample(images[entry.annotation.image], entry.annotation, spec, center=center, scale=None)
    pixels, targets, mask = s.pixels, s.targets, s.mask
    if entry.flip:
        pixels = pixels[:, ::-1]
        targets, mask = flip_targets(targets, mask)
    return pixels, targets, mask


def _materialize(pool, images, spec, centers=None):
    crops, targets, masks = [], [], []
    for k, entry in enumerate(pool):
        c = None if centers is None else centers[k]
        p, t, m = _crop_entry(entry, images, spec, c)
        crops.append(p)
        targets.append(t)
        masks.append(m)
    return np.stack(crops), np.stack(targets), np.stack(masks)


def _to_float(crops, dtype):
    out = crops.astype(dtype)
    if crops.dtype == np.uint8:
        out /= 255
    return out


def train_light_model(
    annotations: Sequence[LightAnnotation],
    images: Mapping[str, np.ndarray],
    light_type: LightType,
    cfg: TrainConfig,
    crop_spec: CropSpec,
    noise_cfg: Optional[NoiseConfig] = None,
    augment: bool = False,
    route: str = "mirrored",
    model: CornerRegressor = DEFAULT_MODEL,
    dtype=np.float32,
) -> TrainResult:
    """Train one corner regressor and return its SWA-averaged parameters.

    ``images`` maps ``annotation.image`` to a uint8 (H, W, 3) array. When
    ``noise_cfg`` is given, every epoch draws a fresh center offset per
    sample and re-crops around the shifted center.
    """
    light_type = LightType(light_type)
    pool = training_pool(annotations, light_type, augment, route)
    li = light_index(light_type)
    params = model.init_params([cfg.seed, li], dtype)
    shuffle_rng = np.random.default_rng([cfg.seed, li, 1])
    adam, swa = AdamState(), SWAState()
    trace = []
    first_batch = None

    fixed = None if noise_cfg is not None else _materialize(pool, images, crop_spec)
    log.info("training %s on %d crops", light_type.value, len(pool))
    for epoch in range(1, cfg.epochs + 1):
        if fixed is None:
            noise_rng = np.random.default_rng([noise_cfg.seed, li, epoch])
            centers = []
            for entry in pool:
                eps = sample_noise(noise_cfg, noise_rng)
                centers.append(shift_center(entry.annotation, eps))
            crops, targets, masks = _materialize(pool, images, crop_spec, centers)
        else:
            crops, targets, masks = fixed
        lr = swa_learning_rate(epoch, cfg)
        order = shuffle_rng.permutation(len(pool))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if first_batch is None:
                first_batch = (targets[idx].copy(), masks[idx].copy())
            loss, grads = model.loss_and_grads(params, _to_float(crops[idx], dtype), targets[idx], masks[idx])
            adam_step(params, grads, adam, cfg, lr=lr)
            total += loss * len(idx)
        trace.append(total / len(pool))
        swa_update(swa, params, epoch, cfg)
        log.debug("%s epoch %d loss %.5f", light_type.value, epoch, trace[-1])
    return TrainResult(light_type, swa_params(swa, params), trace, swa, len(pool), first_batch)


class ModelRegistry:
    """Four independent parameter sets keyed by light type."""

    def __init__(self, models: Optional[Mapping] = None, model: CornerRegressor = DEFAULT_MODEL):
        self.model = model
        self.models: Dict[LightType, Params] = {}
        for k, v in (models or {}).items():
            self.models[LightType(k)] = v

    def __contains__(self, light_type) -> bool:
        return LightType(light_type) in self.models

    def __getitem__(self, light_type) -> Params:
        try:
            return self.models[LightType(light_type)]
        except KeyError:
            raise ConfigError(f"no model registered for light type {LightType(light_type).value}") from None

    def __setitem__(self, light_type, params: Params) -> None:
        self.models[LightType(light_type)] = params

    def __len__(self):
        return len(self.models)

    def types(self):
        return [t for t in LIGHT_TYPES if t in self.models]


def predict(registry: ModelRegistry, sample: CropSample) -> np.ndarray:
    """Eight normalized corner offsets from the sample's light-type model."""
    return registry.model.forward(registry[sample.light_type], sample.pixels)


def predict_batch(registry: ModelRegistry, light_type, crops, batch_size: int = 64) -> np.ndarray:
    """Predictions (N, 8) for crops that all share ``light_type``."""
    params = registry[light_type]
    dtype = params["head.weight"].dtype
    out = [registry.model.forward(params, _to_float(crops[i:i + batch_size], dtype))
           for i in range(0, len(crops), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 8))
