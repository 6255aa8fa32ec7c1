"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` and blank lines are ignored. Unknown keys and
values that do not parse as the key's type are rejected with the line
number. ``serialize`` writes every key, so ``parse(serialize(c)) == c``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .geometry import CropMode, CropSpec
from .noise import NoiseConfig
from .synth import HUES, SynthConfig
from .train import ROUTES, TrainConfig

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class ExperimentConfig:
    crop_size: int = 128
    crop_mode: str = "vehicle"
    noise_p_zero: float = 0.3
    noise_sigma: float = 6.0
    noise_clip: float = 16.0
    noise_seed: int = 0
    eval_noise_seed: int = 1234
    train_lr: float = 1e-3
    train_weight_decay: float = 1e-4
    train_epochs: int = 25
    train_batch_size: int = 16
    train_swa_start_epoch: int = 21
    train_swa_lr_decay: float = 0.1
    train_seed: int = 0
    train_noise: bool = False
    train_augment: bool = False
    train_augment_route: str = "mirrored"
    data_dir: str = ""
    data_train_fraction: float = 0.8
    data_split_seed: int = 0
    synth_width: int = 640
    synth_height: int = 480
    synth_n_scenes: int = 100
    synth_vehicles_min: int = 1
    synth_vehicles_max: int = 3
    synth_light_min: float = 14.0
    synth_light_max: float = 40.0
    synth_irregularity: float = 0.4
    synth_occlusion: float = 0.15
    synth_hues: tuple = ("red", "amber", "white")
    synth_clutter: float = 0.5
    synth_front_right_keep: float = 1.0
    synth_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            choices = CHOICES.get(f.name)
            value = getattr(self, f.name)
            if choices and f.type != "tuple" and value not in choices:
                raise ConfigError(f"{key_of(f.name)} must be one of {sorted(choices)}, got {value!r}")
            if choices and f.type == "tuple" and not set(value) <= set(choices):
                raise ConfigError(f"{key_of(f.name)} entries must be in {sorted(choices)}, got {value!r}")
        # build the component configs once to surface their validation errors
        self.crop_spec()
        self.train_config()
        self.noise_config()

    def crop_spec(self) -> CropSpec:
        try:
            return CropSpec(self.crop_size, CropMode(self.crop_mode))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(self.noise_p_zero, self.noise_sigma, self.noise_clip, self.noise_seed)

    def eval_noise_config(self) -> NoiseConfig:
        return replace(self.noise_config(), seed=self.eval_noise_seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.train_lr, weight_decay=self.train_weight_decay, epochs=self.train_epochs,
            batch_size=self.train_batch_size, swa_start_epoch=self.train_swa_start_epoch,
            swa_lr_decay=self.train_swa_lr_decay, seed=self.train_seed,
        )

    def synth_config(self) -> SynthConfig:
        cfg = SynthConfig(
            width=self.synth_width, height=self.synth_height, n_scenes=self.synth_n_scenes,
            vehicles_min=self.synth_vehicles_min, vehicles_max=self.synth_vehicles_max,
            light_min=self.synth_light_min, light_max=self.synth_light_max,
            irregularity=self.synth_irregularity, occlusion=self.synth_occlusion,
            hues=tuple(self.synth_hues), clutter=self.synth_clutter,
            front_right_keep=self.synth_front_right_keep, seed=self.synth_seed,
        )
        cfg.validate()
        return cfg

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


CHOICES = {
    "crop_mode": {m.value for m in CropMode},
    "train_augment_route": set(ROUTES),
    "synth_hues": set(HUES),
}


def key_of(attr: str) -> str:
    section, _, rest = attr.partition("_")
    return f"{section}.{rest}"


KEYS = {key_of(f.name): f for f in fields(ExperimentConfig)}


def _convert(f, raw: str):
    kind = f.type
    if kind == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "tuple":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_config(text: str) -> ExperimentConfig:
    values, seen = {}, set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        f = KEYS[key]
        try:
            values[f.name] = _convert(f, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def serialize_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{key} = {_format(getattr(cfg, f.name))}\n" for key, f in KEYS.items())
