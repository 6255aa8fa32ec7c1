"""Center-point noise emulating an imperfect upstream light-center detector.

The perturbation is a zero-inflated, truncated isotropic Gaussian: with
probability ``p_zero`` the center is left untouched, otherwise each axis gets
an independent N(0, sigma^2) draw, resampled until its magnitude is at most
``clip``. Randomness always comes from an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import LightAnnotation, Point


@dataclass(frozen=True)
class NoiseConfig:
    p_zero: float = 0.3
    sigma: float = 6.0
    clip: float = 16.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_zero <= 1.0:
            raise ConfigError(f"noise.p_zero must be in [0, 1], got {self.p_zero}")
        if self.sigma < 0:
            raise ConfigError(f"noise.sigma must be >= 0, got {self.sigma}")
        if self.clip < 0:
            raise ConfigError(f"noise.clip must be >= 0, got {self.clip}")


def _truncated_normal(sigma: float, clip: float, rng: np.random.Generator) -> float:
    if sigma == 0 or clip == 0:
        return 0.0
    while True:
        e = rng.normal(0.0, sigma)
        if abs(e) <= clip:
            return float(e)


def sample_noise(cfg: NoiseConfig, rng: np.random.Generator) -> tuple:
    """Draw one (eps_x, eps_y) pair, advancing ``rng``."""
    if rng.random() < cfg.p_zero:
        return 0.0, 0.0
    ex = _truncated_normal(cfg.sigma, cfg.clip, rng)
    ey = _truncated_normal(cfg.sigma, cfg.clip, rng)
    return ex, ey


def frozen_noise(cfg: NoiseConfig, index: int) -> tuple:
    """Noise for evaluation sample ``index``; independent of draw order."""
    return sample_noise(cfg, np.random.default_rng([cfg.seed, index]))


def shift_center(annotation: LightAnnotation, eps) -> Point:
    """Center + eps, clamped back into the vehicle box."""
    c = annotation.center
    return annotation.vehicle.clamp(Point(c.x + eps[0], c.y + eps[1]))


def apply_noise(annotation: LightAnnotation, cfg: NoiseConfig, rng: np.random.Generator) -> Point:
    return shift_center(annotation, sample_noise(cfg, rng))
