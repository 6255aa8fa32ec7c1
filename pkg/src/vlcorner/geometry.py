"""Coordinate frames, crop extraction, target normalization and flipping.

Conventions used throughout the package:

* A scene pixel with column index ``j`` and row index ``i`` covers the
  continuous square ``[j, j+1) x [i, i+1)``; its location is its center
  ``(j + 0.5, i + 0.5)``.
* A crop of side ``S`` placed at integer center ``c`` covers scene columns
  ``c - S/2 .. c + S/2 - 1``, so the continuous crop center sits exactly on
  ``c`` and crop-frame coordinate ``S/2`` maps back to ``c``.
* Corners are always ordered (top-left, top-right, bottom-right, bottom-left).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InputError

CORNER_NAMES = ("TL", "TR", "BR", "BL")
# TL<->TR, BR<->BL under a horizontal mirror.
FLIP_PERMUTATION = (1, 0, 3, 2)


class Point(NamedTuple):
    x: float
    y: float


class LightType(str, enum.Enum):
    FL = "FL"
    FR = "FR"
    RL = "RL"
    RR = "RR"

    @property
    def mirror(self) -> "LightType":
        return _MIRROR[self]

    @property
    def long_name(self) -> str:
        return _LONG_NAMES[self]


_MIRROR = {
    LightType.FL: LightType.FR,
    LightType.FR: LightType.FL,
    LightType.RL: LightType.RR,
    LightType.RR: LightType.RL,
}
_LONG_NAMES = {
    LightType.FL: "FrontLeft",
    LightType.FR: "FrontRight",
    LightType.RL: "RearLeft",
    LightType.RR: "RearRight",
}
LIGHT_TYPES = tuple(LightType)


class CropMode(str, enum.Enum):
    SCENE = "scene"
    VEHICLE = "vehicle"


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class VehicleBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not _finite(self.x_min, self.y_min, self.x_max, self.y_max):
            raise InputError(f"non-finite vehicle box {self}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InputError(f"vehicle box must satisfy min < max, got {self}")

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def clamp(self, p: Point) -> Point:
        return Point(
            min(max(p.x, self.x_min), self.x_max),
            min(max(p.y, self.y_min), self.y_max),
        )

    def within(self, width: int, height: int) -> bool:
        return (
            self.x_min >= 0 and self.y_min >= 0
            and self.x_max <= width and self.y_max <= height
        )

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class LightAnnotation:
    """One labeled light. Absent corners (``None``) are not visible."""

    image: str
    vehicle: VehicleBox
    light_type: LightType
    center: Point
    corners: tuple

    def __post_init__(self):
        object.__setattr__(self, "light_type", LightType(self.light_type))
        object.__setattr__(self, "center", Point(*self.center))
        corners = tuple(None if c is None else Point(*c) for c in self.corners)
        object.__setattr__(self, "corners", corners)
        if len(corners) != 4:
            raise InputError(f"expected 4 corners, got {len(corners)}")
        if not _finite(*self.center):
            raise InputError("center must be finite")
        if not any(c is not None for c in corners):
            raise InputError("at least one corner must be visible")
        for c in corners:
            if c is not None and not _finite(*c):
                raise InputError("corner coordinates must be finite")
        if not self.vehicle.contains(self.center):
            raise InputError(
                f"center {tuple(self.center)} lies outside vehicle box "
                f"{self.vehicle.as_list()}"
            )

    @property
    def visible(self) -> np.ndarray:
        return np.array([c is not None for c in self.corners])

    def check_image_bounds(self, width: int, height: int) -> None:
        if not self.vehicle.within(width, height):
            raise InputError(
                f"vehicle box {self.vehicle.as_list()} exceeds image {width}x{height}"
            )
        for name, c in zip(CORNER_NAMES, self.corners):
            if c is not None and not (0 <= c.x <= width and 0 <= c.y <= height):
                raise InputError(f"corner {name} {tuple(c)} outside image {width}x{height}")


@dataclass(frozen=True)
class CropSpec:
    size: int = 128
    mode: CropMode = CropMode.VEHICLE

    def __post_init__(self):
        object.__setattr__(self, "mode", CropMode(self.mode))
        if self.size <= 0 or self.size % 2:
            raise InputError(f"crop size must be even and positive, got {self.size}")

    @property
    def half_extent(self) -> int:
        return self.size // 2


class NormalizedTargets(NamedTuple):
    targets: np.ndarray  # (4, 2) in [-1, 1]
    mask: np.ndarray  # (4,) bool
    visible_count: int
    width: float
    height: float
    clamped: np.ndarray  # (4,) bool, corner fell outside the crop window


@dataclass
class CropSample:
    """A model-ready crop with normalized corner targets."""

    pixels: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    light_type: LightType
    crop_center: Point
    light_w: float
    light_h: float
    clamped: np.ndarray = field(default_factory=lambda: np.zeros(4, bool))
    mode: CropMode = CropMode.VEHICLE
    noise: tuple = (0.0, 0.0)

    @property
    def visible_count(self) -> int:
        return int(self.mask.sum())


def round_center(v: float) -> int:
    """Round half up; avoids banker's rounding on .5 centers."""
    return int(math.floor(v + 0.5))


def _paste_window(image, cx, cy, size, valid):
    """Copy the size x size window centered at integer (cx, cy).

    ``valid`` = (col0, row0, col1, row1) is the half-open range of scene pixel
    indices allowed to show through; all other output pixels stay zero.
    """
    h = size // 2
    out = np.zeros((size, size) + image.shape[2:], dtype=image.dtype)
    x0, y0 = cx - h, cy - h
    c0 = max(x0, valid[0])
    r0 = max(y0, valid[1])
    c1 = min(x0 + size, valid[2])
    r1 = min(y0 + size, valid[3])
    if c1 > c0 and r1 > r0:
        out[r0 - y0:r1 - y0, c0 - x0:c1 - x0] = image[r0:r1, c0:c1]
    return out


def _check_mode(spec: CropSpec, mode: CropMode) -> None:
    if spec.mode is not mode:
        raise InputError(f"crop spec mode is {spec.mode.value}, expected {mode.value}")


def scene_context_crop(image: np.ndarray, center: Point, spec: CropSpec) -> np.ndarray:
    """Crop from the full scene; out-of-image regions are black."""
    _check_mode(spec, CropMode.SCENE)
    height, width = image.shape[:2]
    if not (0 <= center[0] <= width and 0 <= center[1] <= height):
        raise InputError(f"center {tuple(center)} outside image {width}x{height}")
    cx, cy = round_center(center[0]), round_center(center[1])
    return _paste_window(image, cx, cy, spec.size, (0, 0, width, height))


def vehicle_pixel_range(vehicle: VehicleBox, width: int, height: int) -> tuple:
    """Half-open pixel index range whose pixel centers lie inside the box."""
    c0 = max(math.ceil(vehicle.x_min - 0.5), 0)
    r0 = max(math.ceil(vehicle.y_min - 0.5), 0)
    c1 = min(math.floor(vehicle.x_max - 0.5) + 1, width)
    r1 = min(math.floor(vehicle.y_max - 0.5) + 1, height)
    return c0, r0, c1, r1


def vehicle_only_crop(
    image: np.ndarray, vehicle: VehicleBox, center: Point, spec: CropSpec
) -> np.ndarray:
    """Crop from the vehicle region only; everything outside the box is black."""
    _check_mode(spec, CropMode.VEHICLE)
    if not vehicle.contains(Point(*center)):
        raise InputError(
            f"center {tuple(center)} outside vehicle box {vehicle.as_list()}"
        )
    height, width = image.shape[:2]
    cx, cy = round_center(center[0]), round_center(center[1])
    return _paste_window(image, cx, cy, spec.size, vehicle_pixel_range(vehicle, width, height))


def extract_crop(image, annotation: LightAnnotation, center: Point, spec: CropSpec):
    if spec.mode is CropMode.SCENE:
        return scene_context_crop(image, center, spec)
    return vehicle_only_crop(image, annotation.vehicle, center, spec)


def normalize_targets(
    annotation: LightAnnotation, crop_center: Point, spec: CropSpec
) -> NormalizedTargets:
    if not _finite(*crop_center):
        raise InputError("crop center must be finite")
    h = spec.half_extent
    targets = np.zeros((4, 2))
    mask = np.zeros(4, bool)
    clamped = np.zeros(4, bool)
    for j, c in enumerate(annotation.corners):
        if c is None:
            continue
        raw = np.array([(c.x - crop_center[0]) / h, (c.y - crop_center[1]) / h])
        targets[j] = np.clip(raw, -1.0, 1.0)
        clamped[j] = bool(np.any(np.abs(raw) > 1.0))
        mask[j] = True
    visible = int(mask.sum())
    if visible == 0:
        raise InputError("annotation has no visible corners")
    pts = np.array([c for c in annotation.corners if c is not None], dtype=float)
    width = float(pts[:, 0].max() - pts[:, 0].min())
    height = float(pts[:, 1].max() - pts[:, 1].min())
    return NormalizedTargets(targets, mask, visible, width, height, clamped)


def denormalize_prediction(pred, crop_center: Point, spec: CropSpec) -> np.ndarray:
    """Map eight normalized values back to four scene-frame points, shape (4, 2)."""
    p = np.asarray(pred, dtype=float).reshape(4, 2)
    return np.asarray(crop_center, dtype=float) + spec.half_extent * p


def make_sample(
    image: np.ndarray,
    annotation: LightAnnotation,
    spec: CropSpec,
    center: Optional[Point] = None,
    noise: Sequence[float] = (0.0, 0.0),
    scale: Optional[float] = 255.0,
) -> CropSample:
    """Crop around ``center`` (default: the annotated center) and attach targets.

    ``scale`` divides the pixel values; pass ``None`` to keep the raw dtype,
    which the training pool uses to hold crops as uint8.
    """
    center = annotation.center if center is None else Point(*center)
    pixels = extract_crop(image, annotation, center, spec)
    if scale is not None:
        pixels = pixels.astype(np.float32) / np.float32(scale)
    norm = normalize_targets(annotation, center, spec)
    return CropSample(
        pixels=pixels,
        targets=norm.targets,
        mask=norm.mask,
        light_type=annotation.light_type,
        crop_center=center,
        light_w=norm.width,
        light_h=norm.height,
        clamped=norm.clamped,
        mode=spec.mode,
        noise=(float(noise[0]), float(noise[1])),
    )


def flip_targets(targets: np.ndarray, mask: np.ndarray) -> tuple:
    """Mirror (..., 4, 2) targets and (..., 4) masks about the vertical axis."""
    perm = list(FLIP_PERMUTATION)
    t = targets[..., perm, :].copy()
    m = mask[..., perm].copy()
    # where() keeps masked entries at +0.0 rather than -0.0
    t[..., 0] = np.where(m, -t[..., 0], 0.0)
    return t, m


def flip_horizontal(sample: CropSample) -> CropSample:
    targets, mask = flip_targets(sample.targets, sample.mask)
    return replace(
        sample,
        pixels=sample.pixels[:, ::-1].copy(),
        targets=targets,
        mask=mask,
        clamped=sample.clamped[list(FLIP_PERMUTATION)].copy(),
        light_type=sample.light_type.mirror,
    )
