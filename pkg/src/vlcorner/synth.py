"""Procedural traffic-scene generator with exact light-corner ground truth.

Each scene has a cluttered background and one to a few flat-colored
"vehicles" seen from the front or the rear. Every vehicle carries a left and
a right light, drawn as filled convex quadrilaterals. Occluders painted over
a corner make that corner invisible in the annotation.

Vehicles alternate rear/front by their global index, so the four light types
stay balanced to within one vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from .errors import ConfigError
from .geometry import LightAnnotation, LightType, Point, VehicleBox

HUES = {
    "red": ((200, 255), (10, 60), (10, 50)),
    "amber": ((235, 255), (140, 190), (0, 40)),
    "white": ((225, 255), (225, 255), (195, 240)),
}
VEHICLE_W = (150, 250)
VEHICLE_H = (100, 160)
MIN_CORNER_ANGLE = math.radians(60)


@dataclass(frozen=True)
class SynthConfig:
    width: int = 640
    height: int = 480
    n_scenes: int = 100
    vehicles_min: int = 1
    vehicles_max: int = 3
    light_min: float = 14.0
    light_max: float = 40.0
    irregularity: float = 0.4
    occlusion: float = 0.15
    hues: tuple = ("red", "amber", "white")
    clutter: float = 0.5
    front_right_keep: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("synth scene size must be positive")
        if self.n_scenes < 0:
            raise ConfigError("synth.n_scenes must be >= 0")
        if not 1 <= self.vehicles_min <= self.vehicles_max:
            raise ConfigError("need 1 <= synth.vehicles_min <= synth.vehicles_max")
        if not 0 < self.light_min <= self.light_max:
            raise ConfigError("need 0 < synth.light_min <= synth.light_max")
        if not 0.0 <= self.irregularity <= 1.0:
            raise ConfigError("synth.irregularity must be in [0, 1]")
        if not 0.0 <= self.occlusion < 1.0:
            # q = 1 would leave every light without a visible corner
            raise ConfigError("synth.occlusion must be in [0, 1)")
        if not 0.0 <= self.clutter:
            raise ConfigError("synth.clutter must be >= 0")
        if not 0.0 <= self.front_right_keep <= 1.0:
            raise ConfigError("synth.front_right_keep must be in [0, 1]")
        unknown = set(self.hues) - set(HUES)
        if unknown or not self.hues:
            raise ConfigError(f"synth.hues must be a non-empty subset of {sorted(HUES)}")
        # two lights side by side plus insets must fit the narrowest vehicle
        if 2 * self.light_max * 1.3 + 12 > VEHICLE_W[0] or 0.8 * self.light_max * 1.3 > VEHICLE_H[0] * 0.5:
            raise ConfigError(
                f"synth.light_max={self.light_max} does not fit a vehicle of "
                f"{VEHICLE_W[0]}x{VEHICLE_H[0]} px"
            )
        if self.width < VEHICLE_W[1] + 2 or self.height < VEHICLE_H[1] + 2:
            raise ConfigError(
                f"scene {self.width}x{self.height} is smaller than the largest vehicle "
                f"{VEHICLE_W[1]}x{VEHICLE_H[1]}"
            )


def quad_mask(corners, x0: int, y0: int, width: int, height: int) -> np.ndarray:
    """Pixels of the given window whose centers lie in the convex quad.

    Corners are (TL, TR, BR, BL), i.e. clockwise with y pointing down.
    """
    xs = np.arange(x0, x0 + width) + 0.5
    ys = np.arange(y0, y0 + height) + 0.5
    px, py = np.meshgrid(xs, ys)
    inside = np.ones(px.shape, bool)
    pts = np.asarray(corners, dtype=float)
    for k in range(4):
        ax, ay = pts[k]
        bx, by = pts[(k + 1) % 4]
        inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0
    return inside


def light_raster(corners, x0: int, y0: int, width: int, height: int) -> np.ndarray:
    """``quad_mask`` plus the pixel holding each corner.

    Center sampling alone can leave a sharp tip unpainted for more than a
    pixel; painting the corner pixels keeps every corner within 1 px of ink.
    """
    mask = quad_mask(corners, x0, y0, width, height)
    for cx, cy in np.asarray(corners, dtype=float):
        c, r = int(math.floor(cx)) - x0, int(math.floor(cy)) - y0
        if 0 <= r < height and 0 <= c < width:
            mask[r, c] = True
    return mask


def _corner_angles(pts: np.ndarray) -> np.ndarray:
    out = []
    for k in range(4):
        a = pts[k - 1] - pts[k]
        b = pts[(k + 1) % 4] - pts[k]
        cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        out.append(math.acos(max(-1.0, min(1.0, cos))))
    return np.array(out)


def is_convex(pts) -> bool:
    pts = np.asarray(pts, dtype=float)
    for k in range(4):
        e1 = pts[(k + 1) % 4] - pts[k]
        e2 = pts[(k + 2) % 4] - pts[(k + 1) % 4]
        if e1[0] * e2[1] - e1[1] * e2[0] <= 0:
            return False
    return True


def light_shape(rng, w, h, irregularity, front: bool) -> np.ndarray:
    """Corner offsets (TL, TR, BR, BL) of a light whose outer side is on the left.

    ``irregularity`` scales both the type-specific slant and the random
    jitter, so 0 gives an axis-aligned w x h rectangle.
    """
    base = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=float)
    s = irregularity
    if s == 0:
        return base
    template = np.zeros((4, 2))
    if front:
        template[0, 1] = -0.35 * h  # outer top raised
        template[2, 0] = -0.25 * w  # inner bottom pulled in
    else:
        template[1, 1] = 0.3 * h  # inner top lowered
        template[3, 0] = -0.1 * w  # outer bottom pushed out
    for _ in range(100):
        jitter = rng.uniform(-1, 1, size=(4, 2)) * 0.15 * min(w, h)
        pts = base + s * (template + jitter)
        if is_convex(pts) and _corner_angles(pts).min() >= MIN_CORNER_ANGLE:
            return pts
    return base + s * template


def _fill(img, mask, x0, y0, color):
    mh, mw = mask.shape
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + mw, img.shape[1]), min(y0 + mh, img.shape[0])
    if cx1 <= cx0 or cy1 <= cy0:
        return
    region = img[cy0:cy1, cx0:cx1]
    region[mask[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]] = color


def _color(rng, hue):
    return np.array([rng.integers(lo, hi + 1) for lo, hi in HUES[hue]], dtype=np.uint8)


def _background(rng, cfg: SynthConfig) -> np.ndarray:
    h, w = cfg.height, cfg.width
    top = rng.uniform(120, 200, size=3)
    bottom = rng.uniform(50, 110, size=3)
    t = np.linspace(0, 1, h)[:, None, None]
    img = (top * (1 - t) + bottom * t) * np.ones((1, w, 1))
    img = img.astype(np.uint8)
    n_rects = int(round(cfg.clutter * 60))
    for _ in range(n_rects):
        rw, rh = rng.integers(10, 120), rng.integers(10, 90)
        x, y = rng.integers(0, w - 1), rng.integers(0, h - 1)
        img[y:y + rh, x:x + rw] = rng.integers(0, 256, size=3)
    n_blobs = int(round(cfg.clutter * 30))
    hues = list(HUES)
    for _ in range(n_blobs):
        bw, bh = rng.integers(6, 30), rng.integers(4, 20)
        x, y = rng.integers(0, w - 1), rng.integers(0, h - 1)
        img[y:y + bh, x:x + bw] = _color(rng, hues[rng.integers(len(hues))])
    return img


def _place_vehicles(rng, cfg: SynthConfig, count: int) -> List[Tuple[int, int, int, int]]:
    boxes = []
    for _ in range(count):
        for _attempt in range(50):
            vw = int(rng.integers(VEHICLE_W[0], VEHICLE_W[1] + 1))
            vh = int(rng.integers(VEHICLE_H[0], VEHICLE_H[1] + 1))
            x0 = int(rng.integers(0, cfg.width - vw))
            y0 = int(rng.integers(0, cfg.height - vh))
            box = (x0, y0, x0 + vw, y0 + vh)
            if all(box[2] <= b[0] or b[2] <= box[0] or box[3] <= b[1] or b[3] <= box[1] for b in boxes):
                boxes.append(box)
                break
    return boxes


def _draw_vehicle(img, rng, box):
    x0, y0, x1, y1 = box
    vw, vh = x1 - x0, y1 - y0
    body = rng.integers(70, 190, size=3)
    img[y0:y1, x0:x1] = body
    wx0, wx1 = x0 + int(0.18 * vw), x1 - int(0.18 * vw)
    img[y0 + int(0.08 * vh):y0 + int(0.32 * vh), wx0:wx1] = (body * 0.35).astype(np.uint8)
    img[y0 + int(0.8 * vh):y0 + int(0.9 * vh), x0 + 4:x1 - 4] = (body * 0.6).astype(np.uint8)


def _vehicle_lights(rng, cfg: SynthConfig, box, rear: bool):
    """Yield (light_type, corners) for the left-image and right-image lights."""
    x0, y0, x1, y1 = box
    vh = y1 - y0
    w = rng.uniform(cfg.light_min, cfg.light_max)
    h = max(6.0, w * rng.uniform(0.45, 0.8))
    inset = rng.uniform(4, 10)
    cy = y0 + vh * rng.uniform(0.45, 0.68)
    # image-left light: outer side left; image-right light: mirror of that
    left_type, right_type = (LightType.RL, LightType.RR) if rear else (LightType.FR, LightType.FL)
    for side, ltype in (("left", left_type), ("right", right_type)):
        shape = light_shape(rng, w, h, cfg.irregularity, front=not rear)
        shape[:, 1] += cy - h / 2
        if side == "left":
            pts = shape + [x0 + inset, 0]
            shift = x0 + 1.0 - pts[:, 0].min()
        else:
            mirrored = shape[[1, 0, 3, 2]].copy()
            mirrored[:, 0] = -mirrored[:, 0]
            pts = mirrored + [x1 - inset, 0]
            shift = min(0.0, x1 - 1.0 - pts[:, 0].max())
        if side == "left":
            pts[:, 0] += max(0.0, shift)
        else:
            pts[:, 0] += shift
        pts[:, 1] += max(0.0, y0 + 1.0 - pts[:, 1].min()) + min(0.0, y1 - 1.0 - pts[:, 1].max())
        yield ltype, pts


def _occlude(rng, q):
    if q <= 0:
        return np.zeros(4, bool)
    while True:
        flags = rng.random(4) < q
        if not flags.all():
            return flags


def render_scene(cfg: SynthConfig, scene_index: int, vehicle_offset: int):
    """Render one scene; returns (image, annotations, vehicles_used)."""
    rng = np.random.default_rng([cfg.seed, scene_index])
    name = scene_name(scene_index)
    img = _background(rng, cfg)
    count = int(rng.integers(cfg.vehicles_min, cfg.vehicles_max + 1))
    boxes = _place_vehicles(rng, cfg, count)
    front_hues = [h for h in cfg.hues if h == "white"] or list(cfg.hues)
    rear_hues = [h for h in cfg.hues if h != "white"] or list(cfg.hues)
    annotations = []
    for k, box in enumerate(boxes):
        rear = (vehicle_offset + k) % 2 == 0
        _draw_vehicle(img, rng, box)
        hues = rear_hues if rear else front_hues
        color = _color(rng, hues[rng.integers(len(hues))])
        vbox = VehicleBox(*map(float, box))
        for ltype, pts in _vehicle_lights(rng, cfg, box, rear):
            keep = rng.random()
            bx0, by0 = int(math.floor(pts[:, 0].min())), int(math.floor(pts[:, 1].min()))
            bx1, by1 = int(math.floor(pts[:, 0].max())) + 1, int(math.floor(pts[:, 1].max())) + 1
            _fill(img, light_raster(pts, bx0, by0, bx1 - bx0, by1 - by0), bx0, by0, color)
            occluded = _occlude(rng, cfg.occlusion)
            for j in np.flatnonzero(occluded):
                others = np.delete(pts, j, axis=0)
                reach = np.linalg.norm(others - pts[j], axis=1).min()
                r = reach * rng.uniform(0.25, 0.4)
                cx, cy = pts[j]
                ox0, oy0 = int(math.floor(cx - r)), int(math.floor(cy - r))
                size = int(math.ceil(2 * r)) + 1
                ys, xs = np.mgrid[oy0:oy0 + size, ox0:ox0 + size] + 0.5
                disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
                _fill(img, disk, ox0, oy0, rng.integers(20, 70, size=3))
            if ltype is LightType.FR and keep >= cfg.front_right_keep:
                continue
            corners = tuple(None if occluded[j] else Point(*map(float, pts[j])) for j in range(4))
            center = Point(*map(float, pts.mean(axis=0)))
            annotations.append(LightAnnotation(name, vbox, ltype, center, corners))
    noise = rng.normal(0, 3.0, size=img.shape)
    img = np.clip(img + noise, 0, 255).astype(np.uint8)
    return img, annotations, len(boxes)


def scene_name(index: int) -> str:
    return f"scene_{index:05d}.png"


def iter_scenes(cfg: SynthConfig) -> Iterator[tuple]:
    """Yield (image_name, image, annotations) scene by scene."""
    cfg.validate()
    offset = 0
    for i in range(cfg.n_scenes):
        img, anns, used = render_scene(cfg, i, offset)
        offset += used
        yield scene_name(i), img, anns


def generate_synthetic(cfg: SynthConfig):
    """Materialize every scene: returns ({name: image}, [annotations])."""
    images, annotations = {}, []
    for name, img, anns in iter_scenes(cfg):
        images[name] = img
        annotations.extend(anns)
    return images, annotations
