"""Annotation files, raster I/O, stratified splitting and dataset manifests.

Annotation files are JSON Lines, one light per line::

    {"image": "scene_00003.png", "vehicle_box": [x1, y1, x2, y2],
     "light_type": "FL", "center": [x, y],
     "corners": [[x, y] | null, ...]}     # TL, TR, BR, BL

``null`` marks an invisible corner. Image paths are relative to the
annotation file's directory.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from PIL import Image

from .errors import InputError, StorageError, ValidationError
from .geometry import LIGHT_TYPES, LightAnnotation, LightType, Point, VehicleBox
from .noise import NoiseConfig, frozen_noise

ANNOTATIONS_FILE = "annotations.jsonl"
MANIFEST_FILE = "manifest.json"
RECORD_KEYS = ("image", "vehicle_box", "light_type", "center", "corners")


def read_image(path) -> np.ndarray:
    """8-bit RGB raster (PNG, PPM, ...) as a uint8 (H, W, 3) array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise StorageError(f"cannot read image {path}: {exc}") from exc


def write_image(path, pixels: np.ndarray) -> None:
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    try:
        Image.fromarray(arr).save(path)
    except OSError as exc:
        raise StorageError(f"cannot write image {path}: {exc}") from exc


def image_size(path) -> tuple:
    try:
        with Image.open(path) as im:
            return im.size
    except OSError as exc:
        raise StorageError(f"cannot read image {path}: {exc}") from exc


class ImageStore:
    """Lazy, caching name -> uint8 image mapping rooted at a directory."""

    def __init__(self, root, cache: bool = True):
        self.root = Path(root)
        self.cache = cache
        self._images: Dict[str, np.ndarray] = {}

    def __getitem__(self, name: str) -> np.ndarray:
        img = self._images.get(name)
        if img is None:
            img = read_image(self.root / name)
            if self.cache:
                self._images[name] = img
        return img

    def __contains__(self, name: str) -> bool:
        return name in self._images or (self.root / name).exists()


def annotation_to_record(a: LightAnnotation) -> dict:
    return {
        "image": a.image,
        "vehicle_box": a.vehicle.as_list(),
        "light_type": a.light_type.value,
        "center": [a.center.x, a.center.y],
        "corners": [None if c is None else [c.x, c.y] for c in a.corners],
    }


def _pair(value, what):
    if not (isinstance(value, list) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise InputError(f"{what} must be a list of two numbers, got {value!r}")
    return Point(float(value[0]), float(value[1]))


def record_to_annotation(rec) -> LightAnnotation:
    if not isinstance(rec, dict):
        raise InputError("record must be a JSON object")
    missing = [k for k in RECORD_KEYS if k not in rec]
    if missing:
        raise InputError(f"missing keys {missing}")
    extra = sorted(set(rec) - set(RECORD_KEYS))
    if extra:
        raise InputError(f"unknown keys {extra}")
    if not isinstance(rec["image"], str) or not rec["image"]:
        raise InputError("image must be a non-empty string")
    box = rec["vehicle_box"]
    if not (isinstance(box, list) and len(box) == 4
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in box)):
        raise InputError(f"vehicle_box must be four numbers, got {box!r}")
    try:
        light_type = LightType(rec["light_type"])
    except ValueError:
        raise InputError(f"light_type must be one of FL/FR/RL/RR, got {rec['light_type']!r}") from None
    corners = rec["corners"]
    if not (isinstance(corners, list) and len(corners) == 4):
        raise InputError("corners must be a list of four entries")
    return LightAnnotation(
        image=rec["image"],
        vehicle=VehicleBox(*map(float, box)),
        light_type=light_type,
        center=_pair(rec["center"], "center"),
        corners=tuple(None if c is None else _pair(c, "corner") for c in corners),
    )


def dumps_annotation(a: LightAnnotation) -> str:
    return json.dumps(annotation_to_record(a), separators=(", ", ": "))


def load_annotations(path, check_images: bool = False) -> List[LightAnnotation]:
    """Parse and validate a JSON-Lines annotation file.

    Blank lines are skipped. With ``check_images`` every referenced image
    must exist next to the file and contain the vehicle box and corners.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read annotations {path}: {exc}") from exc
    out, sizes = [], {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            a = record_to_annotation(json.loads(line))
            if check_images:
                if a.image not in sizes:
                    img_path = path.parent / a.image
                    if not img_path.exists():
                        raise InputError(f"image {a.image} not found")
                    sizes[a.image] = image_size(img_path)
                a.check_image_bounds(*sizes[a.image])
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON: {exc.msg}", line=lineno) from None
        except (InputError, StorageError) as exc:
            raise ValidationError(str(exc), line=lineno) from None
        out.append(a)
    return out


def save_annotations(path, annotations: Sequence[LightAnnotation]) -> None:
    text = "".join(dumps_annotation(a) + "\n" for a in annotations)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise StorageError(f"cannot write annotations {path}: {exc}") from exc


def split_indices(annotations: Sequence[LightAnnotation], train_fraction: float, seed: int):
    """Stratified (train, test) index lists, each sorted ascending.

    The global train count is ``round(N * train_fraction)`` over the
    splittable records; per-type counts use largest-remainder allocation so
    each type's share is within one record of the global share. Types with
    fewer than two records go entirely to train, with a warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    by_type = {t: [i for i, a in enumerate(annotations) if a.light_type is t] for t in LIGHT_TYPES}
    train, test = [], []
    splittable = {}
    for t, idx in by_type.items():
        order = [idx[k] for k in rng.permutation(len(idx))]
        if len(idx) < 2:
            if idx:
                warnings.warn(f"light type {t.value} has {len(idx)} record(s); placed in train")
            train.extend(order)
        else:
            splittable[t] = order
    total = sum(len(v) for v in splittable.values())
    target = int(math.floor(total * train_fraction + 0.5))
    quota = {t: len(v) * train_fraction for t, v in splittable.items()}
    counts = {t: int(math.floor(q)) for t, q in quota.items()}
    by_remainder = sorted(splittable, key=lambda t: (-(quota[t] - counts[t]), LIGHT_TYPES.index(t)))
    for t in by_remainder[:max(0, target - sum(counts.values()))]:
        counts[t] += 1
    for t, order in splittable.items():
        # keep at least one record on each side
        k = min(max(counts[t], 1), len(order) - 1)
        train.extend(order[:k])
        test.extend(order[k:])
    return sorted(train), sorted(test)


def split(annotations: Sequence[LightAnnotation], train_fraction: float, seed: int):
    tr, te = split_indices(annotations, train_fraction, seed)
    return [annotations[i] for i in tr], [annotations[i] for i in te]


@dataclass
class Manifest:
    """Split membership plus the frozen evaluation noise for the test split."""

    annotations: str = ANNOTATIONS_FILE
    train: List[int] = field(default_factory=list)
    test: List[int] = field(default_factory=list)
    train_fraction: float = 0.8
    split_seed: int = 0
    noise: dict = field(default_factory=lambda: asdict(NoiseConfig()))
    # test index (as str) -> [eps_x, eps_y]
    frozen_noise: Dict[str, list] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        except OSError as exc:
            raise StorageError(f"cannot write manifest {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Manifest":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise StorageError(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed manifest: {exc}") from None
        return cls(**data)

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(**self.noise)

    def eps(self, index: int) -> tuple:
        return tuple(self.frozen_noise[str(index)])


def build_manifest(annotations: Sequence[LightAnnotation], train_fraction: float,
                   split_seed: int, eval_noise: NoiseConfig,
                   annotations_name: str = ANNOTATIONS_FILE) -> Manifest:
    train, test = split_indices(annotations, train_fraction, split_seed)
    return Manifest(
        annotations=annotations_name,
        train=train,
        test=test,
        train_fraction=train_fraction,
        split_seed=split_seed,
        noise=asdict(eval_noise),
        frozen_noise={str(i): list(frozen_noise(eval_noise, i)) for i in test},
        counts=count_by_type(annotations),
    )


def count_by_type(annotations: Sequence[LightAnnotation]) -> Dict[str, int]:
    c = Counter(a.light_type.value for a in annotations)
    return {t.value: c.get(t.value, 0) for t in LIGHT_TYPES}


@dataclass
class Dataset:
    root: Path
    annotations: List[LightAnnotation]
    manifest: Manifest
    images: ImageStore

    @classmethod
    def open(cls, root, cache_images: bool = True, check_images: bool = False) -> "Dataset":
        root = Path(root)
        manifest_path = root / MANIFEST_FILE
        if not manifest_path.exists():
            raise StorageError(f"no {MANIFEST_FILE} in {root}; run gen-synth or prepare first")
        manifest = Manifest.load(manifest_path)
        anns = load_annotations(root / manifest.annotations, check_images=check_images)
        n = len(anns)
        if any(i >= n for i in manifest.train + manifest.test):
            raise InputError(f"manifest indices exceed the {n} annotations")
        return cls(root, anns, manifest, ImageStore(root, cache=cache_images))

    def subset(self, name: str) -> List[LightAnnotation]:
        return [self.annotations[i] for i in getattr(self.manifest, name)]
