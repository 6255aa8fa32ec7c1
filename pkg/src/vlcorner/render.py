"""Qualitative overlays: crop, blue center dot, green ground truth, red prediction."""

from __future__ import annotations

import numpy as np

from .geometry import CropSample, round_center
from .plotting import PNG_META, plt

GT_COLOR = "#00c000"
PRED_COLOR = "#ff0000"
CENTER_COLOR = "#0040ff"


def overlay_paths(sample: CropSample, prediction) -> dict:
    """Polylines in crop pixel coordinates for ground truth and prediction.

    Only corners visible in the ground truth are drawn, in TL, TR, BR, BL
    order; the path is closed when all four are visible.
    """
    h = sample.pixels.shape[1] / 2.0
    # the window sits on the rounded center; shift by the sub-pixel remainder
    origin = np.array([h + sample.crop_center[0] - round_center(sample.crop_center[0]),
                       h + sample.crop_center[1] - round_center(sample.crop_center[1])])
    m = sample.mask
    closed = bool(m.all())
    gt = origin + h * sample.targets[m]
    pred = origin + h * np.asarray(prediction, dtype=float).reshape(4, 2)[m]
    return {"gt": gt, "pred": pred, "closed": closed, "center": tuple(origin)}


def render_overlay(sample: CropSample, prediction, path) -> None:
    """Write an S x S PNG of the crop with both corner outlines."""
    size = sample.pixels.shape[0]
    paths = overlay_paths(sample, prediction)
    pixels = sample.pixels
    if pixels.dtype == np.uint8:
        pixels = pixels.astype(np.float32) / 255.0
    dpi = 100
    fig = plt.figure(figsize=(size / dpi, size / dpi), dpi=dpi)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(pixels, extent=(0, size, size, 0), interpolation="nearest")
    for key, color in (("gt", GT_COLOR), ("pred", PRED_COLOR)):
        pts = paths[key]
        if paths["closed"]:
            pts = np.vstack([pts, pts[:1]])
        if len(pts) == 1:
            ax.plot(pts[:, 0], pts[:, 1], "x", color=color, ms=4)
        else:
            ax.plot(pts[:, 0], pts[:, 1], "-", color=color, lw=1.2)
    cx, cy = paths["center"]
    ax.plot([cx], [cy], "o", color=CENTER_COLOR, ms=3)
    ax.set_xlim(0, size)
    ax.set_ylim(size, 0)
    ax.axis("off")
    fig.savefig(path, dpi=dpi, metadata=PNG_META)
    plt.close(fig)
