"""Acceptance gate: one test per primary criterion, each printing PASS/FAIL.

The learning and noise checks share one module-scoped training run on a
synthetic dataset (about 2,500 lights, 2,000 of them in the train split),
trained in both crop context modes. It takes several minutes on one core.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from helpers import (
    gradcheck_batch, layer_gradient_errors, make_annotation, random_image, report_criterion,
)
from oracles import ade_loop, box_iou_loop, crop_loop, loss_loop, pct_loop, pixel_in_box
from vlcorner import autograd as ag
from vlcorner.cli import main
from vlcorner.dataset import build_manifest
from vlcorner.evaluate import evaluate_split
from vlcorner.geometry import (
    LIGHT_TYPES, CropMode, CropSpec, VehicleBox, denormalize_prediction, flip_horizontal,
    make_sample, vehicle_only_crop,
)
from vlcorner.metrics import (
    BatchEval, average_distance_error, corner_residuals, detection_rate, iou, masked_corner_loss,
    percent_error,
)
from vlcorner.model import DEFAULT_MODEL
from vlcorner.noise import NoiseConfig, shift_center
from vlcorner.synth import SynthConfig, iter_scenes
from vlcorner.train import ModelRegistry, TrainConfig, light_index, train_light_model

N_TRAIN = 2000
N_TOTAL = 2500


def rel(a, b):
    return abs(a - b) / abs(b) if b else abs(a)


# -- 1. metric oracle equivalence ------------------------------------------------

def test_metric_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        mask = rng.random((n, 4)) < rng.uniform(0.2, 1.0)
        mask[np.arange(n), rng.integers(0, 4, n)] = True
        targets = np.where(mask[..., None], rng.uniform(-1, 1, (n, 4, 2)), 0.0)
        preds = rng.uniform(-1, 1, (n, 4, 2))
        width = rng.uniform(1, 60, n)
        height = rng.uniform(1, 60, n)
        width[rng.random(n) < 0.05] = 0.0  # a few degenerate boxes
        b = BatchEval(preds, targets, mask, width, height)
        args = (preds.tolist(), targets.tolist(), mask.tolist())
        got = (masked_corner_loss(b), average_distance_error(b), percent_error(b))
        want = (loss_loop(*args), ade_loop(*args), pct_loop(*args, width.tolist(), height.tolist()))
        for g, w in zip(got, want):
            if math.isnan(w):
                assert math.isnan(g)
                continue
            worst = max(worst, rel(g, w))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 10
    report_criterion("metric-oracle", ok, f"max rel err {worst:.2e} over 1000 batches in {elapsed:.2f} s")
    assert ok


# -- 2. mask semantics ---------------------------------------------------------------

def test_mask_semantics():
    rng = np.random.default_rng(7)
    worst_loss, worst_grad, n_invisible = 0.0, 0.0, 0
    for _ in range(10_000):
        mask = rng.random(4) < 0.5
        mask[rng.integers(4)] = True
        if mask.all():
            mask[(np.flatnonzero(mask)[0] + 1) % 4] = False
        targets = np.where(mask[:, None], rng.uniform(-1, 1, (4, 2)), 0.0)
        pred = rng.uniform(-1, 1, (4, 2))
        b = BatchEval(pred[None], targets[None], mask[None], [10.0], [10.0])
        contrib = corner_residuals(b)[0] / mask.sum()
        worst_loss = max(worst_loss, contrib[~mask].max())

        t = ag.Tensor(pred.reshape(1, 8), requires_grad=True)
        ag.masked_corner_loss(t, targets[None], mask[None]).backward()
        g = np.linalg.norm(t.grad.reshape(4, 2), axis=1)
        worst_grad = max(worst_grad, g[~mask].max())
        n_invisible += int((~mask).sum())
    ok = worst_loss < 1e-7 and worst_grad < 1e-7
    report_criterion("mask-semantics", ok,
                     f"{n_invisible} invisible corners: max loss share {worst_loss:.2e}, "
                     f"max grad {worst_grad:.2e}")
    assert ok


# -- 3. gradient check ---------------------------------------------------------------

def test_gradient_check():
    rng = np.random.default_rng(99)
    params = DEFAULT_MODEL.init_params([99, 0], np.float64)
    crops, targets, mask = gradcheck_batch(rng, n=2, size=128)
    start = time.perf_counter()
    errors = layer_gradient_errors(DEFAULT_MODEL, params, crops, targets, mask, rng,
                                   per_layer=64, step=1e-4)
    elapsed = time.perf_counter() - start
    counts_ok = all(len(e) >= 64 for e in errors.values())
    ok = counts_ok and all(e.max() < 1e-4 for e in errors.values()) and elapsed < 60
    detail = ", ".join(f"{k} {len(e)} coords max {e.max():.1e}" for k, e in errors.items())
    report_criterion("gradient-check", ok, f"{detail}; {elapsed:.1f} s")
    assert ok


# -- 4. geometry suite ---------------------------------------------------------------

def random_configuration(rng):
    height, width = int(rng.integers(150, 300)), int(rng.integers(150, 300))
    img = random_image(rng, height, width)
    x0, y0 = rng.uniform(-30, width * 0.6), rng.uniform(-30, height * 0.6)
    box = VehicleBox(x0, y0, x0 + rng.uniform(20, 200), y0 + rng.uniform(20, 160))
    cx = rng.uniform(max(box.x_min, 0), min(box.x_max, width))
    cy = rng.uniform(max(box.y_min, 0), min(box.y_max, height))
    corners = tuple(
        None if (j and rng.random() < 0.2) else (cx + rng.uniform(-40, 40), cy + rng.uniform(-40, 40))
        for j in range(4)
    )
    ann = make_annotation(corners=corners, box=box.as_list(), center=(cx, cy))
    return img, ann


def test_geometry_suite():
    rng = np.random.default_rng(31)
    spec = CropSpec(128, CropMode.VEHICLE)
    padding_ok, trip_worst, flips_ok, pixels = True, 0.0, True, 0
    for _ in range(100):
        img, ann = random_configuration(rng)
        crop = vehicle_only_crop(img, ann.vehicle, ann.center, spec)
        expect = crop_loop(img, ann.center, 128, ann.vehicle.as_list())
        cx0 = math.floor(ann.center.x + 0.5) - 64
        cy0 = math.floor(ann.center.y + 0.5) - 64
        for r in range(128):
            for c in range(128):
                pixels += 1
                if not pixel_in_box(cx0 + c, cy0 + r, ann.vehicle.as_list()) and crop[r, c].any():
                    padding_ok = False
        padding_ok &= crop.tolist() == expect

        s = make_sample(img, ann, spec)
        back = denormalize_prediction(s.targets, s.crop_center, spec)
        for j, c in enumerate(ann.corners):
            if c is not None and not s.clamped[j]:
                trip_worst = max(trip_worst, float(np.abs(back[j] - c).max()))
        ff = flip_horizontal(flip_horizontal(s))
        flips_ok &= (ff.pixels.tobytes() == s.pixels.tobytes()
                     and ff.targets.tobytes() == s.targets.tobytes()
                     and ff.mask.tobytes() == s.mask.tobytes()
                     and ff.light_type is s.light_type)
    ok = padding_ok and trip_worst < 1e-9 and flips_ok
    report_criterion("geometry", ok,
                     f"padding exact over {pixels} pixels: {padding_ok}; round trip max "
                     f"{trip_worst:.1e} px; flip involution bit-exact: {flips_ok}")
    assert ok


# -- 5. IoU and detection rate -------------------------------------------------------

# ground truth box [0, 10]^2; each prediction box with its IoU as an exact fraction
HAND_BOXES = [
    ((0, 0, 10, 10), Fraction(1)),
    ((1, 0, 11, 10), Fraction(9, 11)),
    ((2, 0, 12, 10), Fraction(8, 12)),
    ((3, 0, 13, 10), Fraction(7, 13)),
    ((4, 0, 14, 10), Fraction(6, 14)),
    ((5, 0, 15, 10), Fraction(5, 15)),
    ((6, 0, 16, 10), Fraction(4, 16)),  # exactly 0.25: not counted
    ((7, 0, 17, 10), Fraction(3, 17)),
    ((8, 0, 18, 10), Fraction(2, 18)),
    ((10, 0, 20, 10), Fraction(0)),
    ((0, 0, 5, 10), Fraction(1, 2)),  # exactly 0.5: not counted at 0.5
    ((0, 0, 10, 6), Fraction(6, 10)),
]


def box_corners(box):
    x0, y0, x1, y1 = box
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float) / 64


def test_iou_detection_rate():
    gt = (0, 0, 10, 10)
    for box, frac in HAND_BOXES:
        assert box_iou_loop(gt, box) == pytest.approx(float(frac), abs=1e-15)
    n = len(HAND_BOXES)
    batch = BatchEval(
        np.stack([box_corners(b) for b, _ in HAND_BOXES]),
        np.stack([box_corners(gt)] * n),
        np.ones((n, 4), bool), np.full(n, 10.0), np.full(n, 10.0),
    )
    rates = detection_rate(batch, (0.25, 0.5))
    want25 = Fraction(sum(f > Fraction(1, 4) for _, f in HAND_BOXES), n)
    want50 = Fraction(sum(f > Fraction(1, 2) for _, f in HAND_BOXES), n)
    shifted = iou((0, 0, 10, 10), (5, 5, 15, 15))
    ok = (rates[0.25] == float(want25) == 8 / 12 and rates[0.5] == float(want50) == 5 / 12
          and abs(shifted - 1 / 7) < 1e-12)
    report_criterion("iou-detection", ok,
                     f"rate@0.25 {rates[0.25]:.4f} (want {want25}), rate@0.5 {rates[0.5]:.4f} "
                     f"(want {want50}), shifted-square IoU err {abs(shifted - 1 / 7):.1e}")
    assert ok


# -- 6/7. learning check and noise robustness ----------------------------------------

class LearningRun:
    pass


def synthetic_lights(n_lights, seed):
    """Scenes from the default generator (q = 0.15) until n_lights exist."""
    cfg = SynthConfig(n_scenes=10_000, occlusion=0.15, seed=seed)
    images, anns = {}, []
    for name, img, scene_anns in iter_scenes(cfg):
        images[name] = img
        anns.extend(scene_anns)
        if len(anns) >= n_lights:
            break
    return images, anns[:n_lights]


@pytest.fixture(scope="module")
def learning_run():
    start = time.perf_counter()
    run = LearningRun()
    images, anns = synthetic_lights(N_TOTAL, seed=2025)
    manifest = build_manifest(anns, N_TRAIN / len(anns), 0, NoiseConfig(seed=1234))
    train = [anns[i] for i in manifest.train]
    run.n_train, run.n_test = len(manifest.train), len(manifest.test)
    run.train_counts = {lt.value: sum(a.light_type is lt for a in train) for lt in LIGHT_TYPES}
    cfg = TrainConfig()  # 25 epochs, noise off
    run.reports = {}
    for mode in (CropMode.VEHICLE, CropMode.SCENE):
        spec = CropSpec(128, mode)
        reg = ModelRegistry({lt: train_light_model(train, images, lt, cfg, spec).params
                             for lt in LIGHT_TYPES})
        run.reports[mode.value] = {
            "clean": evaluate_split(reg, anns, manifest.test, images, spec),
            "noisy": evaluate_split(reg, anns, manifest.test, images, spec, manifest.eps),
        }
    spec = CropSpec(128, CropMode.VEHICLE)
    untrained = ModelRegistry({lt: DEFAULT_MODEL.init_params([cfg.seed, light_index(lt)])
                               for lt in LIGHT_TYPES})
    run.untrained = evaluate_split(untrained, anns, manifest.test, images, spec)
    run.elapsed = time.perf_counter() - start
    run.anns, run.images, run.manifest = anns, images, manifest
    return run


def test_learning_check(learning_run):
    r = learning_run
    vehicle = r.reports["vehicle"]["clean"]["weighted"]["ade"]
    scene = r.reports["scene"]["clean"]["weighted"]["ade"]
    untrained = r.untrained["weighted"]["ade"]
    balanced = max(r.train_counts.values()) - min(r.train_counts.values()) <= 2
    ok = (r.n_train == N_TRAIN and balanced and vehicle < 8 and vehicle < untrained / 3
          and vehicle <= scene and r.elapsed <= 20 * 60)
    report_criterion("learning", ok,
                     f"train {r.n_train} {r.train_counts}, test {r.n_test}; weighted ADE vehicle "
                     f"{vehicle:.2f} px, scene {scene:.2f} px, untrained {untrained:.2f} px; "
                     f"{r.elapsed / 60:.1f} min")
    assert ok


def test_noise_robustness(learning_run):
    r = learning_run
    clean = r.reports["vehicle"]["clean"]["weighted"]["ade"]
    noisy = r.reports["vehicle"]["noisy"]["weighted"]["ade"]
    ratio = noisy / clean
    ratio_ok = math.isfinite(ratio) and 1.0 < ratio < 3.0

    # shift consistency on a dyadic grid, where every sum is exact in float64
    rng = np.random.default_rng(5)
    spec = CropSpec()
    img = random_image(rng, 256, 256)
    exact = True
    for _ in range(2000):
        c = rng.integers(80 * 64, 176 * 64, 2) / 64
        corners = [tuple(c + rng.integers(-40 * 64, 40 * 64, 2) / 64) for _ in range(4)]
        ann = make_annotation(corners=corners, box=(0, 0, 256, 256), center=tuple(c))
        eps = rng.integers(-16 * 64, 16 * 64, 2) / 64
        base = make_sample(img, ann, spec)
        moved = make_sample(img, ann, spec, center=shift_center(ann, eps))
        keep = ~(base.clamped | moved.clamped)
        exact &= bool(np.array_equal(moved.targets[keep] - base.targets[keep],
                                     np.broadcast_to(-eps / 64, (int(keep.sum()), 2))))
    # and on the frozen-noise test set itself, to float rounding
    worst = 0.0
    for i in r.manifest.test:
        a = r.anns[i]
        eps = np.array(r.manifest.eps(i))
        shifted = shift_center(a, eps)
        if not np.allclose(np.array(shifted) - np.array(a.center), eps, rtol=0, atol=1e-9):
            continue  # clamped to the vehicle box
        base = make_sample(r.images[a.image], a, spec)
        moved = make_sample(r.images[a.image], a, spec, center=shifted)
        keep = base.mask & ~(base.clamped | moved.clamped)
        d = moved.targets[keep] - base.targets[keep] + eps / 64
        if d.size:
            worst = max(worst, float(np.abs(d).max()))
    ok = ratio_ok and exact and worst < 1e-12
    report_criterion("noise-robustness", ok,
                     f"noisy/clean ADE {noisy:.2f}/{clean:.2f} = {ratio:.3f}; shift consistency "
                     f"exact on dyadic grid: {exact}, max dev on test set {worst:.1e}")
    assert ok


# -- 8. determinism ------------------------------------------------------------------

def test_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("synth.n_scenes = 12\nsynth.seed = 8\ntrain.epochs = 3\ntrain.swa_start_epoch = 2\n")
    assert main(["gen-synth", "--config", str(cfg), "--out", str(tmp_path / "data")]) == 0
    reports = []
    for k in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--seed", "4", "--data", str(tmp_path / "data"),
                     "--out", str(tmp_path / f"run_{k}")]) == 0
        assert main(["eval", "--config", str(cfg), "--data", str(tmp_path / "data"), "--checkpoints",
                     str(tmp_path / f"run_{k}"), "--out", str(tmp_path / f"eval_{k}")]) == 0
        reports.append((tmp_path / f"eval_{k}" / "report.json").read_bytes())
    ok = reports[0] == reports[1]
    report_criterion("determinism", ok, f"report.json byte-identical across runs ({len(reports[0])} bytes)")
    assert ok
