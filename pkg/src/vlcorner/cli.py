"""Command-line entry point: ``vlcorner <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config, serialize_config
from .dataset import (
    ANNOTATIONS_FILE, MANIFEST_FILE, Dataset, build_manifest,
    load_annotations, read_image, save_annotations, write_image,
)
from .errors import ConfigError, InputError, StorageError, VLCornerError
from .evaluate import build_samples, evaluate_dataset, predict_samples
from .geometry import (
    LIGHT_TYPES, CropMode, CropSpec, LightAnnotation, LightType, Point, VehicleBox,
    denormalize_prediction, make_sample,
)
from .model import DEFAULT_MODEL
from .synth import iter_scenes
from .train import ModelRegistry, train_light_model

log = logging.getLogger("vlcorner")

CHECKPOINT_DIR = "checkpoints"
CHECKPOINT_SUFFIX = ".vlck"
LOSS_CSV = "loss_trace.csv"
LOSS_FIGURE = "loss_curves.png"
RUN_CONFIG = "config.txt"


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    changes = {}
    if getattr(args, "data", None):
        changes["data_dir"] = str(args.data)
    if getattr(args, "context", None):
        changes["crop_mode"] = args.context
    if getattr(args, "augment", False):
        changes["train_augment"] = True
    if getattr(args, "train_noise", False):
        changes["train_noise"] = True
    return cfg.override(**changes)


def _prepare_out(out, force: bool, marker: str) -> Path:
    out = Path(out)
    if (out / marker).exists() and not force:
        raise StorageError(f"{out / marker} exists; pass --force to overwrite")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create {out}: {exc}") from exc
    return out


def _data_dir(cfg: ExperimentConfig) -> Path:
    if not cfg.data_dir:
        raise ConfigError("no dataset: set data.dir in the config or pass --data")
    return Path(cfg.data_dir)


def _checkpoint_dir(path) -> Path:
    path = Path(path)
    return path / CHECKPOINT_DIR if (path / CHECKPOINT_DIR).is_dir() else path


def load_registry(path):
    """Registry plus per-type checkpoint headers from a checkpoint directory."""
    ckdir = _checkpoint_dir(path)
    if not ckdir.is_dir():
        raise StorageError(f"checkpoint directory {ckdir} not found")
    registry, headers = ModelRegistry(), {}
    for lt in LIGHT_TYPES:
        f = ckdir / f"{lt.value}{CHECKPOINT_SUFFIX}"
        if f.exists():
            params, stored, header, _ = load_checkpoint(f)
            if stored is not lt:
                raise StorageError(f"{f} holds a {stored.value} model")
            registry[lt] = params
            headers[lt.value] = header
    if not len(registry):
        raise StorageError(f"no checkpoints in {ckdir}")
    return registry, headers


def _checkpoint_mode(headers: dict):
    modes = {h["meta"].get("crop_mode") for h in headers.values()}
    sizes = {h["meta"].get("crop_size") for h in headers.values()}
    if len(modes) > 1 or len(sizes) > 1:
        raise ConfigError(f"checkpoints disagree on crop settings: modes={modes} sizes={sizes}")
    return modes.pop(), sizes.pop()


def _eval_spec(args, cfg: ExperimentConfig, headers: dict) -> CropSpec:
    mode, size = _checkpoint_mode(headers)
    if getattr(args, "context", None):
        mode = args.context
    return CropSpec(size or cfg.crop_size, CropMode(mode or cfg.crop_mode))


def cmd_gen_synth(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.override(synth_seed=args.seed)
    synth = cfg.synth_config()
    out = _prepare_out(args.out, args.force, MANIFEST_FILE)
    annotations = []
    for name, img, anns in iter_scenes(synth):
        write_image(out / name, img)
        annotations.extend(anns)
    save_annotations(out / ANNOTATIONS_FILE, annotations)
    manifest = build_manifest(annotations, cfg.data_train_fraction, cfg.data_split_seed,
                              cfg.eval_noise_config())
    manifest.save(out / MANIFEST_FILE)
    counts = " ".join(f"{k}={v}" for k, v in manifest.counts.items())
    print(f"generated {synth.n_scenes} scenes, {len(annotations)} lights: {counts} "
          f"(train {len(manifest.train)}, test {len(manifest.test)})")
    return 0


def cmd_prepare(args) -> int:
    """Split an existing annotation file and freeze its evaluation noise."""
    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.override(data_split_seed=args.seed)
    src = Path(args.annotations)
    annotations = load_annotations(src, check_images=True)
    out = src.parent
    if (out / MANIFEST_FILE).exists() and not args.force:
        raise StorageError(f"{out / MANIFEST_FILE} exists; pass --force to overwrite")
    manifest = build_manifest(annotations, cfg.data_train_fraction, cfg.data_split_seed,
                              cfg.eval_noise_config(), annotations_name=src.name)
    manifest.save(out / MANIFEST_FILE)
    print(f"{len(annotations)} lights: train {len(manifest.train)}, test {len(manifest.test)}")
    return 0


def cmd_train(args) -> int:
    from .plotting import plot_loss_curves
    from .report import write_loss_trace

    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.override(train_seed=args.seed)
    data = Dataset.open(_data_dir(cfg))
    out = _prepare_out(args.out, args.force, CHECKPOINT_DIR)
    ckdir = out / CHECKPOINT_DIR
    ckdir.mkdir(exist_ok=True)
    (out / RUN_CONFIG).write_text(serialize_config(cfg))
    spec = cfg.crop_spec()
    tcfg = cfg.train_config()
    noise = cfg.noise_config() if cfg.train_noise else None
    train = data.subset("train")
    traces = {}
    for lt in LIGHT_TYPES:
        if not any(a.light_type is lt for a in train):
            log.warning("no training data for %s; model skipped", lt.value)
            continue
        result = train_light_model(train, data.images, lt, tcfg, spec, noise_cfg=noise,
                                   augment=cfg.train_augment, route=cfg.train_augment_route)
        traces[lt.value] = result.loss_trace
        meta = {"crop_mode": spec.mode.value, "crop_size": spec.size, "epochs": tcfg.epochs,
                "n_train": result.n_train, "seed": tcfg.seed, "train_noise": cfg.train_noise,
                "augment": cfg.train_augment}
        save_checkpoint(ckdir / f"{lt.value}{CHECKPOINT_SUFFIX}", result.params, lt,
                        result_architecture(), result.swa, meta)
        print(f"{lt.value}: {result.n_train} crops, loss {result.loss_trace[0]:.4f} -> {result.loss_trace[-1]:.4f}")
    write_loss_trace(traces, out / LOSS_CSV)
    if traces:
        plot_loss_curves(traces, out / LOSS_FIGURE)
    return 0


def result_architecture() -> dict:
    return DEFAULT_MODEL.describe()


def cmd_eval(args) -> int:
    from .report import REPORT_JSON, write_report

    cfg = _config(args)
    registry, headers = load_registry(args.checkpoints)
    spec = _eval_spec(args, cfg, headers)
    data = Dataset.open(_data_dir(cfg))
    out = _prepare_out(args.out, args.force, REPORT_JSON)
    report = evaluate_dataset(registry, data, spec)
    report["meta"] = {
        "crop_mode": spec.mode.value,
        "crop_size": spec.size,
        "eval_noise": data.manifest.noise,
        "models": {k: h["meta"] for k, h in sorted(headers.items())},
    }
    write_report(report, out, figures=not args.no_figures)
    w = report["clean"]["weighted"]
    wn = report["noisy"]["weighted"]
    print(f"clean: loss {w['regression_loss']:.4f} ADE {w['ade']:.2f} px  "
          f"noisy: loss {wn['regression_loss']:.4f} ADE {wn['ade']:.2f} px  -> {out}")
    return 0


def _parse_floats(text, n, what):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"{what}: expected {n} comma-separated numbers") from None
    if len(vals) != n:
        raise InputError(f"{what}: expected {n} comma-separated numbers")
    return vals


def _prediction_record(index, sample, pred, spec):
    corners = denormalize_prediction(pred, sample.crop_center, spec)
    return {
        "index": index,
        "light_type": sample.light_type.value,
        "center": [float(sample.crop_center[0]), float(sample.crop_center[1])],
        "normalized": [float(v) for v in pred],
        "corners": [[float(x), float(y)] for x, y in corners],
    }


def cmd_predict(args) -> int:
    cfg = _config(args)
    registry, headers = load_registry(args.checkpoints)
    spec = _eval_spec(args, cfg, headers)
    records = []
    if args.image:
        if not (args.vehicle and args.center and args.light_type):
            raise InputError("--image needs --vehicle, --center and --light-type")
        vehicle = VehicleBox(*_parse_floats(args.vehicle, 4, "--vehicle"))
        center = Point(*_parse_floats(args.center, 2, "--center"))
        img = read_image(args.image)
        # corners are unknown; a placeholder visible corner satisfies the record invariants
        ann = LightAnnotation(str(args.image), vehicle, LightType(args.light_type), center,
                              (center, None, None, None))
        sample = make_sample(img, ann, spec, scale=None)
        pred = predict_samples(registry, [sample])[0]
        records.append(_prediction_record(0, sample, pred, spec))
    else:
        data = Dataset.open(_data_dir(cfg))
        indices = getattr(data.manifest, args.split)
        eps_for = data.manifest.eps if (args.noisy and args.split == "test") else None
        for lt in LIGHT_TYPES:
            idx = [i for i in indices if data.annotations[i].light_type is lt]
            if not idx or lt not in registry:
                continue
            samples = build_samples(data.annotations, idx, data.images, spec, eps_for)
            preds = predict_samples(registry, samples)
            records += [_prediction_record(i, s, p, spec) for i, s, p in zip(idx, samples, preds)]
        records.sort(key=lambda r: r["index"])
    text = "".join(json.dumps(r) + "\n" for r in records)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(records)} predictions to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_render(args) -> int:
    from .render import render_overlay

    cfg = _config(args)
    registry, headers = load_registry(args.checkpoints)
    spec = _eval_spec(args, cfg, headers)
    data = Dataset.open(_data_dir(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    indices = list(getattr(data.manifest, args.split))[: args.limit]
    eps_for = data.manifest.eps if (args.noisy and args.split == "test") else None
    n = 0
    for i in indices:
        a = data.annotations[i]
        if a.light_type not in registry:
            continue
        sample = build_samples(data.annotations, [i], data.images, spec, eps_for)[0]
        pred = predict_samples(registry, [sample])[0]
        render_overlay(sample, pred, out / f"overlay_{i:05d}_{a.light_type.value}.png")
        n += 1
    print(f"rendered {n} overlays to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlcorner", description="Vehicle-light corner regression toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", type=Path, help="key = value experiment config")
        if seed:
            p.add_argument("--seed", type=int)
        return p

    p = common(sub.add_parser("gen-synth", help="generate a synthetic dataset"))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_synth)

    p = common(sub.add_parser("prepare", help="split an annotation file and freeze eval noise"))
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = common(sub.add_parser("train", help="train the four light models"))
    p.add_argument("--data", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--context", choices=[m.value for m in CropMode])
    p.add_argument("--augment", action="store_true", help="add horizontally flipped crops")
    p.add_argument("--train-noise", action="store_true", help="train on noisy centers")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="evaluate checkpoints on the test split"), seed=False)
    p.add_argument("--data", type=Path)
    p.add_argument("--checkpoints", type=Path, required=True)
    p.add_argument("--context", choices=[m.value for m in CropMode])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("predict", help="predict corners"), seed=False)
    p.add_argument("--data", type=Path)
    p.add_argument("--checkpoints", type=Path, required=True)
    p.add_argument("--context", choices=[m.value for m in CropMode])
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--noisy", action="store_true", help="use the frozen noisy centers")
    p.add_argument("--image", type=Path, help="single scene image instead of a dataset")
    p.add_argument("--vehicle", help="x1,y1,x2,y2")
    p.add_argument("--center", help="x,y")
    p.add_argument("--light-type", choices=[t.value for t in LIGHT_TYPES])
    p.add_argument("--out", type=Path, help="JSON-Lines output (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("render", help="draw prediction overlays"), seed=False)
    p.add_argument("--data", type=Path)
    p.add_argument("--checkpoints", type=Path, required=True)
    p.add_argument("--context", choices=[m.value for m in CropMode])
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--limit", type=int, default=12)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except VLCornerError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
