"""Report serialization: JSON, flat key=value, aligned table and CSV."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .geometry import LIGHT_TYPES

REPORT_JSON = "report.json"
REPORT_KV = "report.kv"
REPORT_TXT = "report.txt"
METRICS_CSV = "metrics.csv"
ADE_FIGURE = "ade_per_light.png"
SPLITS = ("clean", "noisy")
COLUMNS = ("regression_loss", "ade", "pct_error")
HEADERS = {"regression_loss": "Regression Loss", "ade": "ADE (px)", "pct_error": "% Error"}


def _clean(obj):
    """nan -> None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def report_json(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"


def flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from flatten(v, f"{prefix}.{k}" if prefix else str(k))
    else:
        yield prefix, obj


def report_kv(report: dict) -> str:
    lines = []
    for key, value in flatten(_clean(report)):
        lines.append(f"{key}={'n/a' if value is None else value}")
    return "\n".join(lines) + "\n"


def _fmt(v, digits):
    return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


def report_table(report: dict) -> str:
    out = io.StringIO()
    digits = {"regression_loss": 3, "ade": 2, "pct_error": 2}
    for split in SPLITS:
        part = report[split]
        title = "ground-truth centers" if split == "clean" else "frozen center noise"
        out.write(f"Test set: {title}\n")
        cols = [HEADERS[c] for c in COLUMNS] + ["mAP@25", "mAP@50", "N"]
        out.write(f"{'Vehicle Light':<14}" + "".join(f"{c:>17}" for c in cols) + "\n")
        for lt in LIGHT_TYPES:
            m = part["per_light"][lt.value]
            row = [_fmt(None if m is None else m[c], digits[c]) for c in COLUMNS]
            row += [_fmt(None if m is None else 100 * m[k], 2) for k in ("map@25", "map@50")]
            row.append("0" if m is None else str(m["n_test"]))
            out.write(f"{lt.long_name:<14}" + "".join(f"{v:>17}" for v in row) + "\n")
        w = part["weighted"]
        row = [_fmt(w[c], digits[c]) for c in COLUMNS]
        row += [_fmt(100 * part["detection_rate"][k], 2) for k in ("map@25", "map@50")]
        row.append(str(w["n_test"]))
        out.write(f"{'Weighted':<14}" + "".join(f"{v:>17}" for v in row) + "\n\n")
    return out.getvalue()


def report_csv(report: dict) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["split", "light", "regression_loss", "ade", "pct_error", "map@25", "map@50", "n_test"])
    for split in SPLITS:
        part = report[split]
        for lt in LIGHT_TYPES:
            m = part["per_light"][lt.value]
            if m is None:
                writer.writerow([split, lt.value, "", "", "", "", "", 0])
            else:
                writer.writerow([split, lt.value] + [repr(m[k]) for k in
                                 ("regression_loss", "ade", "pct_error", "map@25", "map@50")] + [m["n_test"]])
        w = part["weighted"]
        writer.writerow([split, "weighted"] + [repr(w[k]) for k in COLUMNS]
                        + [repr(part["detection_rate"][k]) for k in ("map@25", "map@50")] + [w["n_test"]])
    return out.getvalue()


def write_report(report: dict, out_dir, figures: bool = True) -> list:
    from .plotting import plot_ade_bars

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in ((REPORT_JSON, report_json(report)), (REPORT_KV, report_kv(report)),
                       (REPORT_TXT, report_table(report)), (METRICS_CSV, report_csv(report))):
        (out_dir / name).write_text(text)
        written.append(out_dir / name)
    if figures:
        plot_ade_bars(report, out_dir / ADE_FIGURE)
        written.append(out_dir / ADE_FIGURE)
    return written


def write_loss_trace(traces: dict, path) -> None:
    """CSV with one row per epoch and one column per trained light model."""
    names = [lt.value for lt in LIGHT_TYPES if lt.value in traces]
    epochs = max((len(traces[n]) for n in names), default=0)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch"] + names)
        for e in range(epochs):
            writer.writerow([e + 1] + [repr(traces[n][e]) if e < len(traces[n]) else "" for n in names])
