"""Standard depth evaluation metrics with optional median scaling.

A frame is one camera image. Validity is gt in (d_min, d_max]; when
median scaling is on, predictions are multiplied by
median(gt)/median(pred) over the valid set before being clamped to
[d_min, d_max]. Aggregation is an unweighted per-frame mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import AggregationError, ConfigError, DimensionError

_METRIC_FIELDS = ("abs_rel", "sq_rel", "rmse", "rmse_log",
                  "delta1", "delta2", "delta3")


@dataclass
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _empty_report() -> MetricsReport:
    nan = float("nan")
    return MetricsReport(nan, nan, nan, nan, nan, nan, nan, 0)


def compute_metrics(pred, gt, d_min: float = 1e-3, d_max: float = 80.0,
                    median_scaling: bool = False) -> MetricsReport:
    """Seven metrics for one frame; ``n_pixels == 0`` marks an empty valid set."""
    if d_min <= 0:
        raise ConfigError(f"d_min must be positive, got {d_min}")
    pred = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    gt = np.asarray(getattr(gt, "data", gt), dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"pred {pred.shape} vs gt {gt.shape}")

    valid = (gt > d_min) & (gt <= d_max)
    if not valid.any():
        return _empty_report()
    g = gt[valid]
    p = pred[valid]
    if median_scaling:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, d_min, d_max)

    err = p - g
    thresh = np.maximum(p / g, g / p)
    log_err = np.log(p) - np.log(g)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err * err / g)),
        rmse=float(math.sqrt(np.mean(err * err))),
        rmse_log=float(math.sqrt(np.mean(log_err * log_err))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25 ** 2)),
        delta3=float(np.mean(thresh < 1.25 ** 3)),
        n_pixels=int(valid.sum()))


def aggregate(reports) -> MetricsReport:
    """Unweighted per-frame mean; frames with no valid pixels are dropped."""
    kept = [r for r in reports if r.n_pixels > 0]
    if not kept:
        raise AggregationError("no frame has valid pixels to aggregate")
    return MetricsReport(
        **{name: float(np.mean([getattr(r, name) for r in kept]))
           for name in _METRIC_FIELDS},
        n_pixels=sum(r.n_pixels for r in kept))


def report_json(per_frame, aggregated: MetricsReport) -> str:
    """Structured report: per-frame list plus the aggregate, as JSON text."""
    payload = {
        "frames": [r.to_dict() for r in per_frame],
        "aggregate": aggregated.to_dict(),
    }
    return json.dumps(payload, indent=2, allow_nan=True)


def format_table(per_frame, aggregated: MetricsReport) -> str:
    """Aligned plain-text table, one row per frame plus the aggregate."""
    header = f"{'frame':>8} " + " ".join(f"{m:>9}" for m in _METRIC_FIELDS) \
        + f" {'n_pixels':>9}"
    lines = [header]

    def row(label, r):
        cells = " ".join(f"{getattr(r, m):9.4f}" for m in _METRIC_FIELDS)
        return f"{label:>8} {cells} {r.n_pixels:9d}"

    for i, r in enumerate(per_frame):
        lines.append(row(str(i), r))
    lines.append(row("mean", aggregated))
    return "\n".join(lines)
