"""Depth-quality metrics and multi-set aggregation.

Standard monocular-depth error/accuracy metrics over the joint valid mask:
abs_rel, sq_rel, rmse, rmse_log and the delta < 1.25^k accuracy fractions.
Median alignment rescales the prediction by median(gt)/median(pred) before
comparison, resolving the monocular scale ambiguity.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .core.manifest import DatasetManifest
from .core.types import DepthMap
from .errors import ManifestError

#: Published reference rows recorded in reports for context; never asserted.
PAPER_BASELINE = {
    "full": {
        "abs_rel": 0.144,
        "sq_rel": 0.390,
        "rmse": 2.190,
        "rmse_log": 0.184,
        "d1": 0.818,
        "d2": 0.964,
        "d3": 0.987,
    },
    "no_tnet": {
        "abs_rel": 0.155,
        "sq_rel": 0.434,
        "rmse": 2.300,
        "rmse_log": 0.200,
        "d1": 0.786,
        "d2": 0.955,
        "d3": 0.985,
    },
    "no_bidirect": {
        "abs_rel": 0.286,
        "sq_rel": 1.379,
        "rmse": 3.889,
        "rmse_log": 1.037,
        "d1": 0.554,
        "d2": 0.799,
        "d3": 0.880,
    },
}


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    d1: float
    d2: float
    d3: float
    n_valid: int = 0
    n_log_excluded: int = 0

    def __post_init__(self):
        for name in ("abs_rel", "sq_rel", "rmse", "rmse_log"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (0 <= self.d1 <= self.d2 <= self.d3 <= 1):
            raise ValueError(f"accuracy fractions must satisfy 0<=d1<=d2<=d3<=1, got "
                             f"{self.d1}, {self.d2}, {self.d3}")

    def as_dict(self) -> dict:
        return asdict(self)


def _mean_metrics(items: Sequence[DepthMetrics]) -> DepthMetrics:
    fields = ("abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3")
    values = {f: float(np.mean([getattr(m, f) for m in items])) for f in fields}
    return DepthMetrics(
        **values,
        n_valid=int(sum(m.n_valid for m in items)),
        n_log_excluded=int(sum(m.n_log_excluded for m in items)),
    )


def depth_metrics(
    pred: DepthMap, gt: DepthMap, align: str = "none", clamp_to_gt: bool = False
) -> DepthMetrics:
    """Error and accuracy metrics over the joint valid mask.

    align="median" rescales pred by median(gt)/median(pred); align="none"
    compares raw values (supervised, metric-scale evaluation). clamp_to_gt
    optionally clips predictions into [min(gt), max(gt)] after alignment
    (off by default: the pure definition).
    """
    if align not in ("none", "median"):
        raise ValueError(f"align must be 'none' or 'median', got {align!r}")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    mask = pred.valid_mask & gt.valid_mask & (gt.values > 0)
    if not mask.any():
        raise ValueError("no jointly valid pixels to evaluate")
    p = pred.values[mask].astype(np.float64)
    g = gt.values[mask].astype(np.float64)
    if align == "median":
        p = p * (np.median(g) / np.median(p))
    if clamp_to_gt:
        p = np.clip(p, g.min(), g.max())

    diff = p - g
    abs_rel = float(np.mean(np.abs(diff) / g))
    sq_rel = float(np.mean(diff**2 / g))
    rmse = float(np.sqrt(np.mean(diff**2)))

    pos = p > 0
    n_excluded = int((~pos).sum())
    if n_excluded:
        warnings.warn(f"{n_excluded} non-positive predictions excluded from log metrics")
    if pos.any():
        rmse_log = float(np.sqrt(np.mean((np.log(p[pos]) - np.log(g[pos])) ** 2)))
        ratio = np.maximum(p[pos] / g[pos], g[pos] / p[pos])
    else:
        rmse_log = float("inf")
        ratio = np.array([np.inf])
    d1 = float(np.mean(ratio < 1.25))
    d2 = float(np.mean(ratio < 1.25**2))
    d3 = float(np.mean(ratio < 1.25**3))
    return DepthMetrics(
        abs_rel=abs_rel,
        sq_rel=sq_rel,
        rmse=rmse,
        rmse_log=rmse_log,
        d1=d1,
        d2=d2,
        d3=d3,
        n_valid=int(mask.sum()),
        n_log_excluded=n_excluded,
    )


PredictFn = Callable[[np.ndarray], DepthMap]


def evaluate_testsets(
    predict: PredictFn,
    manifests: Sequence[DatasetManifest],
    align: str = "median",
    per_frame_csv=None,
) -> dict:
    """Run inference over every frame of every test set.

    Per-frame metrics are averaged within a set, then set means are averaged.
    Returns the report dict (also the report.json schema): per_set, mean,
    align, and the published baseline rows for context. per_frame_csv
    optionally writes one row per evaluated frame.
    """
    if not manifests:
        raise ValueError("no test sets given")
    fields = ("abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3")
    csv_rows = ["set,frame," + ",".join(fields)]
    per_set = []
    for set_index, manifest in enumerate(manifests):
        frame_metrics = []
        for i in range(len(manifest)):
            gt = manifest.load_depth(i)
            if not gt.valid_mask.any():
                raise ManifestError(
                    f"test set {manifest.root} frame {i} has no valid ground-truth depth"
                )
            pred = predict(manifest.load_rgb(i))
            m = depth_metrics(pred, gt, align=align)
            frame_metrics.append(m)
            csv_rows.append(
                f"{set_index},{i}," + ",".join(f"{getattr(m, f)!r}" for f in fields)
            )
        per_set.append(_mean_metrics(frame_metrics))
    if per_frame_csv is not None:
        from pathlib import Path

        Path(per_frame_csv).write_text("\n".join(csv_rows) + "\n")
    mean = _mean_metrics(per_set)
    return {
        "per_set": [m.as_dict() for m in per_set],
        "mean": mean.as_dict(),
        "align": align,
        "n_sets": len(per_set),
        "paper_baseline": PAPER_BASELINE,
    }
