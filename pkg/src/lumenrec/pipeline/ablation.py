"""Ablation runs: full pipeline vs geometric-losses-off vs single direction.

Variants share seeds; full and no_tnet additionally share their stage-1/2
state (no_tnet only changes stage 3), so their comparison is paired.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from ..core.manifest import DatasetManifest
from ..evaluation import PAPER_BASELINE, evaluate_testsets
from ..synthcolon.dataset import test_set_manifests
from ..training import (
    FrameDataset,
    StageConfig,
    depth_predictor,
    init_state,
    pose_quality,
    run_stages,
    stage3_train,
    term_curve,
)
from .config import RunConfig

VARIANTS = ("full", "no_tnet", "no_bidirect")


def _curve_ends(state, stage: int, term: str, window: int = 10) -> dict:
    curve = term_curve(state, stage, term)
    if not curve:
        return {}
    w = min(window, max(1, len(curve) // 5))
    return {
        f"{term}_first": float(np.mean(curve[:w])),
        f"{term}_last": float(np.mean(curve[-w:])),
    }


def _diagnostics(state, config: RunConfig) -> dict:
    out = {}
    out.update(_curve_ends(state, 3, "cons"))
    out.update(_curve_ends(state, 3, "photo"))
    out.update(_curve_ends(state, 2, "sup_tgt"))
    test_dir = Path(config.target_data) / "test_0"
    if test_dir.exists():
        out["pose"] = pose_quality(state, DatasetManifest.load(test_dir))
    return out


def _no_geometry(cfg: StageConfig) -> StageConfig:
    weights = dataclasses.replace(cfg.weights, w_photo=0.0, w_cons=0.0)
    return dataclasses.replace(cfg, weights=weights)


def _eval_abs_rel(state, config: RunConfig) -> dict:
    tests = test_set_manifests(config.target_data)
    report = evaluate_testsets(depth_predictor(state, "target"), tests, align=config.eval_align)
    return report["mean"]


def ablation_runner(
    config: RunConfig,
    variants=VARIANTS,
    seeds=(0, 1, 2),
    out_path=None,
) -> dict:
    """Train each variant per seed and tabulate held-out target metrics.

    Returns {rows, medians, paper_baseline, seconds}; rows[variant][seed] is
    the mean DepthMetrics dict of that run.
    """
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown variants: {sorted(unknown)}")
    src = FrameDataset(DatasetManifest.load(Path(config.source_data) / "train"))
    tgt = FrameDataset(DatasetManifest.load(Path(config.target_data) / "train"))
    h, w = src.intrinsics.height, src.intrinsics.width

    rows: dict[str, dict[int, dict]] = {v: {} for v in variants}
    diagnostics: dict[str, dict[int, dict]] = {v: {} for v in variants}
    seconds: dict[str, float] = {v: 0.0 for v in variants}
    share_trunk = "full" in variants or "no_tnet" in variants
    for seed in seeds:
        if share_trunk:
            t0 = time.time()
            trunk = init_state(
                seed,
                image_size=(h, w),
                base_channels=config.base_channels,
                depth_range=(config.depth_min, config.depth_max),
            )
            trunk = run_stages(trunk, src, tgt, config.stages[:2])
            trunk_seconds = time.time() - t0
        if "full" in variants:
            t0 = time.time()
            state = copy.deepcopy(trunk)
            state = stage3_train(state, src, tgt, config.stage3)
            rows["full"][seed] = _eval_abs_rel(state, config)
            diagnostics["full"][seed] = _diagnostics(state, config)
            seconds["full"] += trunk_seconds + time.time() - t0
        if "no_tnet" in variants:
            t0 = time.time()
            state = copy.deepcopy(trunk)
            state = stage3_train(state, src, tgt, _no_geometry(config.stage3))
            rows["no_tnet"][seed] = _eval_abs_rel(state, config)
            seconds["no_tnet"] += trunk_seconds + time.time() - t0
        if "no_bidirect" in variants:
            t0 = time.time()
            state = init_state(
                seed,
                image_size=(h, w),
                base_channels=config.base_channels,
                depth_range=(config.depth_min, config.depth_max),
            )
            state = run_stages(state, src, tgt, config.stages, bidirectional=False)
            rows["no_bidirect"][seed] = _eval_abs_rel(state, config)
            seconds["no_bidirect"] += time.time() - t0

    medians = {
        v: {
            key: float(np.median([rows[v][s][key] for s in seeds]))
            for key in ("abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3")
        }
        for v in variants
    }
    table = {
        "rows": {v: {str(s): rows[v][s] for s in seeds} for v in variants},
        "medians": medians,
        "seeds": list(seeds),
        "paper_baseline": {v: PAPER_BASELINE[v] for v in VARIANTS},
        "seconds": seconds,
        "diagnostics": {v: {str(s): d for s, d in diagnostics[v].items()} for v in variants},
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(table, indent=2) + "\n")
    return table


def ablation_csv(table: dict, path) -> None:
    keys = ("abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3")
    lines = ["variant," + ",".join(keys)]
    for variant, med in table["medians"].items():
        lines.append(variant + "," + ",".join(f"{med[k]:.6f}" for k in keys))
    for variant, ref in table["paper_baseline"].items():
        lines.append(f"reference_{variant}," + ",".join(f"{ref[k]:.6f}" for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")
