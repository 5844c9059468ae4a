"""Plot artifacts: loss curves, depth panels, and metrics tables."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..core.manifest import DatasetManifest
from ..evaluation import depth_metrics


def plot_loss_curves(losses_csv, out_png) -> Path:
    per_stage: dict[int, dict[str, list[tuple[int, float]]]] = defaultdict(lambda: defaultdict(list))
    with open(losses_csv) as fh:
        for row in csv.DictReader(fh):
            per_stage[int(row["stage"])][row["term"]].append(
                (int(row["step"]), float(row["value"]))
            )
    stages = sorted(per_stage)
    fig, axes = plt.subplots(1, len(stages), figsize=(5 * len(stages), 3.6), squeeze=False)
    for ax, stage in zip(axes[0], stages):
        for term, points in sorted(per_stage[stage].items()):
            steps, values = zip(*points)
            ax.plot(steps, values, label=term, linewidth=1)
        ax.set_title(f"stage {stage}")
        ax.set_xlabel("step")
        ax.set_yscale("log")
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)
    return Path(out_png)


def plot_depth_panels(predict, manifest: DatasetManifest, out_png, n_frames: int = 3) -> Path:
    """Rows of [input | prediction | ground truth | error heatmap]."""
    idx = np.linspace(0, len(manifest) - 1, n_frames).astype(int)
    fig, axes = plt.subplots(n_frames, 4, figsize=(10, 2.6 * n_frames), squeeze=False)
    for row, i in enumerate(idx):
        rgb = manifest.load_rgb(int(i))
        gt = manifest.load_depth(int(i))
        pred = predict(rgb)
        m = depth_metrics(pred, gt, align="median")
        scale = np.median(gt.values[gt.valid_mask]) / np.median(pred.values[pred.valid_mask])
        aligned = pred.values * scale
        err = np.where(gt.valid_mask & pred.valid_mask, np.abs(aligned - gt.values), np.nan)
        vmax = np.nanmax(gt.values[gt.valid_mask]) if gt.valid_mask.any() else 1.0

        axes[row][0].imshow(rgb)
        axes[row][0].set_title("input", fontsize=8)
        axes[row][1].imshow(aligned, cmap="turbo", vmin=0, vmax=vmax)
        axes[row][1].set_title(f"prediction (abs rel {m.abs_rel:.3f})", fontsize=8)
        axes[row][2].imshow(np.where(gt.valid_mask, gt.values, np.nan), cmap="turbo", vmin=0, vmax=vmax)
        axes[row][2].set_title("ground truth", fontsize=8)
        im = axes[row][3].imshow(err, cmap="magma")
        axes[row][3].set_title("abs error", fontsize=8)
        fig.colorbar(im, ax=axes[row][3], fraction=0.05)
        for ax in axes[row]:
            ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)
    return Path(out_png)


def plot_metrics_table(report: dict, out_png) -> Path:
    keys = ("abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3")
    rows = []
    labels = []
    for route, blob in report.get("routes", {"target": report}).items():
        labels.append(route)
        rows.append([f"{blob['mean'][k]:.4f}" for k in keys])
    for variant, ref in report.get("paper_baseline", {}).items():
        labels.append(f"reference {variant}")
        rows.append([f"{ref[k]:.4f}" for k in keys])
    fig, ax = plt.subplots(figsize=(9, 0.5 + 0.4 * len(rows)))
    ax.axis("off")
    table = ax.table(cellText=rows, rowLabels=labels, colLabels=list(keys), loc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return Path(out_png)


def render_run_plots(run_dir, data_root=None) -> list[Path]:
    """Produce every plot a finished run supports; returns created paths."""
    from ..training import depth_predictor, load_state

    run_dir = Path(run_dir)
    out = []
    losses = run_dir / "losses.csv"
    if losses.exists():
        out.append(plot_loss_curves(losses, run_dir / "loss_curves.png"))
    report_path = run_dir / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
        out.append(plot_metrics_table(report, run_dir / "metrics_table.png"))
    ckpt = run_dir / "stage3" / "checkpoint"
    if ckpt.exists() and data_root is not None:
        state = load_state(ckpt)
        test_dir = Path(data_root) / "test_0"
        if test_dir.exists():
            manifest = DatasetManifest.load(test_dir)
            out.append(
                plot_depth_panels(
                    depth_predictor(state, "target"), manifest, run_dir / "depth_panels.png"
                )
            )
    return out
