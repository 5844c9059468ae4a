"""Dataset generation: renders trajectories into TUM-layout directories.

Output layout::

    <out_dir>/
      genconfig.json     everything needed to regenerate the dataset
      gt_mesh.ply        wall surface extracted from the tube's distance field
      train/             manifest + rgb/ + depth/ + groundtruth.txt
      test_0/ ...        disjoint held-out trajectories, same layout

Two styles generated from the same spec/config/seed share geometry and
trajectories exactly: depth images and pose files are bit-identical, only
the RGB differs.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
from skimage import measure

from .. import rng as rng_mod
from ..core.imageio import write_depth_png, write_rgb_png
from ..core.manifest import DatasetManifest, FrameRecord
from ..core.tum import write_tum_trajectory
from ..mesh import TriangleMesh, write_ply
from .render import RenderConfig, TextureStyle, render_frame, sample_trajectory
from .shapes import ColonSpec, build_geometry

DEFAULT_DEPTH_SCALE = 5000

GT_MESH_NAME = "gt_mesh.ply"
GENCONFIG_NAME = "genconfig.json"


def bake_surface_mesh(spec: ColonSpec, voxel: float | None = None) -> TriangleMesh:
    """Extract the tube wall as a triangle mesh from its distance field."""
    geo = build_geometry(spec)
    if voxel is None:
        voxel = spec.radius / 8.0
    margin = spec.radius + 3 * voxel
    lo = geo.points.min(axis=0) - margin
    hi = geo.points.max(axis=0) + margin
    dims = np.maximum(np.ceil((hi - lo) / voxel).astype(int) + 1, 2)
    xs, ys, zs = (lo[i] + voxel * np.arange(dims[i]) for i in range(3))
    grid = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1).reshape(-1, 3)
    values = geo.sdf(grid).reshape(tuple(dims))
    verts, faces, _, _ = measure.marching_cubes(values, level=0.0)
    return TriangleMesh(verts * voxel + lo, faces).drop_degenerate()


def _write_split(
    root: Path,
    geo,
    spec: ColonSpec,
    style: TextureStyle,
    cfg: RenderConfig,
    trajectory,
    depth_scale: int,
) -> DatasetManifest:
    (root / "rgb").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(exist_ok=True)
    records = []
    for i, (ts, pose) in enumerate(trajectory):
        pose_next = trajectory[i + 1][1] if i + 1 < len(trajectory) else None
        sample = render_frame(
            spec, style, cfg, pose, pose_next=pose_next, timestamp=ts, geometry=geo
        )
        rgb_rel = f"rgb/{i:06d}.png"
        depth_rel = f"depth/{i:06d}.png"
        write_rgb_png(sample.frame.rgb, root / rgb_rel)
        write_depth_png(sample.depth, root / depth_rel, depth_scale)
        records.append(FrameRecord(ts, rgb_rel, depth_rel))
    write_tum_trajectory(trajectory, root / "groundtruth.txt")
    manifest = DatasetManifest(
        root=root,
        intrinsics=cfg.intrinsics,
        depth_scale=depth_scale,
        frames=tuple(records),
        trajectory="groundtruth.txt",
        style=style.name,
    )
    manifest.save()
    return manifest


def generate_dataset(
    spec: ColonSpec,
    style: TextureStyle,
    cfg: RenderConfig,
    n_train: int,
    n_test_sets: int,
    n_test: int,
    out_dir,
    seed: int,
    depth_scale: int = DEFAULT_DEPTH_SCALE,
    jitter_deg: float = 5.0,
    offset_frac: float = 0.15,
    fps: float = 30.0,
    write_mesh: bool = True,
) -> DatasetManifest:
    """Render a train split plus disjoint test trajectories; returns the train manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geo = build_geometry(spec)

    splits = [("train", n_train)] + [(f"test_{k}", n_test) for k in range(n_test_sets)]
    train_manifest = None
    for name, n_frames in splits:
        traj = sample_trajectory(
            spec,
            n_frames,
            rng_mod.child_seed(seed, "trajectory", name),
            jitter_deg=jitter_deg,
            offset_frac=offset_frac,
            fps=fps,
            geometry=geo,
        )
        manifest = _write_split(out / name, geo, spec, style, cfg, traj, depth_scale)
        if name == "train":
            train_manifest = manifest

    config_blob = {
        "spec": dataclasses.asdict(spec),
        "style": dataclasses.asdict(style),
        "render": {
            **{k: v for k, v in dataclasses.asdict(cfg).items() if k != "intrinsics"},
            "intrinsics": dataclasses.asdict(cfg.intrinsics),
        },
        "n_train": n_train,
        "n_test_sets": n_test_sets,
        "n_test": n_test,
        "seed": seed,
        "depth_scale": depth_scale,
        "jitter_deg": jitter_deg,
        "offset_frac": offset_frac,
        "fps": fps,
    }
    (out / GENCONFIG_NAME).write_text(json.dumps(config_blob, indent=2) + "\n")
    if write_mesh:
        write_ply(bake_surface_mesh(spec), out / GT_MESH_NAME)
    assert train_manifest is not None
    return train_manifest


def test_set_manifests(dataset_root) -> list[DatasetManifest]:
    """Load every test_<k> manifest under a generated dataset root."""
    root = Path(dataset_root)
    manifests = []
    k = 0
    while (root / f"test_{k}").exists():
        manifests.append(DatasetManifest.load(root / f"test_{k}"))
        k += 1
    return manifests
