import json

import numpy as np
import pytest

from lumenrec.core import CameraIntrinsics, DatasetManifest, DepthMap
from lumenrec.recon import reconstruct_sequence
from lumenrec.synthcolon import (
    RenderConfig,
    STYLE_A,
    bake_surface_mesh,
    generate_dataset,
    straight_colon,
)


@pytest.fixture(scope="module")
def tube_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tube_ds")
    spec = straight_colon(radius=1.0, length=16.0)
    k = CameraIntrinsics(fx=28.0, fy=28.0, cx=23.5, cy=23.5, width=48, height=48)
    cfg = RenderConfig(intrinsics=k, max_ray_distance=14.0)
    manifest = generate_dataset(
        spec,
        STYLE_A,
        cfg,
        n_train=24,
        n_test_sets=1,
        n_test=4,
        out_dir=root,
        seed=5,
        jitter_deg=3.0,
        offset_frac=0.1,
    )
    return root, spec, manifest


def test_gt_reconstruction_error_below_voxel(tube_dataset):
    root, spec, manifest = tube_dataset
    report = reconstruct_sequence(
        manifest,
        depth_source="gt",
        pose_source="gt",
        gt_mesh=root / "gt_mesh.ply",
        out_mesh_path=root / "recon.ply",
    )
    assert not report.mesh.is_empty
    assert report.metrics is not None
    assert report.metrics.mean_distance < report.voxel_size
    assert (root / "recon.ply").exists()


def test_external_pose_file_equivalent_to_gt(tube_dataset):
    root, spec, manifest = tube_dataset
    gt = reconstruct_sequence(manifest, pose_source="gt", frame_stride=3)
    ext = reconstruct_sequence(
        manifest, pose_source=root / "train/groundtruth.txt", frame_stride=3
    )
    assert np.array_equal(gt.mesh.vertices, ext.mesh.vertices)
    assert gt.pose_source == "gt" and ext.pose_source.endswith("groundtruth.txt")


def test_missing_pose_names_timestamp(tube_dataset, tmp_path):
    root, spec, manifest = tube_dataset
    lines = (root / "train/groundtruth.txt").read_text().splitlines()
    truncated = tmp_path / "short.txt"
    truncated.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ValueError, match="timestamp"):
        reconstruct_sequence(manifest, pose_source=truncated, frame_stride=1)


def test_model_depth_route_reports_metrics(tube_dataset):
    root, spec, manifest = tube_dataset

    by_content = {manifest.load_rgb(i).tobytes(): i for i in range(len(manifest))}

    def blurry_gt(rgb):
        # stand-in for a learned model: ground truth with a mild scale error
        d = manifest.load_depth(by_content[rgb.tobytes()])
        vals = d.values.copy()
        vals[d.valid_mask] *= 1.03
        return DepthMap(np.where(d.valid_mask, vals, 0.0), d.valid_mask)
    report = reconstruct_sequence(
        manifest, depth_source=blurry_gt, pose_source="gt", gt_mesh=root / "gt_mesh.ply"
    )
    assert report.depth_source == "model"
    assert report.metrics is not None
    assert np.isfinite(report.metrics.mean_distance)
    blob = report.as_dict()
    assert {"voxel_size", "n_frames", "depth_source", "pose_source", "mean"} <= set(blob)
    json.dumps(blob)  # report must be JSON-serializable
