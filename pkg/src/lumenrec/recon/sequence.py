"""Whole-sequence reconstruction: depth frames -> TSDF -> mesh -> metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..core.manifest import DatasetManifest
from ..core.se3 import Pose, quat_to_matrix
from ..core.tum import read_tum_trajectory
from ..core.types import DepthMap
from ..mesh import PointCloud, TriangleMesh, read_ply, write_ply
from .icp import IcpResult, icp_register
from .meshdist import ReconMetrics, cloud_mesh_distance
from .tsdf import TsdfVolume, extract_mesh, tsdf_integrate

DepthFn = Callable[[np.ndarray], DepthMap]


@dataclass
class ReconReport:
    mesh: TriangleMesh
    metrics: ReconMetrics | None
    icp: IcpResult | None
    voxel_size: float
    n_frames: int
    depth_source: str
    pose_source: str

    def as_dict(self) -> dict:
        blob = {
            "voxel_size": self.voxel_size,
            "n_frames": self.n_frames,
            "depth_source": self.depth_source,
            "pose_source": self.pose_source,
            "n_vertices": len(self.mesh.vertices),
            "n_triangles": len(self.mesh.triangles),
        }
        if self.metrics is not None:
            blob.update(self.metrics.as_dict())
        if self.icp is not None:
            blob["icp_rms"] = self.icp.rms
            blob["icp_iterations"] = self.icp.iterations
        return blob


def _poses_for_frames(manifest: DatasetManifest, pose_source) -> tuple[list[Pose], str]:
    if pose_source == "gt" or pose_source is None:
        return manifest.poses(), "gt"
    entries = read_tum_trajectory(pose_source)
    times = np.array([ts for ts, _ in entries])
    poses = []
    for fr in manifest.frames:
        i = int(np.argmin(np.abs(times - fr.timestamp)))
        if abs(times[i] - fr.timestamp) > 1e-6:
            raise ValueError(
                f"pose file {pose_source} has no pose for frame timestamp {fr.timestamp!r}"
            )
        poses.append(entries[i][1])
    return poses, str(pose_source)


def _depth_for_frame(manifest: DatasetManifest, index: int, depth_source) -> DepthMap:
    if depth_source == "gt" or depth_source is None:
        return manifest.load_depth(index)
    return depth_source(manifest.load_rgb(index))


def _world_bounds(manifest, poses, depth_source, stride):
    k = manifest.intrinsics
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for i in range(0, len(manifest), stride):
        depth = _depth_for_frame(manifest, i, depth_source)
        mask = depth.valid_mask
        if not mask.any():
            continue
        vv, uu = np.nonzero(mask)
        z = depth.values[vv, uu]
        x = (uu - k.cx) / k.fx * z
        y = (vv - k.cy) / k.fy * z
        cam_pts = np.stack([x, y, z], axis=1)
        R = quat_to_matrix(poses[i].rotation)
        world = cam_pts @ R.T + poses[i].translation
        lo = np.minimum(lo, world.min(axis=0))
        hi = np.maximum(hi, world.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise ValueError("no valid depth found in any frame")
    return lo, hi


def reconstruct_sequence(
    manifest: DatasetManifest,
    depth_source="gt",
    pose_source="gt",
    voxel_size: float | None = None,
    truncation_voxels: float = 4.0,
    gt_mesh=None,
    out_mesh_path=None,
    frame_stride: int = 1,
    icp_points: int = 4000,
    seed: int = 0,
) -> ReconReport:
    """Integrate a sequence into a TSDF, mesh it, and score it against a
    reference mesh when one is available.

    depth_source: "gt" or a callable rgb -> DepthMap (model inference).
    pose_source: "gt" (manifest trajectory) or a path to a TUM pose file that
    must cover every frame timestamp.
    """
    poses, pose_tag = _poses_for_frames(manifest, pose_source)
    depth_tag = "gt" if (depth_source == "gt" or depth_source is None) else "model"

    bounds_stride = max(frame_stride, len(manifest) // 12, 1)
    lo, hi = _world_bounds(manifest, poses, depth_source, bounds_stride)
    if voxel_size is None:
        voxel_size = 0.01 * float(np.linalg.norm(hi - lo))
    margin = truncation_voxels * voxel_size
    volume = TsdfVolume.for_bounds(lo - margin, hi + margin, voxel_size, truncation_voxels)

    n_frames = 0
    for i in range(0, len(manifest), frame_stride):
        depth = _depth_for_frame(manifest, i, depth_source)
        tsdf_integrate(volume, depth, poses[i], manifest.intrinsics)
        n_frames += 1

    mesh = extract_mesh(volume)
    if out_mesh_path is not None:
        write_ply(mesh, out_mesh_path)

    metrics = None
    icp_result = None
    if gt_mesh is not None and not mesh.is_empty:
        if isinstance(gt_mesh, (str, Path)):
            gt_mesh = read_ply(gt_mesh)
        rng = np.random.default_rng(seed)
        cloud_pts = mesh.vertices
        if len(cloud_pts) > icp_points:
            cloud_pts = cloud_pts[rng.choice(len(cloud_pts), icp_points, replace=False)]
        ref_pts = gt_mesh.vertices
        if len(ref_pts) > 4 * icp_points:
            ref_pts = ref_pts[rng.choice(len(ref_pts), 4 * icp_points, replace=False)]
        icp_result = icp_register(PointCloud(cloud_pts), PointCloud(ref_pts))
        registered = PointCloud(icp_result.pose.apply(mesh.vertices))
        metrics = cloud_mesh_distance(registered, gt_mesh)

    return ReconReport(
        mesh=mesh,
        metrics=metrics,
        icp=icp_result,
        voxel_size=float(voxel_size),
        n_frames=n_frames,
        depth_source=depth_tag,
        pose_source=pose_tag,
    )
