"""Truncated signed distance volume with projective integration.

Grid values live at nodes: node (i, j, k) sits at origin + (i, j, k)*voxel.
Integration is the standard weighted running average of per-frame clamped
signed distances measured along the camera z axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from ..core.se3 import Pose, quat_to_matrix
from ..core.types import CameraIntrinsics, DepthMap
from ..mesh import TriangleMesh


@dataclass
class TsdfVolume:
    origin: np.ndarray  # (3,) world position of node (0, 0, 0)
    voxel_size: float
    dims: tuple[int, int, int]
    truncation: float
    tsdf: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    weights: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.truncation <= 0:
            raise ValueError("truncation must be positive")
        if any(d < 2 for d in self.dims):
            raise ValueError(f"dims must be at least 2 per axis, got {self.dims}")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.tsdf is None:
            self.tsdf = np.zeros(self.dims, dtype=np.float64)
        if self.weights is None:
            self.weights = np.zeros(self.dims, dtype=np.float64)

    @classmethod
    def for_bounds(cls, lo, hi, voxel_size: float, truncation_voxels: float = 4.0) -> "TsdfVolume":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        dims = tuple(int(np.ceil((hi[i] - lo[i]) / voxel_size)) + 1 for i in range(3))
        return cls(
            origin=lo,
            voxel_size=voxel_size,
            dims=dims,
            truncation=truncation_voxels * voxel_size,
        )

    def node_positions(self) -> np.ndarray:
        grids = [self.origin[i] + self.voxel_size * np.arange(self.dims[i]) for i in range(3)]
        mesh = np.meshgrid(*grids, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, 3)


def tsdf_integrate(
    volume: TsdfVolume, depth: DepthMap, pose: Pose, intrinsics: CameraIntrinsics
) -> TsdfVolume:
    """Fuse one depth frame into the volume (in place; also returned).

    pose is camera-to-world. Per node in the frustum: sdf = depth at the
    node's pixel minus the node's camera z, clamped to +-truncation, merged
    by a weight-1 running average. Nodes more than one truncation behind the
    surface are left untouched.
    """
    h, w = depth.shape
    if (intrinsics.height, intrinsics.width) != (h, w):
        raise ValueError("depth map size does not match intrinsics")
    R = quat_to_matrix(pose.rotation)
    t = pose.translation
    points = volume.node_positions()
    cam = (points - t) @ R  # R^T @ (p - t), row-wise

    z = cam[:, 2]
    in_front = z > 1e-9
    u = np.full(len(cam), -1.0)
    v = np.full(len(cam), -1.0)
    u[in_front] = intrinsics.fx * cam[in_front, 0] / z[in_front] + intrinsics.cx
    v[in_front] = intrinsics.fy * cam[in_front, 1] / z[in_front] + intrinsics.cy
    ui = np.rint(u).astype(int)
    vi = np.rint(v).astype(int)
    in_image = in_front & (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)

    idx = np.nonzero(in_image)[0]
    uii, vii = ui[idx], vi[idx]
    measured = depth.values[vii, uii]
    valid_px = depth.valid_mask[vii, uii]
    sdf = measured - z[idx]
    update = valid_px & (sdf >= -volume.truncation)
    idx = idx[update]
    sdf = np.clip(sdf[update], -volume.truncation, volume.truncation)

    flat_t = volume.tsdf.reshape(-1)
    flat_w = volume.weights.reshape(-1)
    w_old = flat_w[idx]
    flat_t[idx] = (flat_t[idx] * w_old + sdf) / (w_old + 1.0)
    flat_w[idx] = w_old + 1.0
    return volume


def extract_mesh(volume: TsdfVolume) -> TriangleMesh:
    """Zero level set via marching cubes, restricted to observed nodes."""
    observed = volume.weights > 0
    if not observed.any() or volume.tsdf[observed].min() >= 0 or volume.tsdf[observed].max() <= 0:
        warnings.warn("volume has no observed zero crossing; returning an empty mesh")
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    try:
        verts, faces, _, _ = measure.marching_cubes(volume.tsdf, level=0.0, mask=observed)
    except (ValueError, RuntimeError) as exc:
        warnings.warn(f"marching cubes found no surface ({exc}); returning an empty mesh")
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    world = verts * volume.voxel_size + volume.origin
    return TriangleMesh(world, faces.astype(np.int64)).drop_degenerate()
