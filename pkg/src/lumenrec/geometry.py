"""Differentiable view geometry and the two geometric losses.

Everything here is torch-based and differentiable with respect to depth
values, 6-DOF pose parameters, and image intensities. Functions accept
either torch tensors or the core numpy types (converted on entry, without
gradient tracking).

Conventions match the core module: pixel coords are (u, v) with arrays
indexed [v, u]; the relative pose maps camera-a coordinates into camera-b
coordinates (X_b = R @ X_a + t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .core.se3 import Pose, pose_matrix
from .core.types import CameraIntrinsics, DepthMap

Tensor = torch.Tensor


@dataclass(frozen=True)
class LossWeights:
    """Every scalar knob of the staged training objective."""

    lambda_i: float = 0.15  # L1 term inside the photometric loss
    lambda_s: float = 0.85  # structural term inside the photometric loss
    w_photo: float = 0.1  # photometric loss weight in the joint stage
    w_cons: float = 0.5  # depth-consistency loss weight
    w_gan: float = 1.0  # adversarial weight (translator stage)
    w_cycle: float = 10.0  # cycle-reconstruction weight (translator stage)
    w_sup: float = 1.0  # supervised depth L1 weight
    w_self: float = 0.1  # cross-network self-supervision weight

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class WarpResult:
    """Projection of one camera's pixels into another camera.

    coords: (H, W, 2) continuous (u, v) pixel coordinates in the target view.
    valid: (H, W) bool; False where the source depth is invalid, the
        transformed z is non-positive, or coords fall outside the image.
    warped_depth: (H, W) source depth expressed as target-camera z.
    """

    coords: Tensor
    valid: Tensor
    warped_depth: Tensor


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x if dtype is None else x.to(dtype)
    arr = np.asarray(x)
    if not arr.flags.writeable:  # frozen core types are read-only
        arr = arr.copy()
    return torch.as_tensor(arr, dtype=dtype)


def _depth_tensor(depth) -> tuple[Tensor, Tensor]:
    """(values, valid) from a DepthMap, tensor, or (values, valid) pair."""
    if isinstance(depth, DepthMap):
        return _as_tensor(depth.values), _as_tensor(depth.valid_mask, torch.bool)
    if isinstance(depth, tuple):
        return _as_tensor(depth[0]), _as_tensor(depth[1], torch.bool)
    values = _as_tensor(depth)
    return values, torch.isfinite(values) & (values > 0)


def rotation_from_axis_angle(axis_angle: Tensor) -> Tensor:
    """Differentiable Rodrigues formula, smooth through zero rotation."""
    theta = torch.linalg.norm(axis_angle)
    small = theta < 1e-8
    # Guard the division; the small-angle Taylor branch is used at ~0.
    safe_theta = torch.where(small, torch.ones_like(theta), theta)
    k = axis_angle / safe_theta
    K = torch.zeros(3, 3, dtype=axis_angle.dtype, device=axis_angle.device)
    K = K + torch.stack(
        [
            torch.stack([torch.zeros_like(k[0]), -k[2], k[1]]),
            torch.stack([k[2], torch.zeros_like(k[0]), -k[0]]),
            torch.stack([-k[1], k[0], torch.zeros_like(k[0])]),
        ]
    )
    eye = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device)
    exact = eye + torch.sin(theta) * K + (1 - torch.cos(theta)) * (K @ K)
    # First-order expansion keeps gradients finite at exactly zero.
    Kv = torch.zeros(3, 3, dtype=axis_angle.dtype, device=axis_angle.device)
    Kv = Kv + torch.stack(
        [
            torch.stack([torch.zeros_like(axis_angle[0]), -axis_angle[2], axis_angle[1]]),
            torch.stack([axis_angle[2], torch.zeros_like(axis_angle[0]), -axis_angle[0]]),
            torch.stack([-axis_angle[1], axis_angle[0], torch.zeros_like(axis_angle[0])]),
        ]
    )
    taylor = eye + Kv
    return torch.where(small, taylor, exact)


def _pose_to_rt(rel_pose, dtype, device) -> tuple[Tensor, Tensor]:
    """Relative pose as (R, t) tensors; a 6-vector stays differentiable."""
    if isinstance(rel_pose, Pose):
        m = pose_matrix(rel_pose)
        return (
            torch.as_tensor(m[:3, :3], dtype=dtype, device=device),
            torch.as_tensor(m[:3, 3], dtype=dtype, device=device),
        )
    if isinstance(rel_pose, tuple):
        return _as_tensor(rel_pose[0], dtype), _as_tensor(rel_pose[1], dtype)
    vec = _as_tensor(rel_pose, dtype)
    if vec.shape != (6,):
        raise ValueError(f"expected a Pose, (R, t), or 6-vector, got shape {tuple(vec.shape)}")
    return rotation_from_axis_angle(vec[:3]), vec[3:]


def invert_rt(R: Tensor, t: Tensor) -> tuple[Tensor, Tensor]:
    return R.transpose(0, 1), -(R.transpose(0, 1) @ t)


def backproject(depth, K: CameraIntrinsics) -> Tensor:
    """Per-pixel camera-space points: depth * ((u-cx)/fx, (v-cy)/fy, 1)."""
    values, _ = _depth_tensor(depth)
    h, w = values.shape
    dtype, device = values.dtype, values.device
    u = torch.arange(w, dtype=dtype, device=device)
    v = torch.arange(h, dtype=dtype, device=device)
    vv, uu = torch.meshgrid(v, u, indexing="ij")
    x = (uu - K.cx) / K.fx
    y = (vv - K.cy) / K.fy
    return torch.stack([x * values, y * values, values], dim=-1)


def project(points: Tensor, K: CameraIntrinsics) -> tuple[Tensor, Tensor]:
    """(u, v) pixel coordinates and z for camera-space points (..., 3)."""
    z = points[..., 2]
    safe_z = torch.where(z.abs() < 1e-12, torch.full_like(z, 1e-12), z)
    u = K.fx * points[..., 0] / safe_z + K.cx
    v = K.fy * points[..., 1] / safe_z + K.cy
    return torch.stack([u, v], dim=-1), z


def warp(depth_a, rel_pose_ab, K: CameraIntrinsics) -> WarpResult:
    """Project camera-a pixels (with depth) into camera b."""
    values, src_valid = _depth_tensor(depth_a)
    points_a = backproject(values, K)
    R, t = _pose_to_rt(rel_pose_ab, points_a.dtype, points_a.device)
    points_b = points_a @ R.transpose(0, 1) + t
    coords, z = project(points_b, K)
    h, w = values.shape
    inbounds = (
        (coords[..., 0] >= 0)
        & (coords[..., 0] <= w - 1)
        & (coords[..., 1] >= 0)
        & (coords[..., 1] <= h - 1)
    )
    valid = src_valid & (z > 0) & inbounds
    return WarpResult(coords=coords, valid=valid, warped_depth=z)


def bilinear_sample(image, coords) -> tuple[Tensor, Tensor]:
    """Sample image at continuous (u, v) coords.

    Returns (samples, inbounds). Out-of-bounds coords are sampled with
    clamped corner indices and flagged False; differentiable in both the
    image and the coords away from integer grid lines.
    """
    img = _as_tensor(image)
    crd = _as_tensor(coords, img.dtype)
    squeeze = img.dim() == 2
    if squeeze:
        img = img.unsqueeze(-1)
    h, w, _ = img.shape
    u = crd[..., 0]
    v = crd[..., 1]
    inbounds = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)

    u = u.clamp(0, w - 1)
    v = v.clamp(0, h - 1)
    u0 = u.detach().floor().clamp(0, w - 2)
    v0 = v.detach().floor().clamp(0, h - 2)
    du = (u - u0).unsqueeze(-1)
    dv = (v - v0).unsqueeze(-1)
    u0 = u0.long()
    v0 = v0.long()

    tl = img[v0, u0]
    tr = img[v0, u0 + 1]
    bl = img[v0 + 1, u0]
    br = img[v0 + 1, u0 + 1]
    top = tl + du * (tr - tl)
    bottom = bl + du * (br - bl)
    out = top + dv * (bottom - top)
    if squeeze:
        out = out.squeeze(-1)
    return out, inbounds


def _all_corners_valid(valid: Tensor, coords: Tensor) -> Tensor:
    """True where all four bilinear interpolation corners are valid."""
    h, w = valid.shape
    u0 = coords[..., 0].detach().floor().clamp(0, w - 2).long()
    v0 = coords[..., 1].detach().floor().clamp(0, h - 2).long()
    return valid[v0, u0] & valid[v0, u0 + 1] & valid[v0 + 1, u0] & valid[v0 + 1, u0 + 1]


def _box_filter(x: Tensor, window: int) -> Tensor:
    """Mean over a window x window neighborhood with reflect padding."""
    pad = window // 2
    x4 = x.permute(2, 0, 1).unsqueeze(0)
    x4 = torch.nn.functional.pad(x4, (pad, pad, pad, pad), mode="reflect")
    kernel = torch.ones(
        x4.shape[1], 1, window, window, dtype=x.dtype, device=x.device
    ) / (window * window)
    out = torch.nn.functional.conv2d(x4, kernel, groups=x4.shape[1])
    return out.squeeze(0).permute(1, 2, 0)


def ssim(img_a, img_b, window: int = 7, c1: float = 0.01**2, c2: float = 0.03**2) -> Tensor:
    """Per-pixel structural similarity over box-filtered local statistics.

    Inputs are (H, W) or (H, W, C) with values in [0, 1]; channels are
    averaged. By construction ssim(x, x) = 1 everywhere.
    """
    a = _as_tensor(img_a)
    b = _as_tensor(img_b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() == 2:
        a = a.unsqueeze(-1)
        b = b.unsqueeze(-1)
    mu_a = _box_filter(a, window)
    mu_b = _box_filter(b, window)
    var_a = _box_filter(a * a, window) - mu_a * mu_a
    var_b = _box_filter(b * b, window) - mu_b * mu_b
    cov = _box_filter(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return (num / den).mean(dim=-1)


def photometric_loss(
    img, img_warped, valid, lambda_i: float = 0.15, lambda_s: float = 0.85
) -> Tensor:
    """L1 + structural-dissimilarity photometric penalty on the valid mask.

    mean over valid p of lambda_i*|I(p)-I'(p)| + lambda_s*(1-SSIM(I,I',p))/2,
    with the per-pixel L1 averaged over channels.
    """
    a = _as_tensor(img)
    b = _as_tensor(img_warped)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    mask = _as_tensor(valid, torch.bool)
    if not bool(mask.any()):
        raise ValueError("photometric loss undefined: empty valid mask")
    l1 = (a - b).abs()
    if l1.dim() == 3:
        l1 = l1.mean(dim=-1)
    dssim = (1.0 - ssim(a, b)) / 2.0
    per_pixel = lambda_i * l1 + lambda_s * dssim
    return per_pixel[mask].mean()


def depth_consistency_loss(
    depth_a, depth_b, warp_ab: WarpResult, mode: str = "warped_z"
) -> Tensor:
    """Normalized disagreement between correspondingly warped depths.

    S(p) = |Ma(p) - Mb(p)| / (Ma(p) + Mb(p)) averaged over the valid set V.
    mode "warped_z" compares a's depth transported into b's camera against
    the interpolated b depth (scale-consistent); mode "raw" compares a's
    untransformed values instead.
    """
    if mode not in ("warped_z", "raw"):
        raise ValueError(f"unknown mode {mode!r}")
    values_a, _ = _depth_tensor(depth_a)
    values_b, valid_b = _depth_tensor(depth_b)
    sampled_b, inb = bilinear_sample(values_b, warp_ab.coords)
    corner_ok = _all_corners_valid(valid_b, warp_ab.coords)
    m_a = warp_ab.warped_depth if mode == "warped_z" else values_a
    v = warp_ab.valid & inb & corner_ok & (sampled_b > 0)
    if not bool(v.any()):
        raise ValueError("depth consistency undefined: no valid correspondences")
    s = (m_a - sampled_b).abs() / (m_a + sampled_b)
    return s[v].mean()
