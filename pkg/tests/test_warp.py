import numpy as np
import pytest
import torch

from lumenrec.core import CameraIntrinsics, DepthMap, Pose, SixDof, pose_from_6dof, pose_inverse
from lumenrec.geometry import backproject, bilinear_sample, project, warp


K = CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)


def grid_coords(h, w):
    vv, uu = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    return np.stack([uu, vv], axis=-1)


def test_backproject_principal_ray():
    k = CameraIntrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=4, height=4)
    depth = torch.full((4, 4), 2.0, dtype=torch.float64)
    pts = backproject(depth, k)
    assert torch.allclose(pts[0, 0], torch.tensor([0.0, 0.0, 2.0], dtype=torch.float64))


def test_backproject_hand_computed_pixel():
    k = CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)
    depth = torch.ones(101, 101, dtype=torch.float64)
    pts = backproject(depth, k)
    # pixel (u=60, v=50): x = (60-50)/100 * 1 = 0.1, y = 0
    assert torch.allclose(pts[50, 60], torch.tensor([0.1, 0.0, 1.0], dtype=torch.float64))


def test_project_backproject_round_trip():
    rng = np.random.default_rng(0)
    depth = torch.as_tensor(rng.uniform(0.5, 5.0, (32, 32)))
    k = CameraIntrinsics(fx=40.0, fy=44.0, cx=15.5, cy=16.5, width=32, height=32)
    coords, z = project(backproject(depth, k), k)
    expected = torch.as_tensor(grid_coords(32, 32))
    assert torch.allclose(coords, expected, atol=1e-6)
    assert torch.allclose(z, depth)


def test_identity_warp_is_pixel_grid():
    rng = np.random.default_rng(1)
    h = w = 24
    k = CameraIntrinsics(fx=30.0, fy=30.0, cx=11.5, cy=11.5, width=w, height=h)
    values = rng.uniform(0.5, 3.0, (h, w))
    mask = rng.random((h, w)) > 0.1
    depth = DepthMap(np.where(mask, values, 0.0), mask)
    res = warp(depth, Pose.identity(), k)
    expected = torch.as_tensor(grid_coords(h, w))
    assert torch.allclose(res.coords[res.valid], expected[res.valid], atol=1e-6)
    # Identity warp keeps the source mask; border pixels may drop out by a
    # rounding epsilon, so require equality on the interior and containment
    # everywhere.
    mask_t = torch.as_tensor(mask.copy())
    interior = torch.zeros_like(mask_t)
    interior[1:-1, 1:-1] = mask_t[1:-1, 1:-1]
    assert bool((~res.valid | mask_t).all())  # valid implies source-valid
    assert torch.equal(res.valid & interior, interior)
    assert torch.allclose(res.warped_depth[res.valid], torch.as_tensor(values)[res.valid])


def test_pure_translation_shift_is_fx_tx_over_z():
    # Coordinate-map convention: X_b = X_a + t, so tx=+0.1 at depth 1 with
    # fx=100 shifts u by +10 px.
    depth = DepthMap.from_values(np.ones((64, 64)))
    k = CameraIntrinsics(fx=100.0, fy=100.0, cx=31.5, cy=31.5, width=64, height=64)
    rel = Pose(np.array([0, 0, 0, 1.0]), np.array([0.1, 0.0, 0.0]))
    res = warp(depth, rel, k)
    shift = res.coords[..., 0] - torch.as_tensor(grid_coords(64, 64))[..., 0]
    assert torch.allclose(shift, torch.full_like(shift, 10.0), atol=1e-6)

    # A camera physically displaced by +0.1 (rel map t = -0.1) shifts -10 px.
    rel_cam_motion = pose_inverse(rel)
    res2 = warp(depth, rel_cam_motion, k)
    shift2 = res2.coords[..., 0] - torch.as_tensor(grid_coords(64, 64))[..., 0]
    assert torch.allclose(shift2, torch.full_like(shift2, -10.0), atol=1e-6)


def plane_depth(pose, k, plane_z=2.0):
    """z-depth of the world plane z = plane_z seen from a camera pose."""
    R = pose.matrix[:3, :3]
    t = pose.translation
    vv, uu = np.meshgrid(np.arange(k.height, dtype=float), np.arange(k.width, dtype=float), indexing="ij")
    x = (uu - k.cx) / k.fx
    y = (vv - k.cy) / k.fy
    dir_w_z = R[2, 0] * x + R[2, 1] * y + R[2, 2]
    depth = (plane_z - t[2]) / dir_w_z
    mask = depth > 0
    return DepthMap(np.where(mask, depth, 0.0), mask)


def test_warp_round_trip_within_millipixel():
    # Two views of the world plane z=2 with analytically consistent depths;
    # composing the a->b flow with the bilinearly sampled b->a flow must
    # return the original pixel grid.
    from lumenrec.core import relative_pose

    h = w = 48
    k = CameraIntrinsics(fx=60.0, fy=60.0, cx=23.5, cy=23.5, width=w, height=h)
    pose_a = Pose.identity()
    pose_b = pose_from_6dof(SixDof([0.02, -0.03, 0.01], [0.05, -0.02, 0.04]))
    rel_ab = relative_pose(pose_a, pose_b)
    depth_a = plane_depth(pose_a, k)
    depth_b = plane_depth(pose_b, k)

    fwd = warp(depth_a, rel_ab, k)
    back = warp(depth_b, pose_inverse(rel_ab), k)
    back_flow, inb = bilinear_sample(back.coords, fwd.coords)
    back_valid, _ = bilinear_sample(back.valid.to(torch.float64), fwd.coords)
    both = fwd.valid & inb & (back_valid > 0.999)
    assert both.sum() > 500
    grid = torch.as_tensor(grid_coords(h, w))
    err = (back_flow - grid).norm(dim=-1)
    assert err[both].max() < 1e-3


def test_warp_scale_equivariance():
    rng = np.random.default_rng(4)
    h = w = 16
    k = CameraIntrinsics(fx=20.0, fy=20.0, cx=7.5, cy=7.5, width=w, height=h)
    values = rng.uniform(1.0, 2.0, (h, w))
    rel = pose_from_6dof(SixDof([0.05, 0.02, -0.01], [0.1, -0.05, 0.08]))
    res1 = warp(DepthMap.from_values(values), rel, k)
    s = 3.7
    rel_scaled = Pose(rel.rotation, rel.translation * s)
    res2 = warp(DepthMap.from_values(values * s), rel_scaled, k)
    assert torch.allclose(res1.coords, res2.coords, atol=1e-9)
    assert torch.equal(res1.valid, res2.valid)
    assert torch.allclose(res2.warped_depth, res1.warped_depth * s)


def test_behind_camera_invalid():
    depth = DepthMap.from_values(np.ones((8, 8)))
    k = CameraIntrinsics(fx=10.0, fy=10.0, cx=3.5, cy=3.5, width=8, height=8)
    rel = Pose(np.array([0, 0, 0, 1.0]), np.array([0.0, 0.0, -5.0]))  # z flips negative
    res = warp(depth, rel, k)
    assert not res.valid.any()


# -- bilinear sampling ----------------------------------------------------------


def test_bilinear_integer_grid_exact():
    rng = np.random.default_rng(5)
    img = torch.as_tensor(rng.random((10, 12, 3)))
    coords = torch.as_tensor(grid_coords(10, 12))
    out, inb = bilinear_sample(img, coords)
    assert torch.equal(out, img)
    assert inb.all()


def test_bilinear_constant_image():
    img = torch.full((6, 6), 0.42, dtype=torch.float64)
    coords = torch.as_tensor(np.random.default_rng(6).uniform(0, 5, (20, 20, 2)))
    out, inb = bilinear_sample(img, coords)
    assert inb.all()
    assert torch.allclose(out, torch.full_like(out, 0.42))


def test_bilinear_linear_ramp():
    h, w = 8, 8
    img = torch.as_tensor(grid_coords(h, w)[..., 0])  # I(u, v) = u
    coords = torch.tensor([[[3.25, 2.7]]], dtype=torch.float64)
    out, _ = bilinear_sample(img, coords)
    assert out.item() == pytest.approx(3.25, abs=1e-12)


def test_bilinear_out_of_bounds_flagged_not_raised():
    img = torch.ones(4, 4, dtype=torch.float64)
    coords = torch.tensor([[[-1.0, 0.0], [0.0, 9.0]]], dtype=torch.float64)
    out, inb = bilinear_sample(img, coords)
    assert not inb.any()
    assert torch.isfinite(out).all()
