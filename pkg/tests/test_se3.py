import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lumenrec.core import (
    Pose,
    SixDof,
    pose_compose,
    pose_from_6dof,
    pose_from_matrix,
    pose_inverse,
    pose_matrix,
    pose_to_6dof,
    relative_pose,
)


def rodrigues(axis_angle):
    """Independent rotation-matrix oracle."""
    v = np.asarray(axis_angle, dtype=np.float64)
    theta = np.linalg.norm(v)
    if theta < 1e-14:
        return np.eye(3)
    k = v / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def random_pose(rng):
    v = SixDof(rng.uniform(-2, 2, 3), rng.uniform(-5, 5, 3))
    return pose_from_6dof(v)


def test_zero_6dof_is_identity():
    p = pose_from_6dof(SixDof.zero())
    assert np.allclose(p.rotation, [0, 0, 0, 1])
    assert np.allclose(p.translation, 0)


def test_quarter_turn_about_z_maps_x_to_y():
    p = pose_from_6dof(SixDof([0, 0, np.pi / 2], [0, 0, 0]))
    out = p.apply(np.array([1.0, 0.0, 0.0]))
    assert np.allclose(out, [0.0, 1.0, 0.0], atol=1e-12)


def test_6dof_matches_rodrigues_oracle():
    v = SixDof([0.3, -0.1, 0.2], [1.0, 2.0, 3.0])
    p = pose_from_6dof(v)
    m = pose_matrix(p)
    assert np.allclose(m[:3, :3], rodrigues(v.axis_angle), atol=1e-12)
    assert np.allclose(m[:3, 3], [1, 2, 3])


def test_compose_identity_and_inverse():
    rng = np.random.default_rng(0)
    p = random_pose(rng)
    assert np.allclose(pose_matrix(pose_compose(Pose.identity(), p)), pose_matrix(p))
    ident = pose_compose(p, pose_inverse(p))
    assert np.allclose(pose_matrix(ident), np.eye(4), atol=1e-9)


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = random_pose(rng), random_pose(rng)
        expected = pose_matrix(a) @ pose_matrix(b)
        assert np.allclose(pose_matrix(pose_compose(a, b)), expected, atol=1e-12)


def test_compose_associative():
    rng = np.random.default_rng(2)
    a, b, c = (random_pose(rng) for _ in range(3))
    left = pose_compose(pose_compose(a, b), c)
    right = pose_compose(a, pose_compose(b, c))
    assert np.allclose(pose_matrix(left), pose_matrix(right), atol=1e-9)


def test_relative_pose_maps_a_into_b():
    rng = np.random.default_rng(3)
    pose_a, pose_b = random_pose(rng), random_pose(rng)
    rel = relative_pose(pose_a, pose_b)
    x_cam_a = rng.uniform(-1, 1, 3)
    x_world = pose_a.apply(x_cam_a)
    x_cam_b = pose_inverse(pose_b).apply(x_world)
    assert np.allclose(rel.apply(x_cam_a), x_cam_b, atol=1e-9)


def test_nonunit_quaternion_rejected():
    with pytest.raises(ValueError):
        Pose(np.array([0, 0, 0, 1.1]), np.zeros(3))


def test_pose_from_matrix_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p = random_pose(rng)
        q = pose_from_matrix(pose_matrix(p))
        assert np.allclose(pose_matrix(q), pose_matrix(p), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quaternion_norm_preserved_by_compose_inverse(seed):
    rng = np.random.default_rng(seed)
    a, b = random_pose(rng), random_pose(rng)
    c = pose_compose(a, pose_inverse(b))
    assert abs(np.linalg.norm(c.rotation) - 1.0) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_6dof_log_exp_round_trip(seed):
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0, np.pi - 1e-3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    v = SixDof(axis * angle, rng.uniform(-5, 5, 3))
    back = pose_to_6dof(pose_from_6dof(v))
    assert np.allclose(back.axis_angle, v.axis_angle, atol=1e-9)
    assert np.allclose(back.translation, v.translation, atol=1e-12)
