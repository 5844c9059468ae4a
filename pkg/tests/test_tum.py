import numpy as np
import pytest

from lumenrec.core import Pose, pose_from_6dof, SixDof, read_tum_trajectory, write_tum_trajectory
from lumenrec.errors import TrajectoryParseError


def test_identity_line(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("0.0 0 0 0 0 0 0 1\n")
    entries = read_tum_trajectory(p)
    assert len(entries) == 1
    ts, pose = entries[0]
    assert ts == 0.0
    assert np.allclose(pose.rotation, [0, 0, 0, 1])
    assert np.allclose(pose.translation, 0)


def test_comments_and_sorting(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("# header\n2.0 0 0 0 0 0 0 1\n1.0 1 0 0 0 0 0 1\n")
    entries = read_tum_trajectory(p)
    assert [ts for ts, _ in entries] == [1.0, 2.0]
    assert entries[0][1].translation[0] == 1.0


def test_zero_quaternion_rejected(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("0.0 0 0 0 0 0 0 0\n")
    with pytest.raises(TrajectoryParseError, match=":1:"):
        read_tum_trajectory(p)


def test_malformed_line_names_line_number(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("0.0 0 0 0 0 0 0 1\n1.0 0 0 0\n")
    with pytest.raises(TrajectoryParseError, match=":2:"):
        read_tum_trajectory(p)


def test_nonnumeric_field_rejected(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("0.0 0 0 zero 0 0 0 1\n")
    with pytest.raises(TrajectoryParseError, match=":1:"):
        read_tum_trajectory(p)


def test_slightly_off_norm_is_renormalized(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text(f"0.0 0 0 0 0 0 0 {1 + 5e-4}\n")
    (_, pose), = read_tum_trajectory(p)
    assert abs(np.linalg.norm(pose.rotation) - 1.0) < 1e-12


def test_far_off_norm_rejected(tmp_path):
    p = tmp_path / "traj.txt"
    p.write_text("0.0 0 0 0 0 0 0 1.01\n")
    with pytest.raises(TrajectoryParseError):
        read_tum_trajectory(p)


def test_round_trip_bitwise_exact(tmp_path):
    rng = np.random.default_rng(7)
    entries = []
    for i in range(100):
        v = SixDof(rng.uniform(-3, 3, 3), rng.uniform(-10, 10, 3))
        entries.append((float(i) * 0.1 + rng.uniform(0, 0.01), pose_from_6dof(v)))
    entries.sort(key=lambda e: e[0])
    path = tmp_path / "traj.txt"
    write_tum_trajectory(entries, path)
    back = read_tum_trajectory(path)
    assert len(back) == len(entries)
    for (ts_a, pa), (ts_b, pb) in zip(entries, back):
        assert ts_a == ts_b
        assert np.array_equal(pa.rotation, pb.rotation)
        assert np.array_equal(pa.translation, pb.translation)
