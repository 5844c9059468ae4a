from .types import CameraIntrinsics, DepthMap, Frame, FrameSample
from .se3 import (
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
from .tum import read_tum_trajectory, write_tum_trajectory
from .imageio import read_depth_png, read_rgb_png, write_depth_png, write_rgb_png
from .manifest import DatasetManifest, FrameRecord

__all__ = [
    "CameraIntrinsics",
    "DepthMap",
    "Frame",
    "FrameSample",
    "Pose",
    "SixDof",
    "pose_compose",
    "pose_from_6dof",
    "pose_from_matrix",
    "pose_inverse",
    "pose_matrix",
    "pose_to_6dof",
    "relative_pose",
    "read_tum_trajectory",
    "write_tum_trajectory",
    "read_depth_png",
    "read_rgb_png",
    "write_depth_png",
    "write_rgb_png",
    "DatasetManifest",
    "FrameRecord",
]
