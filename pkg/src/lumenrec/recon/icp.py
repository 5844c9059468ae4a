"""Point-to-point iterative closest point registration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..core.se3 import Pose, quat_from_matrix
from ..errors import RegistrationError
from ..mesh import PointCloud


@dataclass(frozen=True)
class IcpResult:
    pose: Pose  # maps cloud coordinates into reference coordinates
    rms_history: tuple[float, ...]
    iterations: int

    @property
    def rms(self) -> float:
        return self.rms_history[-1]


def _kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rigid transform src -> dst."""
    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    H = (src - c_src).T @ (dst - c_dst)
    U, _, Vt = np.linalg.svd(H)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ D @ U.T
    t = c_dst - R @ c_src
    return R, t


def icp_register(
    cloud: PointCloud,
    reference: PointCloud,
    max_iterations: int = 100,
    tolerance: float = 1e-6,
    max_correspondence_distance: float | None = None,
) -> IcpResult:
    """Align cloud onto reference; returns the cloud->reference transform.

    Convergence: the RMS nearest-neighbor residual changes by less than
    tolerance, or max_iterations is reached. The residual is non-increasing
    across iterations (each Kabsch step minimizes it over the current
    correspondences).
    """
    if len(cloud) < 100 or len(reference) < 100:
        raise ValueError(
            f"both clouds need at least 100 points, got {len(cloud)} and {len(reference)}"
        )
    tree = cKDTree(reference.points)
    moved = cloud.points.copy()
    R_total = np.eye(3)
    t_total = np.zeros(3)
    history: list[float] = []
    iterations = 0
    for _ in range(max_iterations):
        dist, nn = tree.query(moved, workers=-1)
        if max_correspondence_distance is not None:
            keep = dist <= max_correspondence_distance
            if keep.sum() < 10:
                raise RegistrationError(
                    f"correspondence collapse: only {int(keep.sum())} pairs within "
                    f"{max_correspondence_distance}"
                )
        else:
            keep = np.ones(len(moved), dtype=bool)
        rms = float(np.sqrt(np.mean(dist[keep] ** 2)))
        history.append(rms)
        iterations += 1
        R, t = _kabsch(moved[keep], reference.points[nn[keep]])
        moved = moved @ R.T + t
        R_total = R @ R_total
        t_total = R @ t_total + t
        if len(history) >= 2 and abs(history[-2] - history[-1]) < tolerance:
            break
    dist, _ = tree.query(moved, workers=-1)
    history.append(float(np.sqrt(np.mean(dist**2))))
    return IcpResult(
        pose=Pose(quat_from_matrix(R_total), t_total),
        rms_history=tuple(history),
        iterations=iterations,
    )
