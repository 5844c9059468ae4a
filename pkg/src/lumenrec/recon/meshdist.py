"""Exact point-to-mesh distances (cloud-mesh evaluation).

Per-point distances are exact point-to-triangle distances; a KD-tree over
triangle centroids prunes candidates conservatively (the nearest-vertex
distance is an upper bound, so no triangle that could be closer is skipped).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..mesh import PointCloud, TriangleMesh


@dataclass(frozen=True)
class ReconMetrics:
    mean_distance: float
    std_distance: float
    n_points: int = 0

    def __post_init__(self):
        if self.mean_distance < 0 or self.std_distance < 0:
            raise ValueError("distances must be non-negative")

    def as_dict(self) -> dict:
        return {
            "mean": self.mean_distance,
            "std": self.std_distance,
            "n_points": self.n_points,
        }


def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Vectorized closest point on triangle (a, b, c) for each row of p."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def settle(cond, value):
        nonlocal done
        use = cond & ~done
        out[use] = value[use]
        done = done | use

    settle((d1 <= 0) & (d2 <= 0), a)
    settle((d3 >= 0) & (d4 <= d3), b)
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab)
    settle((d6 >= 0) & (d5 <= d6), c)
    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac)
    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
    settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + t_bc[:, None] * (c - b))
    total = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(total != 0, 1.0 / total, 0.0)
    interior = a + (vb * inv)[:, None] * ab + (vc * inv)[:, None] * ac
    settle(np.ones(len(p), dtype=bool), interior)
    return out


def point_triangle_distances(points: np.ndarray, tri_a, tri_b, tri_c) -> np.ndarray:
    closest = closest_point_on_triangles(points, tri_a, tri_b, tri_c)
    return np.linalg.norm(points - closest, axis=1)


def cloud_mesh_distance(cloud: PointCloud, mesh: TriangleMesh, chunk: int = 2048) -> ReconMetrics:
    """Mean and population standard deviation of exact point-to-mesh distances."""
    if len(cloud) == 0 or mesh.is_empty:
        raise ValueError("cloud and mesh must be non-empty")
    pts = cloud.points
    tri = mesh.triangles
    A = mesh.vertices[tri[:, 0]]
    B = mesh.vertices[tri[:, 1]]
    C = mesh.vertices[tri[:, 2]]
    centroids = (A + B + C) / 3.0
    tri_radius = np.maximum(
        np.linalg.norm(A - centroids, axis=1),
        np.maximum(np.linalg.norm(B - centroids, axis=1), np.linalg.norm(C - centroids, axis=1)),
    )
    r_max = float(tri_radius.max())
    used_vertex_ids = np.unique(tri.reshape(-1))
    vertex_tree = cKDTree(mesh.vertices[used_vertex_ids])
    centroid_tree = cKDTree(centroids)

    distances = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        block = pts[start : start + chunk]
        upper, _ = vertex_tree.query(block, workers=-1)
        candidates = centroid_tree.query_ball_point(block, upper + r_max + 1e-12, workers=-1)
        counts = np.array([len(c) for c in candidates])
        flat = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates])
        rows = np.repeat(np.arange(len(block)), counts)
        d = point_triangle_distances(block[rows], A[flat], B[flat], C[flat])
        best = np.full(len(block), np.inf)
        np.minimum.at(best, rows, d)
        distances[start : start + chunk] = best
    return ReconMetrics(
        mean_distance=float(distances.mean()),
        std_distance=float(distances.std()),
        n_points=len(pts),
    )
