"""Triangle meshes and point clouds with ASCII PLY persistence."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float, meters
    triangles: np.ndarray  # (T, 3) int indices into vertices

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if v.size and not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices must be finite")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle indices out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def drop_degenerate(self, min_area: float = 1e-12) -> "TriangleMesh":
        if self.is_empty:
            return self
        keep = self.triangle_areas() > min_area
        return TriangleMesh(self.vertices, self.triangles[keep])


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) float, meters

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        if p.size and not np.all(np.isfinite(p)):
            raise ValueError("cloud points must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)


def write_ply(mesh: TriangleMesh, path) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_ply(path) -> TriangleMesh:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vert = n_face = 0
    i = 0
    for i, line in enumerate(text):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n_vert = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            n_face = int(parts[2])
        elif parts and parts[0] == "end_header":
            break
    body = text[i + 1 :]
    verts = np.array([[float(x) for x in body[j].split()[:3]] for j in range(n_vert)])
    faces = np.array(
        [[int(x) for x in body[n_vert + j].split()[1:4]] for j in range(n_face)], dtype=np.int64
    )
    return TriangleMesh(verts.reshape(-1, 3), faces.reshape(-1, 3))


def sample_mesh_points(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> PointCloud:
    """Uniform-by-area surface samples."""
    areas = mesh.triangle_areas()
    probs = areas / areas.sum()
    idx = rng.choice(len(areas), size=n, p=probs)
    a, b, c = (mesh.vertices[mesh.triangles[idx, i]] for i in range(3))
    u = rng.random((n, 1))
    v = rng.random((n, 1))
    flip = (u + v) > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    return PointCloud(a + u * (b - a) + v * (c - a))
