import numpy as np
import pytest

from lumenrec.mesh import PointCloud, TriangleMesh, read_ply, sample_mesh_points, write_ply
from lumenrec.recon import cloud_mesh_distance
from lumenrec.recon.meshdist import point_triangle_distances


def icosphere(subdivisions=2, radius=1.0):
    """Subdivided icosahedron on the sphere of the given radius."""
    phi = (1 + np.sqrt(5)) / 2
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = (verts[i] + verts[j]) / 2
                m = m / np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts) * radius, np.array(faces, dtype=np.int64))


def brute_force_distance(points, mesh):
    """All-triangles scan, no spatial index."""
    tri = mesh.triangles
    A = mesh.vertices[tri[:, 0]]
    B = mesh.vertices[tri[:, 1]]
    C = mesh.vertices[tri[:, 2]]
    out = np.empty(len(points))
    for i, p in enumerate(points):
        reps = np.broadcast_to(p, A.shape)
        out[i] = point_triangle_distances(np.ascontiguousarray(reps), A, B, C).min()
    return out


def test_cloud_on_surface_zero():
    mesh = icosphere(2)
    cloud = sample_mesh_points(mesh, 500, np.random.default_rng(0))
    m = cloud_mesh_distance(cloud, mesh)
    assert m.mean_distance < 1e-9
    assert m.std_distance < 1e-9


def test_offset_plane():
    verts = np.array([[0, 0, 0], [10, 0, 0], [10, 10, 0], [0, 10, 0]], dtype=float)
    mesh = TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]))
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(1, 9, 200), rng.uniform(1, 9, 200), np.ones(200)])
    m = cloud_mesh_distance(PointCloud(pts), mesh)
    assert m.mean_distance == pytest.approx(1.0, abs=1e-12)
    assert m.std_distance == pytest.approx(0.0, abs=1e-12)


def test_matches_brute_force_on_icosphere():
    mesh = icosphere(1)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-2, 2, (300, 3))
    accel = cloud_mesh_distance(PointCloud(pts), mesh)
    oracle = brute_force_distance(pts, mesh)
    assert accel.mean_distance == pytest.approx(oracle.mean(), abs=1e-9)
    assert accel.std_distance == pytest.approx(oracle.std(), abs=1e-9)


def test_rigid_invariance():
    from lumenrec.core import SixDof, pose_from_6dof

    mesh = icosphere(1)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.5, 1.5, (200, 3))
    base = cloud_mesh_distance(PointCloud(pts), mesh)
    pose = pose_from_6dof(SixDof([0.4, -0.2, 0.9], [3.0, -1.0, 2.0]))
    moved_mesh = TriangleMesh(pose.apply(mesh.vertices), mesh.triangles)
    moved = cloud_mesh_distance(PointCloud(pose.apply(pts)), moved_mesh)
    assert moved.mean_distance == pytest.approx(base.mean_distance, abs=1e-9)
    assert moved.std_distance == pytest.approx(base.std_distance, abs=1e-9)


def test_empty_inputs_rejected():
    mesh = icosphere(0)
    with pytest.raises(ValueError):
        cloud_mesh_distance(PointCloud(np.zeros((0, 3))), mesh)


def test_ply_round_trip(tmp_path):
    mesh = icosphere(1)
    write_ply(mesh, tmp_path / "m.ply")
    back = read_ply(tmp_path / "m.ply")
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.allclose(back.vertices, mesh.vertices, atol=0)
