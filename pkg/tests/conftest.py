"""Shared fixtures: synthetic meshes and grid builders."""

import numpy as np
import pytest

from partvox import SparseVoxelGrid, TriangleMesh


def uv_sphere(center, radius, n_theta=24, n_phi=48):
    """Closed UV-sphere triangle mesh around ``center``."""
    cx, cy, cz = center
    verts = []
    faces = []
    for i in range(1, n_theta):
        theta = np.pi * i / n_theta
        for j in range(n_phi):
            phi = 2.0 * np.pi * j / n_phi
            verts.append(
                [
                    radius * np.sin(theta) * np.cos(phi) + cx,
                    radius * np.sin(theta) * np.sin(phi) + cy,
                    radius * np.cos(theta) + cz,
                ]
            )
    top = len(verts)
    verts.append([cx, cy, cz + radius])
    bottom = len(verts)
    verts.append([cx, cy, cz - radius])

    def vid(i, j):
        return (i - 1) * n_phi + (j % n_phi)

    for j in range(n_phi):
        faces.append([top, vid(1, j), vid(1, j + 1)])
        faces.append([bottom, vid(n_theta - 1, j + 1), vid(n_theta - 1, j)])
    for i in range(1, n_theta - 1):
        for j in range(n_phi):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    return np.asarray(verts), np.asarray(faces)


def sphere_row_mesh(centers, radius) -> TriangleMesh:
    """One mesh holding disjoint spheres at the given centers."""
    all_verts = []
    all_faces = []
    offset = 0
    for center in centers:
        v, f = uv_sphere(center, radius)
        all_verts.append(v)
        all_faces.append(f + offset)
        offset += len(v)
    return TriangleMesh(np.vstack(all_verts), np.vstack(all_faces))


@pytest.fixture(scope="session")
def two_spheres_mesh() -> TriangleMesh:
    """Two well-separated spheres: gap far exceeds the sphere diameter."""
    return sphere_row_mesh([(-0.35, 0.0, 0.0), (0.35, 0.0, 0.0)], 0.1)


@pytest.fixture(scope="session")
def eight_spheres_mesh() -> TriangleMesh:
    """Eight equal spheres in a row; clusters cleanly into eight parts."""
    centers = [(-0.42 + 0.12 * i, 0.0, 0.0) for i in range(8)]
    return sphere_row_mesh(centers, 0.04)


def random_valid_grid(rng: np.random.Generator) -> SparseVoxelGrid:
    """Random grid with independently random features/labels presence."""
    n = int(rng.integers(1, 33))
    max_count = min(n**3, 64)
    count = int(rng.integers(0, max_count + 1))
    keys = rng.choice(n**3, size=count, replace=False)
    x, rem = np.divmod(keys, n * n)
    y, z = np.divmod(rem, n)
    coords = np.column_stack([x, y, z]).astype(np.int32)
    features = None
    if rng.random() < 0.5:
        channels = int(rng.integers(1, 9))
        features = rng.standard_normal((count, channels)).astype(np.float32)
    labels = None
    num_parts = None
    if rng.random() < 0.5:
        num_parts = int(rng.integers(1, 17))
        labels = rng.integers(1, num_parts + 1, size=count).astype(np.int32)
    return SparseVoxelGrid(
        n, coords, features=features, labels=labels, num_parts=num_parts
    )
