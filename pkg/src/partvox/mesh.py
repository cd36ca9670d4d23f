"""Triangle meshes: wavefront-style loading, normalization, surface sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import as_float_matrix, check_positive_int


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup in model units."""

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64 vertex indices

    def __post_init__(self):
        vertices = as_float_matrix(self.vertices, "vertices")
        if vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {vertices.shape}")
        triangles = np.asarray(self.triangles, dtype=np.int64)
        if triangles.size == 0:
            triangles = np.zeros((0, 3), dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError(f"triangles must be (T, 3), got {triangles.shape}")
        if triangles.size and (
            triangles.min() < 0 or triangles.max() >= vertices.shape[0]
        ):
            raise ValueError("triangle vertex index out of range")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True)
class PointSampleSet:
    """Surface samples in the normalized [-0.5, 0.5]^3 object cube.

    ``features`` optionally carries one feature row per point, e.g. loaded
    from an external per-point feature file.
    """

    positions: np.ndarray  # (S, 3) float64
    features: np.ndarray | None = None  # (S, F)

    def __post_init__(self):
        positions = as_float_matrix(self.positions, "positions")
        if positions.shape[1] != 3:
            raise ValueError(f"positions must be (S, 3), got {positions.shape}")
        features = self.features
        if features is not None:
            features = np.asarray(features, dtype=np.float32)
            if features.ndim != 2 or features.shape[0] != positions.shape[0]:
                raise ValueError(
                    "features must be (S, F) aligned with positions, got "
                    f"{features.shape} for S={positions.shape[0]}"
                )
        positions.setflags(write=False)
        if features is not None:
            features.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "features", features)

    @property
    def num_points(self) -> int:
        return self.positions.shape[0]

    def with_features(self, features) -> "PointSampleSet":
        return PointSampleSet(self.positions, features)


def load_obj(path) -> TriangleMesh:
    """Read a wavefront-style mesh: ``v x y z`` and ``f i j k ...`` lines.

    Polygons with more than three vertices are triangulated fan-wise around
    the first vertex. Indices are 1-based; negative indices count back from
    the vertices read so far. Attribute suffixes (``f 1/2/3``) are ignored.
    """
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: malformed vertex line")
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "f":
                idx = []
                for token in parts[1:]:
                    raw = token.split("/")[0]
                    if not raw:
                        raise ValueError(f"{path}:{lineno}: malformed face token")
                    i = int(raw)
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ValueError(f"{path}:{lineno}: face needs >= 3 vertices")
                for a, b in zip(idx[1:-1], idx[2:]):
                    faces.append((idx[0], a, b))
    return TriangleMesh(
        np.asarray(vertices, dtype=np.float64).reshape(len(vertices), 3),
        np.asarray(faces, dtype=np.int64).reshape(len(faces), 3),
    )


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write a minimal wavefront file (vertices and triangular faces only)."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Scale and translate so the bounding box is centered with longest side 1.

    The result fits inside [-0.5, 0.5]^3. Raises on a zero-extent bounding
    box since the scale would be undefined.
    """
    if mesh.num_vertices == 0:
        raise ValueError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise ValueError("mesh bounding box has zero extent")
    center = (hi + lo) / 2.0
    return TriangleMesh((mesh.vertices - center) / extent, mesh.triangles)


def triangle_areas(mesh: TriangleMesh) -> np.ndarray:
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0) -> PointSampleSet:
    """Draw ``count`` points uniformly over the surface, area-weighted.

    Deterministic for a fixed seed: triangle choice and barycentric
    coordinates both come from one seeded generator.
    """
    count = check_positive_int(count, "count")
    areas = triangle_areas(mesh)
    total = float(areas.sum())
    if total <= 0.0:
        raise ValueError("mesh has no triangle with positive area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(mesh.num_triangles, size=count, p=areas / total)
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    # Square-root trick: uniform density over each triangle's interior.
    s = np.sqrt(rng.random(count))[:, None]
    t = rng.random(count)[:, None]
    points = (1.0 - s) * a + s * (1.0 - t) * b + s * t * c
    return PointSampleSet(points)
