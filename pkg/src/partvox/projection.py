"""Pinhole projection of voxel part groups onto an image's patch-token grid.

Voxel centers live in the normalized [-0.5, 0.5]^3 object cube. A camera
maps them to pixels (+z forward, image origin top-left, v growing
downward); each P x P pixel patch is one image token, and a token's part
set collects the labels of every voxel landing inside it. No depth test:
occluded voxels still contribute, which only enlarges the sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .validation import check_positive_int
from .voxgrid import SparseVoxelGrid


@dataclass(frozen=True)
class CameraParams:
    """Pinhole intrinsics and extrinsics plus the patch-token layout."""

    rotation: np.ndarray  # (3, 3) world-to-camera
    translation: np.ndarray  # (3,)
    focal: float  # pixels
    principal_point: tuple[float, float]  # (cx, cy) pixels
    image_size: tuple[int, int]  # (W, H) pixels
    patch_size: int = 14

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if np.abs(rotation @ rotation.T - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal within 1e-6")
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        focal = float(self.focal)
        if not (focal > 0):
            raise ValueError(f"focal must be positive, got {focal}")
        cx, cy = (float(c) for c in self.principal_point)
        width, height = (int(s) for s in self.image_size)
        if width < 1 or height < 1:
            raise ValueError("image size must be positive")
        patch = check_positive_int(self.patch_size, "patch_size")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "focal", focal)
        object.__setattr__(self, "principal_point", (cx, cy))
        object.__setattr__(self, "image_size", (width, height))
        object.__setattr__(self, "patch_size", patch)

    @property
    def token_grid_shape(self) -> tuple[int, int]:
        """(rows, cols) of the patch-token grid covering the image."""
        width, height = self.image_size
        return (
            math.ceil(height / self.patch_size),
            math.ceil(width / self.patch_size),
        )

    @property
    def num_tokens(self) -> int:
        rows, cols = self.token_grid_shape
        return rows * cols


@dataclass(frozen=True)
class ImageTokenMask:
    """Per image token, the set of part indices projected into it."""

    token_grid_shape: tuple[int, int]
    part_sets: tuple  # frozenset per token, row-major

    def __post_init__(self):
        rows, cols = (int(v) for v in self.token_grid_shape)
        if rows < 1 or cols < 1:
            raise ValueError("token grid shape must be positive")
        sets = tuple(frozenset(int(p) for p in s) for s in self.part_sets)
        if len(sets) != rows * cols:
            raise ValueError(
                f"{len(sets)} part sets for a {rows}x{cols} token grid"
            )
        if any(p < 1 for s in sets for p in s):
            raise ValueError("part indices must be >= 1")
        object.__setattr__(self, "token_grid_shape", (rows, cols))
        object.__setattr__(self, "part_sets", sets)

    @property
    def num_tokens(self) -> int:
        return len(self.part_sets)

    def boolean_mask(self, query_labels) -> np.ndarray:
        """(L, M) admissibility mask: entry (i, j) iff label_i in set_j."""
        labels = np.asarray(query_labels)
        mask = np.zeros((labels.shape[0], len(self.part_sets)), dtype=bool)
        for j, s in enumerate(self.part_sets):
            if s:
                mask[:, j] = np.isin(labels, sorted(s))
        return mask


def project_voxel(
    coord, resolution: int, camera: CameraParams
) -> tuple[float, float] | None:
    """Project one voxel center; None when behind the camera or off-image.

    Scalar reference path, intentionally independent of the vectorized
    projection used by :func:`build_token_mask`.
    """
    n = check_positive_int(resolution, "resolution")
    x, y, z = (float(c) for c in coord)
    wx = (x + 0.5) / n - 0.5
    wy = (y + 0.5) / n - 0.5
    wz = (z + 0.5) / n - 0.5
    r = camera.rotation
    t = camera.translation
    cx3 = r[0, 0] * wx + r[0, 1] * wy + r[0, 2] * wz + t[0]
    cy3 = r[1, 0] * wx + r[1, 1] * wy + r[1, 2] * wz + t[1]
    cz3 = r[2, 0] * wx + r[2, 1] * wy + r[2, 2] * wz + t[2]
    if cz3 <= 0.0:
        return None
    u = camera.focal * cx3 / cz3 + camera.principal_point[0]
    v = camera.focal * cy3 / cz3 + camera.principal_point[1]
    width, height = camera.image_size
    if not (0.0 <= u < width and 0.0 <= v < height):
        return None
    return (u, v)


def _project_all(
    coords: np.ndarray, resolution: int, camera: CameraParams
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection: (L, 2) pixel coords and an inside mask."""
    world = (coords.astype(np.float64) + 0.5) / resolution - 0.5
    cam = world @ camera.rotation.T + camera.translation
    in_front = cam[:, 2] > 0.0
    uv = np.full((coords.shape[0], 2), np.nan)
    depth = np.where(in_front, cam[:, 2], 1.0)
    uv[:, 0] = camera.focal * cam[:, 0] / depth + camera.principal_point[0]
    uv[:, 1] = camera.focal * cam[:, 1] / depth + camera.principal_point[1]
    width, height = camera.image_size
    inside = (
        in_front
        & (uv[:, 0] >= 0.0)
        & (uv[:, 0] < width)
        & (uv[:, 1] >= 0.0)
        & (uv[:, 1] < height)
    )
    return uv, inside


def build_token_mask(grid: SparseVoxelGrid, camera: CameraParams) -> ImageTokenMask:
    """Collect, for every patch token, the part indices projected into it.

    Every voxel contributes through its center point alone; multiple parts
    landing in one patch union into that token's set.
    """
    if grid.labels is None:
        raise ValueError("grid has no labels")
    rows, cols = camera.token_grid_shape
    uv, inside = _project_all(grid.coords, grid.resolution, camera)
    patch = camera.patch_size
    col = np.floor(uv[inside, 0] / patch).astype(np.int64)
    row = np.floor(uv[inside, 1] / patch).astype(np.int64)
    tokens = row * cols + col
    labels = grid.labels[inside].astype(np.int64)
    sets: list[set] = [set() for _ in range(rows * cols)]
    pairs = np.unique(np.stack([tokens, labels], axis=1), axis=0)
    for token, label in pairs:
        sets[int(token)].add(int(label))
    return ImageTokenMask((rows, cols), tuple(frozenset(s) for s in sets))


def write_camera(camera: CameraParams, dest: TextIO) -> None:
    """Write the whitespace camera format: R row-major, t, f, cx, cy, W, H, P."""
    r = camera.rotation
    values = [repr(float(r[i, j])) for i in range(3) for j in range(3)]
    values += [repr(float(v)) for v in camera.translation]
    values.append(repr(camera.focal))
    values += [repr(float(c)) for c in camera.principal_point]
    values += [str(v) for v in camera.image_size]
    values.append(str(camera.patch_size))
    dest.write(" ".join(values) + "\n")


def read_camera(src: TextIO) -> CameraParams:
    """Parse the whitespace camera format (18 numbers, any line layout)."""
    tokens = src.read().split()
    if len(tokens) != 18:
        raise ValueError(f"camera file must hold 18 numbers, got {len(tokens)}")
    vals = [float(t) for t in tokens]
    return CameraParams(
        rotation=np.array(vals[0:9]).reshape(3, 3),
        translation=np.array(vals[9:12]),
        focal=vals[12],
        principal_point=(vals[13], vals[14]),
        image_size=(int(vals[15]), int(vals[16])),
        patch_size=int(vals[17]),
    )


def load_camera(path) -> CameraParams:
    with open(path, "r", encoding="utf-8") as fh:
        return read_camera(fh)


def save_camera(camera: CameraParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_camera(camera, fh)


def write_token_mask(mask: ImageTokenMask, dest: TextIO) -> None:
    """One line per token: ``j: g1 g2 ...`` with parts ascending."""
    for j, s in enumerate(mask.part_sets):
        parts = " ".join(str(p) for p in sorted(s))
        dest.write(f"{j}: {parts}".rstrip() + "\n")


def read_token_mask(src: TextIO, token_grid_shape: tuple[int, int]) -> ImageTokenMask:
    """Parse the text produced by :func:`write_token_mask`."""
    sets: dict[int, frozenset] = {}
    for line in src:
        line = line.strip()
        if not line:
            continue
        head, _, tail = line.partition(":")
        sets[int(head)] = frozenset(int(p) for p in tail.split())
    rows, cols = token_grid_shape
    count = rows * cols
    if sorted(sets) != list(range(count)):
        raise ValueError(f"token mask must list tokens 0..{count - 1} exactly")
    return ImageTokenMask(token_grid_shape, tuple(sets[j] for j in range(count)))
