"""Part-labeled sparse voxel grids and the UVOX binary container.

A grid is the set of active cells of an N^3 lattice. Each active voxel may
carry a latent feature vector and a part index in {1..K}. Voxels are always
held in ascending lexicographic (x, y, z) order; that order defines the
token index used everywhere else in the package.

UVOX layout (little-endian throughout):

    magic    4 bytes  b"UVOX"
    version  u32      currently 1
    N        u32      grid resolution
    L        u64      number of active voxels
    C        u32      feature channels (0 if absent)
    K        u32      number of parts (0 if absent)
    flags    u32      bit0 = features present, bit1 = labels present
    coords   L x 3 u32
    labels   L x u8          (only if bit1; requires K <= 255)
    features L x C f32 row-major  (only if bit0)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO

import numpy as np

from .validation import as_coords, as_labels, check_positive_int

UVOX_MAGIC = b"UVOX"
UVOX_VERSION = 1
_FLAG_FEATURES = 1
_FLAG_LABELS = 2
_HEADER = struct.Struct("<4sIIQIII")


class UvoxError(ValueError):
    """Raised when a UVOX stream cannot be encoded or decoded."""


def _canonical_order(coords: np.ndarray) -> np.ndarray:
    """Permutation sorting rows by (x, y, z) ascending."""
    return np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))


@dataclass(frozen=True)
class SparseVoxelGrid:
    """Immutable sparse voxel grid at resolution N.

    The constructor re-sorts coordinates into canonical lexicographic order
    and co-permutes features and labels, so token order is deterministic no
    matter how the rows were produced. Structural consistency (row counts,
    shapes) is enforced here; value-level invariants such as uniqueness and
    coordinate range are checked by :func:`validate`.
    """

    resolution: int
    coords: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    num_parts: int | None = None

    def __post_init__(self):
        resolution = check_positive_int(self.resolution, "resolution")
        coords = as_coords(self.coords)
        n = coords.shape[0]

        features = self.features
        if features is not None:
            features = np.asarray(features, dtype=np.float32)
            if features.ndim != 2:
                raise ValueError(f"features must be 2-D, got shape {features.shape}")
            if features.shape[0] != n:
                raise ValueError(
                    f"features row count {features.shape[0]} != voxel count {n}"
                )
            if features.shape[1] < 1:
                raise ValueError("features must have at least one channel")

        labels = self.labels
        if (labels is None) != (self.num_parts is None):
            raise ValueError("labels and num_parts must be given together")
        num_parts = None
        if labels is not None:
            labels = as_labels(labels)
            if labels.shape[0] != n:
                raise ValueError(f"labels length {labels.shape[0]} != voxel count {n}")
            num_parts = check_positive_int(self.num_parts, "num_parts")

        order = _canonical_order(coords)
        coords = coords[order]
        if features is not None:
            features = features[order]
        if labels is not None:
            labels = labels[order]

        for arr in (coords, features, labels):
            if arr is not None:
                arr.setflags(write=False)

        object.__setattr__(self, "resolution", resolution)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_parts", num_parts)

    @property
    def num_voxels(self) -> int:
        return self.coords.shape[0]

    @property
    def num_channels(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    @property
    def has_features(self) -> bool:
        return self.features is not None

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def with_features(self, features) -> "SparseVoxelGrid":
        """Copy of this grid carrying the given per-voxel features."""
        return replace(self, features=features)

    def with_labels(self, labels, num_parts: int) -> "SparseVoxelGrid":
        """Copy of this grid carrying the given part labels."""
        return replace(self, labels=labels, num_parts=num_parts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVoxelGrid):
            return NotImplemented
        if self.resolution != other.resolution or self.num_parts != other.num_parts:
            return False
        if not np.array_equal(self.coords, other.coords):
            return False
        for a, b in ((self.features, other.features), (self.labels, other.labels)):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def validate(grid: SparseVoxelGrid) -> str | None:
    """Return a description of the first violated invariant, or None if ok."""
    n = grid.resolution
    coords = grid.coords
    low = coords.min(initial=0)
    high = coords.max(initial=0)
    if low < 0 or high >= n:
        bad = np.flatnonzero((coords < 0).any(axis=1) | (coords >= n).any(axis=1))[0]
        return (
            f"coordinate out of range at row {bad}: "
            f"{tuple(int(v) for v in coords[bad])} with resolution {n}"
        )
    if coords.shape[0] > 1:
        dup = np.flatnonzero((coords[1:] == coords[:-1]).all(axis=1))
        if dup.size:
            i = int(dup[0])
            return f"duplicate coordinate at rows {i},{i + 1}"
    if grid.labels is not None:
        k = grid.num_parts
        bad = np.flatnonzero((grid.labels < 1) | (grid.labels > k))
        if bad.size:
            i = int(bad[0])
            return f"label out of range at row {i}: {int(grid.labels[i])} with num_parts {k}"
    if grid.features is not None and not np.isfinite(grid.features).all():
        i = int(np.flatnonzero(~np.isfinite(grid.features).all(axis=1))[0])
        return f"non-finite feature at row {i}"
    return None


@dataclass(frozen=True)
class PartLabeling:
    """Per-token part assignment with group bookkeeping.

    ``group_token_indices[g]`` lists, in ascending order, the token indices
    labeled g+1; the lists partition {0..L-1}.
    """

    labels: np.ndarray
    num_parts: int
    group_sizes: np.ndarray = field(init=False)
    group_token_indices: tuple = field(init=False)

    def __post_init__(self):
        labels = as_labels(self.labels)
        num_parts = check_positive_int(self.num_parts, "num_parts")
        if labels.size and (labels.min() < 1 or labels.max() > num_parts):
            raise ValueError(f"labels must lie in 1..{num_parts}")
        groups = tuple(
            np.flatnonzero(labels == g) for g in range(1, num_parts + 1)
        )
        sizes = np.array([g.size for g in groups], dtype=np.int64)
        labels.setflags(write=False)
        sizes.setflags(write=False)
        for g in groups:
            g.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_parts", num_parts)
        object.__setattr__(self, "group_sizes", sizes)
        object.__setattr__(self, "group_token_indices", groups)

    @property
    def num_tokens(self) -> int:
        return self.labels.shape[0]

    @classmethod
    def from_grid(cls, grid: SparseVoxelGrid) -> "PartLabeling":
        if grid.labels is None:
            raise ValueError("grid has no labels")
        return cls(grid.labels, grid.num_parts)


def write_uvox(grid: SparseVoxelGrid, dest: BinaryIO) -> int:
    """Serialize a grid, returning the number of bytes written."""
    violation = validate(grid)
    if violation is not None:
        raise UvoxError(f"refusing to write invalid grid: {violation}")
    k = grid.num_parts or 0
    if k > 255:
        raise UvoxError(f"num_parts {k} exceeds UVOX u8 label limit of 255")
    c = grid.num_channels
    flags = (_FLAG_FEATURES if grid.has_features else 0) | (
        _FLAG_LABELS if grid.has_labels else 0
    )
    header = _HEADER.pack(
        UVOX_MAGIC, UVOX_VERSION, grid.resolution, grid.num_voxels, c, k, flags
    )
    written = dest.write(header)
    written += dest.write(np.ascontiguousarray(grid.coords, dtype="<u4").tobytes())
    if grid.has_labels:
        written += dest.write(np.ascontiguousarray(grid.labels, dtype="<u1").tobytes())
    if grid.has_features:
        written += dest.write(
            np.ascontiguousarray(grid.features, dtype="<f4").tobytes()
        )
    return written


def _read_exact(src: BinaryIO, count: int, what: str) -> bytes:
    data = src.read(count)
    if len(data) != count:
        raise UvoxError(
            f"truncated payload: expected {count} bytes for {what}, got {len(data)}"
        )
    return data


def read_uvox(src: BinaryIO) -> SparseVoxelGrid:
    """Decode a grid from a binary stream.

    Reads exactly one grid; trailing bytes are left unread. Raises
    :class:`UvoxError` on a bad magic, an unsupported version, a truncated
    payload, or a decoded grid that violates the invariants.
    """
    header = _read_exact(src, _HEADER.size, "header")
    magic, version, n, length, c, k, flags = _HEADER.unpack(header)
    if magic != UVOX_MAGIC:
        raise UvoxError(f"bad magic {magic!r}")
    if version != UVOX_VERSION:
        raise UvoxError(f"unsupported version {version}")
    has_features = bool(flags & _FLAG_FEATURES)
    has_labels = bool(flags & _FLAG_LABELS)
    if has_features != (c > 0) or has_labels != (k > 0):
        raise UvoxError(
            f"flags {flags:#x} inconsistent with header (C={c}, K={k})"
        )
    if flags & ~(_FLAG_FEATURES | _FLAG_LABELS):
        raise UvoxError(f"unknown flag bits in {flags:#x}")

    coords = np.frombuffer(
        _read_exact(src, length * 12, "coords"), dtype="<u4"
    ).reshape(length, 3)
    if coords.size and coords.max() > np.iinfo(np.int32).max:
        raise UvoxError("coordinate exceeds supported range")
    labels = None
    if has_labels:
        labels = np.frombuffer(_read_exact(src, length, "labels"), dtype="<u1")
    features = None
    if has_features:
        features = np.frombuffer(
            _read_exact(src, length * c * 4, "features"), dtype="<f4"
        ).reshape(length, c)

    try:
        grid = SparseVoxelGrid(
            resolution=n,
            coords=coords.astype(np.int32),
            features=features,
            labels=None if labels is None else labels.astype(np.int32),
            num_parts=k if has_labels else None,
        )
    except ValueError as exc:
        raise UvoxError(f"invariant violation after decode: {exc}") from exc
    violation = validate(grid)
    if violation is not None:
        raise UvoxError(f"invariant violation after decode: {violation}")
    return grid


def save_uvox(grid: SparseVoxelGrid, path) -> int:
    with open(path, "wb") as fh:
        return write_uvox(grid, fh)


def load_uvox(path) -> SparseVoxelGrid:
    with open(path, "rb") as fh:
        return read_uvox(fh)
