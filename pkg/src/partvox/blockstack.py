"""Residual attention blocks over sparse voxels: coarse full + per-part.

The repeating unit is one full-attention block at half resolution followed
by three part-restricted blocks. Part blocks never move information across
part boundaries; the downsample/attend/upsample residual is the only
cross-part channel, and it costs little because the coarse grid holds at
most one eighth of the tokens.

Blocks are parameter-free (q = k = v = features, residual addition): the
point is to verify the attention routing, not trained behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionInstance, dense_attention, part_self_attention
from .validation import as_float_matrix, check_positive_int
from .voxgrid import SparseVoxelGrid


@dataclass(frozen=True)
class StackConfig:
    """Shape of the block stack; seed feeds synthetic-feature drivers."""

    units: int
    channels: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "units", check_positive_int(self.units, "units"))
        object.__setattr__(
            self, "channels", check_positive_int(self.channels, "channels")
        )
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def value_channels(self) -> int:
        return self.channels

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.channels)


@dataclass(frozen=True)
class CoarseMap:
    """Fine-to-coarse pairing: parent row index per fine voxel."""

    parent_index: np.ndarray  # (L,) indices into the coarse grid's rows
    coarse: SparseVoxelGrid

    def __post_init__(self):
        parents = np.asarray(self.parent_index, dtype=np.int64)
        if parents.ndim != 1:
            raise ValueError("parent_index must be 1-D")
        count = self.coarse.num_voxels
        expected = np.arange(count)
        if not np.array_equal(np.unique(parents), expected):
            raise ValueError("every coarse voxel needs at least one fine child")
        parents.setflags(write=False)
        object.__setattr__(self, "parent_index", parents)

    @property
    def num_fine(self) -> int:
        return self.parent_index.shape[0]


def _coarse_structure(
    coords: np.ndarray, resolution: int
) -> tuple[np.ndarray, np.ndarray]:
    """Half-resolution coordinates plus each fine voxel's parent row."""
    if resolution % 2:
        raise ValueError(f"resolution must be even, got {resolution}")
    half = resolution // 2
    parents = coords.astype(np.int64) // 2
    keys = (parents[:, 0] * half + parents[:, 1]) * half + parents[:, 2]
    uniq, parent_index = np.unique(keys, return_inverse=True)
    x, rem = np.divmod(uniq, half * half)
    y, z = np.divmod(rem, half)
    coarse_coords = np.column_stack([x, y, z]).astype(np.int32)
    return coarse_coords, parent_index.astype(np.int64)


def _pool_mean(
    parent_index: np.ndarray, num_coarse: int, features: np.ndarray
) -> np.ndarray:
    """Mean of each parent's children, accumulated in parent order."""
    order = np.argsort(parent_index, kind="stable")
    sorted_parents = parent_index[order]
    starts = np.searchsorted(sorted_parents, np.arange(num_coarse))
    sums = np.add.reduceat(features[order], starts, axis=0)
    counts = np.bincount(parent_index, minlength=num_coarse).astype(np.float64)
    return sums / counts[:, None]


def downsample(grid: SparseVoxelGrid) -> CoarseMap:
    """Pool a feature-carrying grid one level down (N -> N/2).

    A coarse voxel is active iff any of its up-to-eight children is; its
    feature is the mean over active children.
    """
    if grid.features is None:
        raise ValueError("downsample requires per-voxel features")
    coarse_coords, parent_index = _coarse_structure(grid.coords, grid.resolution)
    pooled = _pool_mean(
        parent_index, coarse_coords.shape[0], grid.features.astype(np.float64)
    )
    coarse = SparseVoxelGrid(
        grid.resolution // 2, coarse_coords, features=pooled
    )
    return CoarseMap(parent_index=parent_index, coarse=coarse)


def upsample(cmap: CoarseMap, coarse_features) -> np.ndarray:
    """Copy each parent's feature row to all of its fine children."""
    features = as_float_matrix(coarse_features, "coarse_features")
    if features.shape[0] != cmap.coarse.num_voxels:
        raise ValueError(
            f"coarse feature rows {features.shape[0]} != "
            f"coarse voxel count {cmap.coarse.num_voxels}"
        )
    return features[cmap.parent_index]


def coarse_full_block(
    grid: SparseVoxelGrid, features, scale: float | None = None
) -> np.ndarray:
    """Residual full attention at half resolution.

    out = features + upsample(full attention over pooled coarse features).
    This is the cross-part communication channel of the stack.
    """
    features = as_float_matrix(features, "features")
    if features.shape[0] != grid.num_voxels:
        raise ValueError(
            f"feature rows {features.shape[0]} != voxel count {grid.num_voxels}"
        )
    if scale is None:
        scale = 1.0 / math.sqrt(features.shape[1])
    coarse_coords, parent_index = _coarse_structure(grid.coords, grid.resolution)
    if features.shape[0] == 0:
        return features.copy()
    pooled = _pool_mean(parent_index, coarse_coords.shape[0], features)
    mixed = dense_attention(pooled, pooled, pooled, scale)
    return features + mixed[parent_index]


def part_block(
    grid: SparseVoxelGrid, features, scale: float | None = None
) -> np.ndarray:
    """Residual part-restricted self attention at full resolution."""
    if grid.labels is None:
        raise ValueError("part_block requires part labels")
    features = as_float_matrix(features, "features")
    if features.shape[0] != grid.num_voxels:
        raise ValueError(
            f"feature rows {features.shape[0]} != voxel count {grid.num_voxels}"
        )
    if scale is None:
        scale = 1.0 / math.sqrt(features.shape[1])
    instance = AttentionInstance(
        features, features, features, grid.labels, scale=scale
    )
    return features + part_self_attention(instance)


def run_stack(grid: SparseVoxelGrid, features, config: StackConfig) -> np.ndarray:
    """Apply ``units`` repeats of [coarse full, part, part, part]."""
    if grid.labels is None:
        raise ValueError("run_stack requires part labels")
    features = as_float_matrix(features, "features")
    if features.shape[1] != config.channels:
        raise ValueError(
            f"features have {features.shape[1]} channels, config expects "
            f"{config.channels}"
        )
    out = features
    for _ in range(config.units):
        out = coarse_full_block(grid, out, scale=config.scale)
        for _ in range(3):
            out = part_block(grid, out, scale=config.scale)
    return out
