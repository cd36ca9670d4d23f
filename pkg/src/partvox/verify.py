"""Randomized equivalence suites: blocked paths against masked references.

Each suite draws seeded random problems and checks the fast route against
an independent reference: part attention against the masked dense path,
the token-mask builder against a per-voxel scalar projection loop, and the
block stack against compositions of its primitive ops plus the cross-part
isolation guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionInstance,
    full_attention,
    part_cross_attention,
    part_self_attention,
)
from .blockstack import coarse_full_block, downsample, part_block, upsample
from .projection import CameraParams, build_token_mask, project_voxel
from .voxgrid import SparseVoxelGrid

DEFAULT_TOLERANCE = 1e-5


@dataclass(frozen=True)
class VerifyResult:
    """Outcome of one suite: cases passed, cases run, worst error seen."""

    name: str
    passed: int
    total: int
    max_error: float

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def max_relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """Worst absolute deviation relative to the reference's largest entry."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    if actual.shape != expected.shape:
        return np.inf
    if actual.size == 0:
        return 0.0
    denom = max(float(np.abs(expected).max()), 1e-300)
    return float(np.abs(actual - expected).max() / denom)


def label_mask(labels: np.ndarray) -> np.ndarray:
    """(L, L) admissibility for self attention: same part index."""
    labels = np.asarray(labels)
    return labels[:, None] == labels[None, :]


def part_set_mask(labels: np.ndarray, key_part_sets) -> np.ndarray:
    """(L, M) admissibility for cross attention: label in the key's set."""
    labels = np.asarray(labels)
    mask = np.zeros((labels.shape[0], len(key_part_sets)), dtype=bool)
    for j, s in enumerate(key_part_sets):
        if s:
            mask[:, j] = np.isin(labels, sorted(s))
    return mask


def random_self_instance(
    rng: np.random.Generator,
    min_tokens: int = 16,
    max_tokens: int = 2048,
    max_parts: int = 16,
    min_dim: int = 8,
    max_dim: int = 64,
) -> AttentionInstance:
    tokens = int(rng.integers(min_tokens, max_tokens + 1))
    parts = int(rng.integers(1, max_parts + 1))
    dim = int(rng.integers(min_dim, max_dim + 1))
    value_dim = int(rng.integers(min_dim, max_dim + 1))
    labels = rng.integers(1, parts + 1, size=tokens)
    return AttentionInstance(
        rng.standard_normal((tokens, dim)),
        rng.standard_normal((tokens, dim)),
        rng.standard_normal((tokens, value_dim)),
        labels,
    )


def random_cross_instance(
    rng: np.random.Generator,
    min_tokens: int = 16,
    max_tokens: int = 2048,
    max_parts: int = 16,
    min_dim: int = 8,
    max_dim: int = 64,
) -> AttentionInstance:
    tokens = int(rng.integers(min_tokens, max_tokens + 1))
    keys = int(rng.integers(min_tokens, max_tokens + 1))
    parts = int(rng.integers(1, max_parts + 1))
    dim = int(rng.integers(min_dim, max_dim + 1))
    value_dim = int(rng.integers(min_dim, max_dim + 1))
    labels = rng.integers(1, parts + 1, size=tokens)
    member = rng.random((keys, parts)) < rng.uniform(0.1, 0.9)
    if parts > 1 and rng.random() < 0.5:
        # Force a part no key admits, exercising the fallback rule.
        member[:, int(rng.integers(parts))] = False
    sets = tuple(
        frozenset(int(p) + 1 for p in np.flatnonzero(member[j]))
        for j in range(keys)
    )
    return AttentionInstance(
        rng.standard_normal((tokens, dim)),
        rng.standard_normal((keys, dim)),
        rng.standard_normal((keys, value_dim)),
        labels,
        key_part_sets=sets,
    )


def random_labeled_grid(
    rng: np.random.Generator,
    resolution: int = 16,
    max_voxels: int = 160,
    max_parts: int = 5,
    channels: int | None = None,
) -> SparseVoxelGrid:
    count = int(rng.integers(2, max_voxels + 1))
    coords = np.unique(
        rng.integers(0, resolution, size=(count, 3)).astype(np.int32), axis=0
    )
    parts = int(rng.integers(2, max_parts + 1))
    labels = rng.integers(1, parts + 1, size=coords.shape[0])
    labels[: min(parts, labels.size)] = np.arange(1, min(parts, labels.size) + 1)
    features = None
    if channels is not None:
        features = rng.standard_normal((coords.shape[0], channels))
    return SparseVoxelGrid(
        resolution, coords, features=features, labels=labels, num_parts=parts
    )


def random_camera(rng: np.random.Generator) -> CameraParams:
    basis, upper = np.linalg.qr(rng.standard_normal((3, 3)))
    basis = basis * np.sign(np.diag(upper))
    translation = np.array(
        [rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(1.0, 3.0)]
    )
    return CameraParams(
        rotation=basis.T,
        translation=translation,
        focal=float(rng.uniform(60.0, 400.0)),
        principal_point=(
            112.0 + float(rng.uniform(-20, 20)),
            112.0 + float(rng.uniform(-20, 20)),
        ),
        image_size=(224, 224),
        patch_size=14,
    )


def verify_self_attention(
    cases: int, seed: int = 0, tolerance: float = DEFAULT_TOLERANCE, impl=None
) -> VerifyResult:
    """Blocked self attention vs the masked reference on random instances."""
    if impl is None:
        impl = part_self_attention
    rng = np.random.default_rng(seed)
    passed = 0
    worst = 0.0
    for _ in range(cases):
        instance = random_self_instance(rng)
        expected = full_attention(instance, label_mask(instance.query_labels))
        err = max_relative_error(impl(instance), expected)
        worst = max(worst, err)
        passed += err <= tolerance
    return VerifyResult("part-self-attention", passed, cases, worst)


def verify_cross_attention(
    cases: int, seed: int = 0, tolerance: float = DEFAULT_TOLERANCE, impl=None
) -> VerifyResult:
    """Blocked cross attention vs the masked reference on random instances."""
    if impl is None:
        impl = part_cross_attention
    rng = np.random.default_rng(seed)
    passed = 0
    worst = 0.0
    for _ in range(cases):
        instance = random_cross_instance(rng)
        mask = part_set_mask(instance.query_labels, instance.key_part_sets)
        expected = full_attention(instance, mask)
        err = max_relative_error(impl(instance), expected)
        worst = max(worst, err)
        passed += err <= tolerance
    return VerifyResult("part-cross-attention", passed, cases, worst)


def _token_sets_bruteforce(grid: SparseVoxelGrid, camera: CameraParams) -> list:
    rows, cols = camera.token_grid_shape
    sets = [set() for _ in range(rows * cols)]
    for i in range(grid.num_voxels):
        pixel = project_voxel(grid.coords[i], grid.resolution, camera)
        if pixel is None:
            continue
        u, v = pixel
        token = int(v // camera.patch_size) * cols + int(u // camera.patch_size)
        sets[token].add(int(grid.labels[i]))
    return sets


def verify_projection(cases: int, seed: int = 0) -> VerifyResult:
    """Vectorized token-mask builder vs the per-voxel scalar loop."""
    rng = np.random.default_rng(seed)
    passed = 0
    for _ in range(cases):
        grid = random_labeled_grid(rng)
        camera = random_camera(rng)
        mask = build_token_mask(grid, camera)
        expected = _token_sets_bruteforce(grid, camera)
        passed += list(mask.part_sets) == [frozenset(s) for s in expected]
    return VerifyResult("projection-token-mask", passed, cases, 0.0)


def verify_blockstack(
    cases: int, seed: int = 0, tolerance: float = DEFAULT_TOLERANCE
) -> VerifyResult:
    """Coarse block composition and the cross-part isolation guarantee."""
    rng = np.random.default_rng(seed)
    passed = 0
    worst = 0.0
    for _ in range(cases):
        grid = random_labeled_grid(rng, resolution=8, max_voxels=96, channels=6)
        features = grid.features.astype(np.float64)
        scale = 1.0 / np.sqrt(features.shape[1])

        cmap = downsample(grid)
        coarse = cmap.coarse.features.astype(np.float64)
        instance = AttentionInstance(
            coarse, coarse, coarse, np.ones(coarse.shape[0], dtype=np.int32),
            scale=scale,
        )
        composed = features + upsample(cmap, full_attention(instance))
        err = max_relative_error(coarse_full_block(grid, features, scale), composed)
        worst = max(worst, err)
        ok = err <= tolerance

        # Part blocks alone must keep parts bit-isolated; one coarse block
        # must break the isolation.
        target = int(grid.labels[0])
        others = grid.labels != target
        perturbed = features.copy()
        perturbed[grid.labels == target] += 1.0
        base = part_block(grid, part_block(grid, features))
        moved = part_block(grid, part_block(grid, perturbed))
        ok = ok and bool((base[others] == moved[others]).all())
        if others.any():
            mixed_base = coarse_full_block(grid, features, scale)
            mixed_moved = coarse_full_block(grid, perturbed, scale)
            ok = ok and bool((mixed_base[others] != mixed_moved[others]).any())
        passed += ok
    return VerifyResult("blockstack", passed, cases, worst)


def run_all(cases: int, seed: int = 0) -> list[VerifyResult]:
    return [
        verify_self_attention(cases, seed),
        verify_cross_attention(cases, seed + 1),
        verify_projection(cases, seed + 2),
        verify_blockstack(cases, seed + 3),
    ]
