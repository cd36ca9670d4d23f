"""Mesh-to-part-labeled-voxel annotation: voxelization, clustering, filtering.

The pipeline mirrors a scalable annotation flow: sample the surface, carry
per-point features into voxels by averaging, cluster voxels into a fixed
number of parts, then score the labeling with two cheap quality metrics
(part-size imbalance and neighborhood inconsistency) to decide acceptance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array

from .mesh import PointSampleSet, TriangleMesh, normalize_mesh, sample_surface
from .validation import check_positive_int, check_unit_interval
from .voxgrid import PartLabeling, SparseVoxelGrid

DEFAULT_NUM_PARTS = 8
DEFAULT_NUM_SAMPLES = 500_000
DEFAULT_RATIO_THRESHOLD = 0.25
DEFAULT_INCONSISTENCY_THRESHOLD = 0.25

_FACE_NEIGHBOR_OFFSETS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.int64,
)


@dataclass(frozen=True)
class FilterReport:
    """Quality metrics for one annotated sample plus the accept decision."""

    squared_ratio_sum: float
    neighborhood_inconsistency: float
    accepted: bool


def _decode_keys(keys: np.ndarray, resolution: int) -> np.ndarray:
    x, rem = np.divmod(keys, resolution * resolution)
    y, z = np.divmod(rem, resolution)
    return np.column_stack([x, y, z]).astype(np.int32)


def voxelize(points: PointSampleSet, resolution: int) -> SparseVoxelGrid:
    """Bin normalized points into an N^3 grid of active voxels.

    A voxel is active iff at least one point lands in it under
    ``index = floor((coord + 0.5) * N)`` clamped to [0, N-1]; its feature is
    the mean of its points' features. Points are accumulated in a canonical
    order (voxel key, then feature values) so the means do not depend on the
    input point order.
    """
    n = check_positive_int(resolution, "resolution")
    positions = points.positions
    if positions.shape[0] == 0:
        return SparseVoxelGrid(n, np.zeros((0, 3), dtype=np.int32))
    idx = np.floor((positions + 0.5) * n).astype(np.int64)
    np.clip(idx, 0, n - 1, out=idx)
    keys = (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]
    if points.features is None:
        return SparseVoxelGrid(n, _decode_keys(np.unique(keys), n))
    feats = points.features.astype(np.float64)
    order = np.lexsort(
        tuple(feats[:, c] for c in range(feats.shape[1] - 1, -1, -1)) + (keys,)
    )
    keys_sorted = keys[order]
    feats_sorted = feats[order]
    uniq, starts = np.unique(keys_sorted, return_index=True)
    sums = np.add.reduceat(feats_sorted, starts, axis=0)
    counts = np.diff(np.append(starts, keys_sorted.size))
    return SparseVoxelGrid(
        n, _decode_keys(uniq, n), features=sums / counts[:, None]
    )


def geometric_features(grid: SparseVoxelGrid) -> np.ndarray:
    """Voxel-center coordinates in [-0.5, 0.5]^3 as an (L, 3) feature matrix.

    Fallback feature provider when no learned per-point features are
    available; clustering on these recovers spatially separated parts.
    """
    return (grid.coords.astype(np.float64) + 0.5) / grid.resolution - 0.5


def average_linkage_labels(features: np.ndarray, num_clusters: int) -> np.ndarray:
    """Bottom-up average-linkage clustering down to exactly ``num_clusters``.

    Euclidean distances; ties in merge distance break toward the pair whose
    clusters contain the lowest row indices, so the result is fully
    deterministic. Returned labels are 1-based and numbered by each
    cluster's lowest row index. Memory is O(n^2); intended for the desk-
    scale voxel counts this package targets.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {feats.shape}")
    n = feats.shape[0]
    k = check_positive_int(num_clusters, "num_clusters")
    if k > n:
        raise ValueError(f"num_clusters {k} exceeds number of rows {n}")
    if k == n:
        return np.arange(1, n + 1, dtype=np.int32)

    dist = cdist(feats, feats)
    np.fill_diagonal(dist, np.inf)
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    # Per-row nearest-neighbor cache; argmin is the first minimizing column,
    # which together with "first row achieving the global min" realizes the
    # lowest-index tie-break exactly.
    row_min = dist.min(axis=1)
    row_arg = dist.argmin(axis=1)

    for _ in range(n - k):
        a = int(np.argmin(row_min))
        b = int(row_arg[a])
        # b > a holds: were any earlier column tied, that row's cached
        # minimum would equal the global minimum and argmin would pick it.
        merged = (size[a] * dist[a] + size[b] * dist[b]) / (size[a] + size[b])
        dist[a, :] = merged
        dist[:, a] = merged
        dist[a, a] = np.inf
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        alive[b] = False
        parent[b] = a
        size[a] += size[b]
        row_min[b] = np.inf
        row_arg[b] = b
        row_min[a] = dist[a].min()
        row_arg[a] = int(dist[a].argmin())

        stale = alive & ((row_arg == a) | (row_arg == b))
        stale[a] = False
        stale_idx = np.flatnonzero(stale)
        if stale_idx.size:
            sub = dist[stale_idx]
            row_min[stale_idx] = sub.min(axis=1)
            row_arg[stale_idx] = sub.argmin(axis=1)
        # The rewritten column a may now beat (or tie at a lower index than)
        # other rows' cached minima.
        col = dist[:, a]
        better = alive & (col < row_min)
        better[a] = False
        if better.any():
            row_min[better] = col[better]
            row_arg[better] = a
        tie = alive & (col == row_min) & (row_arg > a)
        tie[a] = False
        if tie.any():
            row_arg[tie] = a

    resolved = parent
    while True:
        hop = resolved[resolved]
        if np.array_equal(hop, resolved):
            break
        resolved = hop
    roots = np.flatnonzero(alive)
    label_of = np.zeros(n, dtype=np.int32)
    label_of[roots] = np.arange(1, roots.size + 1, dtype=np.int32)
    return label_of[resolved]


def cluster_parts(grid: SparseVoxelGrid, num_parts: int) -> PartLabeling:
    """Cluster a feature-carrying grid into exactly ``num_parts`` parts."""
    if grid.features is None:
        raise ValueError("clustering requires per-voxel features")
    k = check_positive_int(num_parts, "num_parts")
    if k > grid.num_voxels:
        raise ValueError(f"num_parts {k} exceeds voxel count {grid.num_voxels}")
    labels = average_linkage_labels(grid.features.astype(np.float64), k)
    return PartLabeling(labels, k)


def squared_ratio_sum(labeling: PartLabeling) -> float:
    """Imbalance score: sum over parts of (part size / total)^2.

    1/K for perfectly balanced parts, 1.0 for a single dominant part.
    """
    total = labeling.num_tokens
    if total == 0:
        raise ValueError("labeling is empty")
    sum_sq = int(np.sum(labeling.group_sizes.astype(np.int64) ** 2))
    return sum_sq / (total * total)


def neighborhood_inconsistency(grid: SparseVoxelGrid) -> float:
    """Fraction of voxels with a 6-face-adjacent active neighbor of another part.

    Voxels with no active neighbors count as consistent.
    """
    if grid.labels is None:
        raise ValueError("grid has no labels")
    count = grid.num_voxels
    if count == 0:
        raise ValueError("empty grid")
    n = grid.resolution
    coords = grid.coords.astype(np.int64)
    keys = (coords[:, 0] * n + coords[:, 1]) * n + coords[:, 2]
    labels = grid.labels
    inconsistent = np.zeros(count, dtype=bool)
    for offset in _FACE_NEIGHBOR_OFFSETS:
        shifted = coords + offset
        valid = np.flatnonzero(((shifted >= 0) & (shifted < n)).all(axis=1))
        if not valid.size:
            continue
        nkeys = (shifted[valid, 0] * n + shifted[valid, 1]) * n + shifted[valid, 2]
        pos = np.minimum(np.searchsorted(keys, nkeys), count - 1)
        found = keys[pos] == nkeys
        hit = valid[found]
        differs = labels[hit] != labels[pos[found]]
        inconsistent[hit[differs]] = True
    return int(inconsistent.sum()) / count


def filter_sample(
    grid: SparseVoxelGrid,
    labeling: PartLabeling,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
    inconsistency_threshold: float = DEFAULT_INCONSISTENCY_THRESHOLD,
) -> FilterReport:
    """Score one annotated sample and accept iff both metrics pass.

    A sample is accepted iff the squared-ratio sum and the neighborhood
    inconsistency are each at or below their threshold.
    """
    ratio_threshold = check_unit_interval(ratio_threshold, "ratio_threshold")
    inconsistency_threshold = check_unit_interval(
        inconsistency_threshold, "inconsistency_threshold"
    )
    if grid.labels is None or not np.array_equal(grid.labels, labeling.labels):
        raise ValueError("grid labels do not match the labeling")
    ratio = squared_ratio_sum(labeling)
    inconsistency = neighborhood_inconsistency(grid)
    return FilterReport(
        squared_ratio_sum=ratio,
        neighborhood_inconsistency=inconsistency,
        accepted=bool(
            ratio <= ratio_threshold and inconsistency <= inconsistency_threshold
        ),
    )


def load_point_features(path, num_channels: int) -> np.ndarray:
    """Read a raw little-endian f32 file of per-point feature rows."""
    c = check_positive_int(num_channels, "num_channels")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % c:
        raise ValueError(
            f"feature file {path} holds {raw.size} floats, not divisible by {c}"
        )
    return raw.reshape(-1, c)


@dataclass(frozen=True)
class AnnotationResult:
    """Everything produced for one mesh: labeled grid, grouping, metrics."""

    grid: SparseVoxelGrid
    labeling: PartLabeling
    report: FilterReport


def annotate_mesh(
    mesh: TriangleMesh,
    resolution: int = 64,
    num_parts: int = DEFAULT_NUM_PARTS,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    point_features: np.ndarray | None = None,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
    inconsistency_threshold: float = DEFAULT_INCONSISTENCY_THRESHOLD,
) -> AnnotationResult:
    """Run the full pipeline: normalize, sample, voxelize, cluster, filter.

    ``point_features`` optionally supplies one feature row per sampled point
    (aligned with the sampling order); otherwise voxel-center geometric
    features are used. Bit-deterministic for a fixed seed.
    """
    normalized = normalize_mesh(mesh)
    samples = sample_surface(normalized, num_samples, seed)
    if point_features is not None:
        samples = samples.with_features(point_features)
    grid = voxelize(samples, resolution)
    if grid.features is None:
        grid = grid.with_features(geometric_features(grid))
    labeling = cluster_parts(grid, num_parts)
    grid = grid.with_labels(labeling.labels, labeling.num_parts)
    report = filter_sample(grid, labeling, ratio_threshold, inconsistency_threshold)
    return AnnotationResult(grid=grid, labeling=labeling, report=report)


class AgglomerativePartClusterer(ClusterMixin, BaseEstimator):
    """Average-linkage clustering into a fixed number of parts.

    Unlike generic hierarchical clustering, merge ties are resolved toward
    the pair containing the lowest row index, so repeated fits produce
    identical results. ``labels_`` are 1-based part indices (matching part
    labels across this package), numbered by each cluster's lowest row
    index.
    """

    def __init__(self, n_parts: int = DEFAULT_NUM_PARTS):
        self.n_parts = n_parts

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.labels_ = average_linkage_labels(X, self.n_parts)
        self.n_features_in_ = X.shape[1]
        return self


class PartAnnotator(TransformerMixin, BaseEstimator):
    """Transformer from raw triangle meshes to part-labeled voxel grids.

    Stateless (``fit`` is a no-op); parameters follow the usual estimator
    conventions so the annotator can sit inside pipelines and grid searches.
    ``transform`` maps a :class:`TriangleMesh` to a labeled
    :class:`SparseVoxelGrid`, or a list of meshes to a list of grids;
    :meth:`annotate` additionally returns the grouping and filter report.
    """

    def __init__(
        self,
        resolution: int = 64,
        n_parts: int = DEFAULT_NUM_PARTS,
        n_samples: int = DEFAULT_NUM_SAMPLES,
        random_state: int = 0,
        ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
        inconsistency_threshold: float = DEFAULT_INCONSISTENCY_THRESHOLD,
    ):
        self.resolution = resolution
        self.n_parts = n_parts
        self.n_samples = n_samples
        self.random_state = random_state
        self.ratio_threshold = ratio_threshold
        self.inconsistency_threshold = inconsistency_threshold

    def fit(self, X=None, y=None):
        return self

    def annotate(
        self, mesh: TriangleMesh, point_features: np.ndarray | None = None
    ) -> AnnotationResult:
        return annotate_mesh(
            mesh,
            resolution=self.resolution,
            num_parts=self.n_parts,
            num_samples=self.n_samples,
            seed=self.random_state,
            point_features=point_features,
            ratio_threshold=self.ratio_threshold,
            inconsistency_threshold=self.inconsistency_threshold,
        )

    def transform(self, X):
        if isinstance(X, TriangleMesh):
            return self.annotate(X).grid
        return [self.annotate(mesh).grid for mesh in X]
