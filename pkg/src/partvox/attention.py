"""Part-restricted attention: masked reference path, blocked paths, FLOP model.

Two equivalent routes compute the same quantity. ``full_attention`` is the
reference: it materializes every query/key logit and applies an additive
-inf mask before the softmax. ``part_self_attention`` and
``part_cross_attention`` are the blocked routes: they never form the full
logit matrix, running one dense attention per part group instead. Tokens
of part g attend only to keys of part g (self) or to image tokens whose
part set contains g (cross), which is what cuts the quadratic cost by
roughly the number of parts when groups are balanced.

All math runs in double precision with max-subtracted softmax rows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .validation import as_labels, check_positive_int

PartSets = tuple


@dataclass(frozen=True)
class AttentionInstance:
    """One attention problem: projections plus the part bookkeeping.

    Self-attention instances have as many keys as queries and no
    ``key_part_sets``; cross-attention instances carry one set of admissible
    part indices per key (image token). ``scale`` defaults to 1/sqrt(d).
    """

    queries: np.ndarray  # (L, d)
    keys: np.ndarray  # (M, d)
    values: np.ndarray  # (M, d_v)
    query_labels: np.ndarray  # (L,) part indices in 1..K
    key_part_sets: PartSets | None = None  # cross only: M frozensets
    scale: float | None = None

    def __post_init__(self):
        q = np.asarray(self.queries, dtype=np.float64)
        k = np.asarray(self.keys, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        for name, arr in (("queries", q), ("keys", k), ("values", v)):
            if arr.ndim != 2:
                raise ValueError(f"dimension mismatch: {name} must be 2-D")
        if q.shape[1] != k.shape[1]:
            raise ValueError(
                f"dimension mismatch: queries have d={q.shape[1]}, keys d={k.shape[1]}"
            )
        if q.shape[1] < 1 or v.shape[1] < 1:
            raise ValueError("dimension mismatch: d and d_v must be >= 1")
        if v.shape[0] != k.shape[0]:
            raise ValueError(
                f"dimension mismatch: {k.shape[0]} keys but {v.shape[0]} values"
            )
        labels = as_labels(self.query_labels, "query_labels")
        if labels.shape[0] != q.shape[0]:
            raise ValueError(
                f"dimension mismatch: {labels.shape[0]} labels for {q.shape[0]} queries"
            )
        if labels.size and labels.min() < 1:
            raise ValueError("part labels must be >= 1")
        sets = self.key_part_sets
        if sets is None:
            if k.shape[0] != q.shape[0]:
                raise ValueError(
                    "self-attention instance requires equal query and key counts"
                )
        else:
            sets = tuple(frozenset(int(p) for p in s) for s in sets)
            if len(sets) != k.shape[0]:
                raise ValueError(
                    f"dimension mismatch: {len(sets)} part sets for {k.shape[0]} keys"
                )
            if any(p < 1 for s in sets for p in s):
                raise ValueError("part indices in key sets must be >= 1")
        scale = self.scale
        if scale is not None:
            scale = float(scale)
            if not math.isfinite(scale):
                raise ValueError("scale must be finite")
        for arr in (q, k, v, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "query_labels", labels)
        object.__setattr__(self, "key_part_sets", sets)
        object.__setattr__(self, "scale", scale)

    @property
    def num_queries(self) -> int:
        return self.queries.shape[0]

    @property
    def num_keys(self) -> int:
        return self.keys.shape[0]

    @property
    def head_dim(self) -> int:
        return self.queries.shape[1]

    @property
    def value_dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_self(self) -> bool:
        return self.key_part_sets is None

    @property
    def effective_scale(self) -> float:
        return self.scale if self.scale is not None else 1.0 / math.sqrt(self.head_dim)

    @property
    def num_parts(self) -> int:
        """Largest part index mentioned by labels or key sets."""
        k = int(self.query_labels.max()) if self.query_labels.size else 0
        if self.key_part_sets:
            k = max(k, max((max(s) for s in self.key_part_sets if s), default=0))
        return k


def dense_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, scale: float
) -> np.ndarray:
    """Unmasked softmax(q k^T * scale) v with row-wise max subtraction."""
    if q.shape[0] == 0:
        return np.zeros((0, v.shape[1]), dtype=np.float64)
    if k.shape[0] == 0:
        raise ValueError("attention requires at least one key")
    scores = q @ k.T
    scores *= scale
    scores -= scores.max(axis=1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=1, keepdims=True)
    return scores @ v


def full_attention(
    instance: AttentionInstance, mask: np.ndarray | None = None
) -> np.ndarray:
    """Reference attention with an optional boolean admissibility mask.

    ``mask[i, j]`` True means query i may attend to key j; masked logits are
    sent to -inf before the softmax, so masked keys contribute exactly zero
    weight. A query row whose mask is entirely False falls back to attending
    to every key: a softmax over an empty set is undefined, and silently
    zeroing the row would drop the query's conditioning.
    """
    q, k, v = instance.queries, instance.keys, instance.values
    if instance.num_queries == 0:
        return np.zeros((0, instance.value_dim), dtype=np.float64)
    if instance.num_keys == 0:
        raise ValueError("attention requires at least one key")
    scale = instance.effective_scale
    if mask is None:
        return dense_attention(q, k, v, scale)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (instance.num_queries, instance.num_keys):
        raise ValueError(
            f"dimension mismatch: mask shape {mask.shape} != "
            f"({instance.num_queries}, {instance.num_keys})"
        )
    logits = (q @ k.T) * scale
    masked = np.where(mask, logits, -np.inf)
    orphan = ~mask.any(axis=1)
    if orphan.any():
        masked[orphan] = logits[orphan]
    masked -= masked.max(axis=1, keepdims=True)
    weights = np.exp(masked)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


def part_self_attention(instance: AttentionInstance) -> np.ndarray:
    """Blocked self attention: each token attends only within its part.

    Equivalent to :func:`full_attention` with ``mask[i, j] = (a_i == a_j)``,
    computed without the L x L logit matrix: tokens are stably grouped by
    part, one dense attention runs per group, and rows scatter back to their
    original positions.
    """
    if not instance.is_self:
        raise ValueError("part_self_attention requires a self-attention instance")
    q, k, v = instance.queries, instance.keys, instance.values
    labels = instance.query_labels
    scale = instance.effective_scale
    out = np.empty((instance.num_queries, instance.value_dim), dtype=np.float64)
    for part in np.unique(labels):
        idx = np.flatnonzero(labels == part)
        out[idx] = dense_attention(q[idx], k[idx], v[idx], scale)
    return out


def part_cross_attention(instance: AttentionInstance) -> np.ndarray:
    """Blocked cross attention: part g attends to keys whose set contains g.

    Equivalent to :func:`full_attention` with ``mask[i, j] = (a_i in A_j)``.
    Queries are grouped by part and each group gathers its admissible key
    subset once. A part admitted by no key falls back to attending to all
    keys, mirroring the reference path's fully-masked-row rule.
    """
    if instance.is_self:
        raise ValueError("part_cross_attention requires key part sets")
    q, k, v = instance.queries, instance.keys, instance.values
    labels = instance.query_labels
    sets = instance.key_part_sets
    scale = instance.effective_scale
    if instance.num_queries == 0:
        return np.zeros((0, instance.value_dim), dtype=np.float64)
    if instance.num_keys == 0:
        raise ValueError("attention requires at least one key")
    out = np.empty((instance.num_queries, instance.value_dim), dtype=np.float64)
    for part in np.unique(labels):
        qidx = np.flatnonzero(labels == part)
        admissible = np.fromiter(
            (int(part) in s for s in sets), dtype=bool, count=len(sets)
        )
        kidx = np.flatnonzero(admissible)
        if kidx.size:
            out[qidx] = dense_attention(q[qidx], k[kidx], v[kidx], scale)
        else:
            out[qidx] = dense_attention(q[qidx], k, v, scale)
    return out


@dataclass(frozen=True)
class FlopReport:
    """Floating-point operation counts for the two attention routes.

    Counts cover only the two matrix products (logits and weighted sum) at
    2*n*m*d each; the softmax is excluded so the ratio stays
    implementation-independent. Exact integer arithmetic.
    """

    full_flops: int
    part_flops: int
    ratio: float


def count_flops(
    num_queries: int,
    num_keys: int,
    head_dim: int,
    value_dim: int,
    group_sizes,
    key_part_sets: PartSets | None = None,
) -> FlopReport:
    """FLOP model for full vs part-restricted attention.

    Self attention (no ``key_part_sets``): full costs 2*L^2*(d + d_v) and
    the part route costs 2*(d + d_v)*sum_g L_g^2, so the ratio is
    L^2 / sum_g L_g^2, which reaches the part count exactly for balanced
    groups. Cross attention: full costs 2*L*M*(d + d_v) and the part route
    2*(d + d_v)*sum_g L_g*M_g with M_g the number of keys admitting part g.
    """
    num_queries = int(num_queries)
    num_keys = int(num_keys)
    head_dim = check_positive_int(head_dim, "head_dim")
    value_dim = check_positive_int(value_dim, "value_dim")
    sizes = np.asarray(group_sizes, dtype=np.int64)
    if sizes.ndim != 1:
        raise ValueError("group_sizes must be 1-D")
    if sizes.size and sizes.min() < 0:
        raise ValueError("group sizes must be non-negative")
    if int(sizes.sum()) != num_queries:
        raise ValueError(
            f"group sizes sum to {int(sizes.sum())}, expected {num_queries}"
        )
    per_pair = 2 * (head_dim + value_dim)
    if key_part_sets is None:
        if num_keys != num_queries:
            raise ValueError("self-attention flop model requires equal L and M")
        full = per_pair * num_queries * num_queries
        part = per_pair * sum(int(s) * int(s) for s in sizes)
    else:
        if len(key_part_sets) != num_keys:
            raise ValueError(
                f"{len(key_part_sets)} part sets for {num_keys} keys"
            )
        full = per_pair * num_queries * num_keys
        admitted = np.zeros(sizes.size, dtype=np.int64)
        for s in key_part_sets:
            for p in s:
                if 1 <= p <= sizes.size:
                    admitted[p - 1] += 1
        part = per_pair * sum(int(a) * int(b) for a, b in zip(sizes, admitted))
    ratio = full / part if part else math.inf
    return FlopReport(full_flops=full, part_flops=part, ratio=ratio)


BENCH_CSV_FIELDS = ("mode", "L", "d", "K", "part_ms", "full_ms", "flop_ratio", "wall_ratio")


@dataclass(frozen=True)
class BenchResult:
    """Median wall times for the blocked and dense routes on one instance."""

    mode: str
    tokens: int
    dim: int
    parts: int
    part_ms: float
    full_ms: float
    flops: FlopReport

    @property
    def wall_ratio(self) -> float:
        return self.full_ms / self.part_ms if self.part_ms else math.inf

    def csv_row(self) -> list[str]:
        return [
            self.mode,
            str(self.tokens),
            str(self.dim),
            str(self.parts),
            f"{self.part_ms:.3f}",
            f"{self.full_ms:.3f}",
            f"{self.flops.ratio!r}",
            f"{self.wall_ratio:.4f}",
        ]


def make_bench_instance(
    tokens: int, dim: int, parts: int, mode: str = "self", seed: int = 0
) -> AttentionInstance:
    """Deterministic synthetic instance with balanced part groups.

    Labels cycle 1..K over the tokens. In cross mode the instance carries as
    many keys as queries, each admitting exactly one part, balanced the same
    way.
    """
    tokens = check_positive_int(tokens, "tokens")
    dim = check_positive_int(dim, "dim")
    parts = check_positive_int(parts, "parts")
    if parts > tokens:
        raise ValueError(f"parts {parts} exceeds tokens {tokens}")
    if mode not in ("self", "cross"):
        raise ValueError(f"mode must be 'self' or 'cross', got {mode!r}")
    rng = np.random.default_rng(seed)
    labels = (np.arange(tokens) % parts) + 1
    q = rng.standard_normal((tokens, dim))
    k = rng.standard_normal((tokens, dim))
    v = rng.standard_normal((tokens, dim))
    if mode == "self":
        return AttentionInstance(q, k, v, labels)
    sets = tuple(frozenset({(j % parts) + 1}) for j in range(tokens))
    return AttentionInstance(q, k, v, labels, key_part_sets=sets)


def bench_attention(
    tokens: int,
    dim: int,
    parts: int,
    mode: str = "self",
    repetitions: int = 5,
    seed: int = 0,
) -> BenchResult:
    """Time the blocked part route against the dense full route.

    Single-threaded (BLAS pools clamped to one thread) so the comparison
    reflects arithmetic volume rather than parallel scaling. Reports the
    median over ``repetitions`` of each path.
    """
    repetitions = check_positive_int(repetitions, "repetitions")
    instance = make_bench_instance(tokens, dim, parts, mode=mode, seed=seed)
    group_sizes = np.bincount(instance.query_labels, minlength=parts + 1)[1:]
    flops = count_flops(
        tokens, tokens, dim, dim, group_sizes, instance.key_part_sets
    )
    blocked = part_self_attention if mode == "self" else part_cross_attention
    part_times = []
    full_times = []
    with threadpool_limits(limits=1):
        for _ in range(repetitions):
            t0 = time.perf_counter()
            blocked(instance)
            part_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            full_attention(instance)
            full_times.append(time.perf_counter() - t0)
    return BenchResult(
        mode=mode,
        tokens=tokens,
        dim=dim,
        parts=parts,
        part_ms=float(np.median(part_times) * 1e3),
        full_ms=float(np.median(full_times) * 1e3),
        flops=flops,
    )
