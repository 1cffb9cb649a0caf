"""Global and local (stripe-aligned) distance computation.

Local stripe sequences are compared either with a dynamic-programming
shortest path through the stripe-to-stripe cost grid (tolerates vertical
misalignment) or with a direct one-to-one stripe correspondence (valid
when bounding boxes are well aligned).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from .gallery import EmbeddingSet, _decode_container, _encode_container

DISTANCE_MAGIC = b"RDMX"


class Metric(str, Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class LocalMode(str, Enum):
    DP_ALIGNED = "dp_aligned"
    ONE_TO_ONE = "one_to_one"
    NONE = "none"


@dataclass(frozen=True)
class DistanceConfig:
    metric: Metric = Metric.EUCLIDEAN
    lam: float = 1.0
    local_mode: LocalMode = LocalMode.NONE

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DataError("lambda must be finite and >= 0")


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    metric: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError("distance matrix must be 2-D")
        if not np.isfinite(v).all():
            raise DataError("distance matrix contains non-finite entries")
        if (v < 0).any():
            raise DataError("distance matrix contains negative entries")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def distance_matrix(q: np.ndarray, g: np.ndarray, metric: Metric = Metric.EUCLIDEAN) -> DistanceMatrix:
    """Pairwise Q x G distances between global feature matrices."""
    q = np.asarray(q, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2:
        raise DataError("inputs must be 2-D matrices")
    if q.shape[1] != g.shape[1]:
        raise DataError(f"dimension mismatch: {q.shape[1]} vs {g.shape[1]}")
    metric = Metric(metric)
    if metric is Metric.EUCLIDEAN:
        sq = np.sum(q * q, axis=1)[:, None] + np.sum(g * g, axis=1)[None, :]
        sq -= 2.0 * (q @ g.T)
        d = np.sqrt(np.maximum(sq, 0.0))
    else:
        qn = np.linalg.norm(q, axis=1)
        gn = np.linalg.norm(g, axis=1)
        denom = qn[:, None] * gn[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = np.where(denom > 0, (q @ g.T) / np.where(denom > 0, denom, 1.0), 0.0)
        # zero-norm rows get cos 0, hence distance 1
        d = np.clip(1.0 - cos, 0.0, 2.0)
    return DistanceMatrix(d, metric.value)


def squash(x):
    """Map a non-negative cost into [0, 1): (e^x - 1)/(e^x + 1)."""
    x = np.asarray(x, dtype=np.float64)
    if (x < 0).any():
        raise DataError("squash requires non-negative input")
    return np.tanh(x / 2.0)


def _cost_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DataError("stripe sequences must be 2-D (S x Dl)")
    if a.shape[1] != b.shape[1]:
        raise DataError(f"stripe dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    return squash(np.sqrt(np.sum(diff * diff, axis=2)))


def min_path_cost(cost: np.ndarray) -> float:
    """Minimum total cost over monotone (right/down) paths from the top-left
    to the bottom-right cell of a cost grid, endpoints included."""
    cost = np.asarray(cost, dtype=np.float64)
    s1, s2 = cost.shape
    d = np.empty_like(cost)
    d[0, 0] = cost[0, 0]
    for j in range(1, s2):
        d[0, j] = d[0, j - 1] + cost[0, j]
    for i in range(1, s1):
        d[i, 0] = d[i - 1, 0] + cost[i, 0]
        for j in range(1, s2):
            d[i, j] = cost[i, j] + min(d[i - 1, j], d[i, j - 1])
    return float(d[s1 - 1, s2 - 1])


def aligned_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum-cost monotone path through the squashed stripe-to-stripe
    euclidean cost grid."""
    return min_path_cost(_cost_grid(a, b))


def one_to_one_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of squashed euclidean distances between corresponding stripes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise DataError(
            f"stripe count mismatch ({a.shape[0]} vs {b.shape[0]}); "
            "use the DP-aligned distance for unequal stripe counts"
        )
    cost = _cost_grid(a, b)
    return float(np.trace(cost))


def local_distance_matrix(q: EmbeddingSet, g: EmbeddingSet, mode: LocalMode) -> DistanceMatrix:
    """Batched local distance: entry (i, j) compares the stripe sequences
    of query row i and gallery row j."""
    mode = LocalMode(mode)
    if mode is LocalMode.NONE:
        raise DataError("local_mode 'none' has no local distance matrix")
    if q.local is None or g.local is None:
        raise DataError("both embedding sets need local features")
    nq, ng = q.n, g.n
    out = np.zeros((nq, ng), dtype=np.float64)
    if mode is LocalMode.ONE_TO_ONE:
        if q.local.shape[1] != g.local.shape[1]:
            raise DataError(
                f"stripe count mismatch ({q.local.shape[1]} vs {g.local.shape[1]}); "
                "use the DP-aligned distance for unequal stripe counts"
            )
        # vectorized: per-stripe euclidean over all (q, g) pairs
        ql = q.local.astype(np.float64)
        gl = g.local.astype(np.float64)
        for s in range(ql.shape[1]):
            diff_sq = (
                np.sum(ql[:, s] ** 2, axis=1)[:, None]
                + np.sum(gl[:, s] ** 2, axis=1)[None, :]
                - 2.0 * (ql[:, s] @ gl[:, s].T)
            )
            out += squash(np.sqrt(np.maximum(diff_sq, 0.0)))
    else:
        for i in range(nq):
            for j in range(ng):
                out[i, j] = aligned_distance(q.local[i], g.local[j])
    return DistanceMatrix(out, f"local_{mode.value}")


def combine_distances(dg: DistanceMatrix, dl: DistanceMatrix, lam: float) -> DistanceMatrix:
    """Entrywise global + lambda * local combination."""
    if dg.shape != dl.shape:
        raise DataError(f"shape mismatch: {dg.shape} vs {dl.shape}")
    if not np.isfinite(lam) or lam < 0:
        raise DataError("lambda must be finite and >= 0")
    return DistanceMatrix(dg.values + lam * dl.values, f"{dg.metric}+{lam}*{dl.metric}")


def encode_distance_matrix(d: DistanceMatrix) -> bytes:
    """Serialize with the shared binary container (magic RDMX, S=0)."""
    return _encode_container(DISTANCE_MAGIC, d.values.astype(np.float32), None)


def decode_distance_matrix(data: bytes, metric: str = "unknown") -> DistanceMatrix:
    main, _ = _decode_container(data, DISTANCE_MAGIC)
    return DistanceMatrix(main.astype(np.float64), metric)
