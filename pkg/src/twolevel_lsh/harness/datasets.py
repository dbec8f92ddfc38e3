"""Synthetic instances, fvecs/ivecs I/O and the Hamming-to-Euclidean embedding."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .. import _rng
from ..geometry import Dataset


@dataclass(frozen=True)
class PlantedInstance:
    """Queries each with one point within ``r`` and every other point at least ``c * r`` away."""

    dataset: Dataset
    queries: np.ndarray
    planted: np.ndarray
    c: float
    r: float = 1.0

    def audit(self) -> int:
        """Number of promise violations, recomputed with exact distances."""
        D = cdist(self.queries, self.dataset.points)
        rows = np.arange(len(self.queries))
        bad = D[rows, self.planted] > self.r
        D[rows, self.planted] = np.inf
        return int(np.count_nonzero(bad | (D.min(axis=1) < self.c * self.r)))


def gen_planted(n: int, d: int, c: float, seed: int, n_queries: int = 100,
                spread: float | None = None, max_retries: int = 1000) -> PlantedInstance:
    """Gaussian base points plus queries planted at distance ``U[0.5, 1]`` from a random point.

    ``spread`` is the per-coordinate standard deviation; by default typical
    pairwise distances are about ``3c``.
    """
    if n < 2 or d < 2:
        raise ValueError("need n >= 2 and d >= 2")
    if n_queries < 1:
        raise ValueError("need at least one query")
    sigma = 3.0 * c / math.sqrt(2.0 * d) if spread is None else spread
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PLANTED)
    base = rng.standard_normal((n, d)) * sigma
    queries = np.empty((n_queries, d))
    planted = np.empty(n_queries, dtype=np.int64)
    for j in range(n_queries):
        for _ in range(max_retries):
            i = int(rng.integers(n))
            g = rng.standard_normal(d)
            q = base[i] + g / np.linalg.norm(g) * rng.uniform(0.5, 1.0)
            dist = np.linalg.norm(base - q, axis=1)
            dist[i] = np.inf
            if dist.min() >= c:
                queries[j], planted[j] = q, i
                break
        else:
            raise ValueError(f"could not plant query {j} after {max_retries} attempts; "
                             "increase d or spread, or lower n")
    return PlantedInstance(Dataset(base), queries, planted, c)


def gen_random(n: int, d: int, c: float, seed: int, n_queries: int = 100,
               spread: float | None = None) -> tuple[Dataset, np.ndarray]:
    """Unstructured data and queries from the same distribution (no promise)."""
    sigma = 3.0 * c / math.sqrt(2.0 * d) if spread is None else spread
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PLANTED, 1)
    return Dataset(rng.standard_normal((n, d)) * sigma), rng.standard_normal((n_queries, d)) * sigma


def gen_clustered(n: int, d: int, c: float, seed: int, clusters: int = 10,
                  radius: float | None = None) -> Dataset:
    """Tight clusters so that outer buckets hold many points (exercises pruning and annuli)."""
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PLANTED, 2)
    radius = 1.5 * c if radius is None else radius
    centers = rng.standard_normal((clusters, d)) * 4.0 * c / math.sqrt(d)
    g = rng.standard_normal((n, d))
    g *= (radius * rng.uniform(0.0, 1.0, n) ** (1.0 / d) / np.linalg.norm(g, axis=1))[:, None]
    return Dataset(centers[rng.integers(clusters, size=n)] + g)


# ------------------------------------------------------------- fvecs/ivecs


def _read_vecs(path, dtype) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    size = raw.size
    if size == 0:
        return np.zeros((0, 0), dtype=dtype)
    if size < 4:
        raise ValueError(f"{path}: truncated header at byte offset 0")
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise ValueError(f"{path}: non-positive dimension {d} at byte offset 0")
    rec = 4 * (d + 1)
    if size % rec == 0:
        body = raw.view("<i4").reshape(-1, d + 1)
        bad = np.flatnonzero(body[:, 0] != d)
        if bad.size == 0:
            return raw.view(np.dtype(dtype).newbyteorder("<")).reshape(-1, d + 1)[:, 1:].astype(dtype)
    # locate the first malformed record
    off = 0
    while off < size:
        if off + 4 > size:
            raise ValueError(f"{path}: truncated header at byte offset {off}")
        dd = int(raw[off : off + 4].view("<i4")[0])
        if dd <= 0:
            raise ValueError(f"{path}: non-positive dimension {dd} at byte offset {off}")
        if dd != d:
            raise ValueError(f"{path}: dimension {dd} at byte offset {off} differs from {d}")
        if off + 4 * (dd + 1) > size:
            raise ValueError(f"{path}: truncated record at byte offset {off}")
        off += 4 * (dd + 1)
    raise AssertionError("unreachable")


def _write_vecs(path, X: np.ndarray, dtype) -> None:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array")
    out = np.empty((X.shape[0], X.shape[1] + 1), dtype=np.dtype(dtype).newbyteorder("<"))
    out[:, 1:] = X
    out.view("<i4")[:, 0] = X.shape[1]
    tmp = f"{os.fspath(path)}.tmp"
    out.tofile(tmp)
    os.replace(tmp, path)


def read_fvecs(path) -> Dataset:
    return Dataset(_read_vecs(path, np.float32).astype(np.float64))


def write_fvecs(path, data) -> None:
    X = data.points if isinstance(data, Dataset) else data
    _write_vecs(path, np.asarray(X, dtype=np.float32), np.float32)


def read_ivecs(path) -> np.ndarray:
    return _read_vecs(path, np.int32)


def write_ivecs(path, rows) -> None:
    _write_vecs(path, np.asarray(rows, dtype=np.int32), np.int32)


# ---------------------------------------------------------------- Hamming


def embed_hamming_to_l2(x) -> np.ndarray:
    """Binary vector as a real point; ``|x - y|_2 = sqrt(hamming(x, y))``."""
    arr = np.asarray(x)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("input must be a binary vector")
    return arr.astype(np.float64)


def hamming_scale(c: float, r: float) -> tuple[float, float]:
    """Euclidean ``(c, r)`` of the embedded instance for a Hamming ``(c, r)`` instance."""
    return math.sqrt(c), math.sqrt(r)


def gen_planted_hamming(n: int, d: int, c: float, r: int, seed: int, n_queries: int = 100,
                        max_retries: int = 1000) -> PlantedInstance:
    """Binary instance with a planted neighbor within Hamming ``r``, embedded into Euclidean space.

    The result is a Euclidean instance with approximation ``sqrt(c)`` at radius ``sqrt(r)``.
    """
    if r < 1 or c <= 1:
        raise ValueError("need r >= 1 and c > 1")
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PLANTED, 3)
    base = rng.integers(0, 2, (n, d))
    queries = np.empty((n_queries, d), dtype=np.int64)
    planted = np.empty(n_queries, dtype=np.int64)
    for j in range(n_queries):
        for _ in range(max_retries):
            i = int(rng.integers(n))
            q = base[i].copy()
            flip = rng.choice(d, size=int(rng.integers(1, r + 1)), replace=False)
            q[flip] ^= 1
            ham = np.count_nonzero(base != q, axis=1)
            ham[i] = d + 1
            if ham.min() >= c * r:
                queries[j], planted[j] = q, i
                break
        else:
            raise ValueError(f"could not plant Hamming query {j} after {max_retries} attempts")
    ce, re = hamming_scale(c, r)
    return PlantedInstance(Dataset(embed_hamming_to_l2(base)), embed_hamming_to_l2(queries), planted, ce, re)
