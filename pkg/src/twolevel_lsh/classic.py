"""Single-level multi-table LSH index, the baseline for the two-level scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .ball_carving import BallCarvingFamily, BallCarvingParams, default_t
from .families import CollisionEstimate, LshFamily, TensoredFamily, TensoredFunction, estimate_collision
from .geometry import SLACK, Dataset
from .two_level import QueryResult, _group


@dataclass
class ClassicIndex:
    dataset: Dataset
    c: float
    r: float
    family: TensoredFamily
    tables: list[tuple[TensoredFunction, dict[bytes, np.ndarray]]]
    p1: CollisionEstimate | None = None
    p2: CollisionEstimate | None = None

    @property
    def k(self) -> int:
        return self.family.k

    @property
    def R(self) -> int:
        return len(self.tables)

    def query(self, q) -> QueryResult:
        return self.query_many(np.asarray(q, dtype=np.float64)[None, :])[0]

    def query_many(self, Q) -> list[QueryResult]:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.dataset.dim:
            raise ValueError(f"queries must have shape (m, {self.dataset.dim}), got {Q.shape}")
        Qs = Q / self.r
        pts = self.dataset.points / self.r
        keys = [fn.hash_many(Qs) for fn, _ in self.tables]
        out = []
        for j, q in enumerate(Qs):
            examined = probed = 0
            answer = None
            for (fn, buckets), tk in zip(self.tables, keys):
                probed += 1
                ids = buckets.get(tk[j].tobytes())
                if ids is None:
                    continue
                d = np.linalg.norm(pts[ids] - q, axis=1)
                ok = np.flatnonzero(d <= self.c + SLACK)
                if ok.size:
                    examined += int(ok[0]) + 1
                    answer = int(ids[ok[0]])
                    break
                examined += len(ids)
            out.append(QueryResult(answer, examined, probed, 0, examined - (answer is not None)))
        return out


def classic_parameters(family: LshFamily, c: float, n: int, trials: int, seed: int,
                       delta: float = 0.1, sigmas: float = 3.0):
    """``(k, R, p1, p2)`` with ``p2^k <= 1/n`` and ``R = ceil(ln(1/delta) / p1^k)``."""
    origin = np.zeros(family.dim)
    far = origin.copy()
    near = origin.copy()
    near[0], far[0] = 1.0, c
    method = "projected"
    try:
        p1 = estimate_collision(family, origin, near, trials, (seed, _rng.CLASSIC, 0), method=method)
    except NotImplementedError:
        method = "direct"
        p1 = estimate_collision(family, origin, near, trials, (seed, _rng.CLASSIC, 0), method=method)
    p2 = estimate_collision(family, origin, far, trials, (seed, _rng.CLASSIC, 1), method=method)
    p2_up = min(1.0, p2.upper(sigmas))
    if not 0 < p2_up < 1 or p1.p_hat <= p2.p_hat:
        raise ValueError(f"family does not separate 1 from {c}: p1={p1.p_hat:.4g}, p2={p2.p_hat:.4g}")
    k = max(1, math.ceil(math.log(n) / math.log(1.0 / p2_up) - 1e-12))
    R = math.ceil(math.log(1.0 / delta) / p1.p_hat**k - 1e-12)
    return k, R, p1, p2


def classic_build(dataset, c: float, family: LshFamily | None = None, k: int | None = None,
                  R: int | None = None, seed: int = 0, trials: int = 20_000, r: float = 1.0,
                  delta: float = 0.1) -> ClassicIndex:
    """Build ``R`` tables of ``family^k``; missing ``k``/``R`` are chosen from measured probabilities."""
    dataset = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    if dataset.n == 0:
        raise ValueError("cannot build an index over an empty dataset")
    if family is None:
        family = BallCarvingFamily(BallCarvingParams(t=default_t(max(dataset.n, 2))), dataset.dim)
    p1 = p2 = None
    if k is None or R is None:
        k0, R0, p1, p2 = classic_parameters(family, c, max(dataset.n, 2), trials, seed, delta)
        k = k0 if k is None else k
        R = R0 if R is None else R
    tfam = TensoredFamily(family, k)
    pts = dataset.points / r
    ids = np.arange(dataset.n)
    tables = []
    for i in range(R):
        fn = tfam.sample((seed, _rng.CLASSIC, 2, i))
        tables.append((fn, _group(fn.hash_many(pts), ids)))
    return ClassicIndex(dataset, c, r, tfam, tables, p1, p2)


def classic_query(index: ClassicIndex, q) -> QueryResult:
    return index.query(q)
