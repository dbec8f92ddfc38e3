"""Min-wise hashing of equal-size sets: collision rate equals Jaccard similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _rng
from ..families import CollisionEstimate

_CHUNK = 1 << 16


@dataclass(frozen=True)
class MinhashEntry:
    s: int
    overlap: int
    jaccard: float
    l1_form: float
    estimate: CollisionEstimate

    def within(self, sigmas: float = 3.0) -> bool:
        tol = sigmas * max(self.estimate.stderr, 1e-12)
        return abs(self.estimate.p_hat - self.jaccard) <= tol and abs(self.estimate.p_hat - self.l1_form) <= tol


def set_pair(s: int, overlap: int) -> tuple[np.ndarray, np.ndarray]:
    """Sets of size ``s`` over ``0..2s-overlap-1`` sharing exactly ``overlap`` elements."""
    if s < 1 or not 0 <= overlap <= s:
        raise ValueError(f"need s >= 1 and 0 <= overlap <= s, got s={s}, overlap={overlap}")
    p = np.arange(s)
    q = np.concatenate([np.arange(overlap), np.arange(s, 2 * s - overlap)])
    return p, q


def jaccard(p, q) -> float:
    a, b = set(np.asarray(p).tolist()), set(np.asarray(q).tolist())
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def l1_collision_form(s: int, overlap: int) -> float:
    """``(1 - x) / (1 + x)`` with ``x = |p - q|_1 / (2s)`` for indicator vectors."""
    x = 2 * (s - overlap) / (2 * s)
    return (1 - x) / (1 + x)


def minhash_collisions(p, q, trials: int, seed) -> np.ndarray:
    """Per-trial ``min_pi(p) == min_pi(q)`` over independent random permutations."""
    p, q = np.asarray(p), np.asarray(q)
    universe = int(max(p.max(initial=-1), q.max(initial=-1))) + 1
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.MINHASH)
    hits = np.empty(trials, dtype=bool)
    for lo in range(0, trials, _CHUNK):
        m = min(_CHUNK, trials - lo)
        # i.i.d. uniform ranks induce a uniformly random permutation
        ranks = rng.random((m, universe))
        hits[lo : lo + m] = p[ranks[:, p].argmin(axis=1)] == q[ranks[:, q].argmin(axis=1)]
    return hits


def minhash_demo(s: int, overlap: int, trials: int = 100_000, seed: int = 0) -> MinhashEntry:
    p, q = set_pair(s, overlap)
    est = CollisionEstimate.from_hits(minhash_collisions(p, q, trials, seed))
    return MinhashEntry(s, overlap, jaccard(p, q), l1_collision_form(s, overlap), est)
