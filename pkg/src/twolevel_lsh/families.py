"""LSH family contract, tensoring, collision estimation and rho arithmetic.

Hash keys are fixed-length tuples of ints.  Every family reserves a leading
component of ``OVERFLOW`` for points that its (capped) partitioning process
left uncovered; all such points share one key per family.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import _rng
from .geometry import as_point

OVERFLOW = -1


def is_overflow(key) -> bool:
    return int(key[0]) == OVERFLOW


class HashFunction(abc.ABC):
    """A sampled hash function; evaluation is deterministic."""

    key_size: int

    @abc.abstractmethod
    def hash_many(self, X) -> np.ndarray:
        """Keys of each row of ``X`` as an ``(n, key_size)`` int64 array."""

    def __call__(self, x) -> tuple[int, ...]:
        return tuple(int(v) for v in self.hash_many(np.asarray(x, dtype=np.float64)[None, :])[0])


class LshFamily(abc.ABC):
    """A distribution over hash functions, addressed by seed."""

    key_size: int
    dim: int

    @property
    def atom_size(self) -> int:
        """Key length of one untensored component."""
        return self.key_size

    @abc.abstractmethod
    def sample(self, seed) -> HashFunction: ...

    def overflow_key(self) -> tuple[int, ...]:
        return (OVERFLOW,) + (0,) * (self.key_size - 1)

    def check_domain(self, x) -> None:
        """Raise if ``x`` is outside the family's domain."""

    def collision_curve(self, r: float) -> float | None:
        """Analytic collision probability at distance ``r`` when known."""
        return None

    def projected_collisions(self, u, v, trials: int, seed) -> tuple[np.ndarray, float]:
        """Simulate collisions of the pair from the statistics they actually depend on.

        Returns a boolean array of per-trial collisions and the fraction of the
        ``2 * trials`` evaluations that overflowed.  Families without such a
        reduction raise ``NotImplementedError``.
        """
        raise NotImplementedError(f"{type(self).__name__} has no projected estimator")


class TensoredFunction(HashFunction):
    def __init__(self, components: list[HashFunction]):
        if not components:
            raise ValueError("a tensored function needs at least one component")
        self.components = list(components)
        self.key_size = sum(f.key_size for f in self.components)

    def hash_many(self, X) -> np.ndarray:
        return np.concatenate([f.hash_many(X) for f in self.components], axis=1)


class TensoredFamily(LshFamily):
    """``H^k``: k independent functions, key is the concatenation."""

    def __init__(self, base: LshFamily, k: int):
        if k < 1:
            raise ValueError(f"tensor power must be >= 1, got {k}")
        self.base = base
        self.k = k
        self.key_size = base.key_size * k
        self.dim = base.dim

    @property
    def atom_size(self) -> int:
        return self.base.atom_size

    def sample(self, seed) -> TensoredFunction:
        key = _rng.as_key(seed)
        return TensoredFunction([self.base.sample(key + (j,)) for j in range(self.k)])

    def check_domain(self, x) -> None:
        self.base.check_domain(x)

    def collision_curve(self, r):
        p = self.base.collision_curve(r)
        return None if p is None else p**self.k

    def projected_collisions(self, u, v, trials, seed):
        key = _rng.as_key(seed)
        hit = np.ones(trials, dtype=bool)
        over = 0.0
        for j in range(self.k):
            h, o = self.base.projected_collisions(u, v, trials, key + (j,))
            hit &= h
            over += o
        return hit, over / self.k


def tensor(family: LshFamily, k: int) -> TensoredFamily:
    return TensoredFamily(family, k)


@dataclass(frozen=True)
class CollisionEstimate:
    p_hat: float
    trials: int
    stderr: float
    overflow_rate: float = 0.0

    @classmethod
    def from_hits(cls, hits, overflow_rate: float = 0.0) -> "CollisionEstimate":
        hits = np.asarray(hits, dtype=bool)
        trials = int(hits.size)
        if trials < 1:
            raise ValueError("need at least one trial")
        p = float(hits.mean())
        return cls(p, trials, math.sqrt(p * (1.0 - p) / trials), float(overflow_rate))

    def upper(self, sigmas: float = 3.0) -> float:
        return self.p_hat + sigmas * self.stderr

    def lower(self, sigmas: float = 3.0) -> float:
        return self.p_hat - sigmas * self.stderr


def estimate_collision(family: LshFamily, u, v, trials: int, seed, method: str = "direct") -> CollisionEstimate:
    """Monte-Carlo estimate of ``Pr_h[h(u) == h(v)]``.

    ``method="direct"`` samples ``trials`` independent functions and evaluates
    both points.  ``method="projected"`` uses the family's exact distributional
    reduction (see :meth:`LshFamily.projected_collisions`), which is much
    faster for high-dimensional families.  Both are deterministic in ``seed``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    u = as_point(u, family.dim)
    v = as_point(v, family.dim)
    family.check_domain(u)
    family.check_domain(v)
    key = _rng.as_key(seed)
    if method == "projected":
        hits, over = family.projected_collisions(u, v, trials, key)
        return CollisionEstimate.from_hits(hits, over)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    pair = np.stack([u, v])
    hits = np.empty(trials, dtype=bool)
    overflowed = 0
    for i in range(trials):
        keys = family.sample(key + (_rng.TRIAL, i)).hash_many(pair)
        hits[i] = np.array_equal(keys[0], keys[1])
        overflowed += _count_overflow(keys, family)
    return CollisionEstimate.from_hits(hits, overflowed / (2 * trials))


def _count_overflow(keys: np.ndarray, family: LshFamily) -> int:
    comps = keys.reshape(keys.shape[0], -1, family.atom_size)
    return int(np.any(comps[:, :, 0] == OVERFLOW, axis=1).sum())


def gaussian_tail(t: float) -> float:
    """``Pr[X >= t]`` for a standard normal ``X``."""
    if t <= 0:
        raise ValueError("t must be positive")
    return float(0.5 * erfc(t / math.sqrt(2.0)))


def gaussian_tail_bounds(t: float) -> tuple[float, float]:
    """Classical lower/upper bounds on the standard normal tail at ``t``.

    The lower bound is non-positive (hence vacuous) for ``t <= 1``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    base = math.exp(-t * t / 2.0) / math.sqrt(2.0 * math.pi)
    return base * (1.0 / t - 1.0 / t**3), base / t


def rho_from_probs(p1: float, p2: float) -> float:
    """``ln(1/p1) / ln(1/p2)``."""
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        raise ValueError(f"probabilities must lie in (0, 1), got p1={p1}, p2={p2}")
    if p1 <= p2:
        raise ValueError(f"need p1 > p2, got p1={p1}, p2={p2}")
    return math.log(1.0 / p1) / math.log(1.0 / p2)
