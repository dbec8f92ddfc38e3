"""Outer-level family: Gaussian projection followed by ball carving.

A point is projected to ``R^t`` with a ``t x d`` matrix of raw standard normal
entries, then tested against a stream of randomly shifted grids of side
``4w``.  Each grid carries a ball of radius ``w`` around every lattice point;
the key is ``(grid index, lattice coordinates)`` of the first ball containing
the projected point, or the overflow key after ``max_grids`` misses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _rng
from .families import OVERFLOW, HashFunction, LshFamily

GRID_BLOCK = 256
_ROW_CHUNK = 2048


def default_t(n: int) -> int:
    """Projected dimension ``max(4, ceil(ln(n)^(2/3)))``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return max(4, math.ceil(math.log(n) ** (2.0 / 3.0) - 1e-12))


@dataclass(frozen=True)
class BallCarvingParams:
    t: int
    w: float | None = None
    max_grids: int = 4096
    A: float = 0.5
    epsilon: float | None = None

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.w is None:
            object.__setattr__(self, "w", math.sqrt(self.t))
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.t**-0.5)
        if not self.w > 0:
            raise ValueError("w must be positive")
        if self.max_grids < 1:
            raise ValueError("max_grids must be >= 1")
        if not 0 < self.A < 1:
            raise ValueError("A must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def side(self) -> float:
        return 4.0 * self.w

    def cover_probability(self) -> float:
        """Chance that one grid's balls cover a fixed projected point."""
        t = self.t
        return math.pi ** (t / 2) / math.gamma(t / 2 + 1) / 4.0**t

    def overflow_probability(self) -> float:
        return (1.0 - self.cover_probability()) ** self.max_grids

    def bounds(self) -> "AnalyticBounds":
        return AnalyticBounds(self.t, self.epsilon, self.A)


@dataclass(frozen=True)
class AnalyticBounds:
    """Constants of the closed-form collision bounds ``L`` (distance 1) and ``U(c)``."""

    t: int
    epsilon: float
    A: float = 0.5

    def L(self) -> float:
        return L_bound(self)

    def U(self, c: float) -> float:
        return U_bound(c, self)


def L_bound(b: AnalyticBounds) -> float:
    e = b.epsilon
    return b.A / (2.0 * math.sqrt(b.t)) / (1.0 + e + 8.0 * e * e) ** (b.t / 2.0)


def U_bound(c: float, b: AnalyticBounds) -> float:
    if c <= 1:
        raise ValueError(f"U(c) needs c > 1, got {c}")
    return 2.0 / (1.0 + c * c * b.epsilon) ** (b.t / 2.0)


class BallCarvingFunction(HashFunction):
    def __init__(self, params: BallCarvingParams, d: int, seed):
        if d < params.t:
            raise ValueError(f"input dimension {d} is below the projected dimension t={params.t}")
        self.params = params
        self.d = d
        self.seed = _rng.as_key(seed)
        self.key_size = 1 + params.t
        self.projection = _rng.keyed_rng(*self.seed, _rng.PROJECTION).standard_normal((params.t, d))
        self._shifts: list[np.ndarray] = []

    def _shift_block(self, b: int) -> np.ndarray:
        while len(self._shifts) <= b:
            i = len(self._shifts)
            rng = _rng.keyed_rng(*self.seed, _rng.GRID_SHIFT, i)
            self._shifts.append(rng.uniform(0.0, self.params.side, (GRID_BLOCK, self.params.t)))
        return self._shifts[b]

    def hash_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"expected an (n, {self.d}) array, got shape {X.shape}")
        Y = X @ self.projection.T
        keys = np.zeros((len(Y), self.key_size), dtype=np.int64)
        keys[:, 0] = OVERFLOW
        for lo in range(0, len(Y), _ROW_CHUNK):
            self._carve(Y[lo : lo + _ROW_CHUNK], keys[lo : lo + _ROW_CHUNK])
        return keys

    def _carve(self, Y: np.ndarray, keys: np.ndarray) -> None:
        p = self.params
        pending = np.arange(len(Y))
        for b in range(math.ceil(p.max_grids / GRID_BLOCK)):
            if pending.size == 0:
                return
            shifts = self._shift_block(b)[: p.max_grids - b * GRID_BLOCK]
            pending = _carve_block(Y, shifts, b * GRID_BLOCK, p.side, p.w * p.w, keys, pending)


@njit(cache=True)
def _carve_block(Y, shifts, first_grid, side, w2, keys, pending):
    t = Y.shape[1]
    left = np.empty(pending.size, dtype=np.int64)
    n_left = 0
    cell = np.empty(t)
    for idx in pending:
        hit = False
        for g in range(shifts.shape[0]):
            d2 = 0.0
            for j in range(t):
                rel = (Y[idx, j] - shifts[g, j]) / side
                cell[j] = np.rint(rel)
                off = (rel - cell[j]) * side
                d2 += off * off
                if d2 > w2:
                    break
            if d2 <= w2:
                keys[idx, 0] = first_grid + g
                for j in range(t):
                    keys[idx, j + 1] = np.int64(cell[j])
                hit = True
                break
        if not hit:
            left[n_left] = idx
            n_left += 1
    return left[:n_left]


class BallCarvingFamily(LshFamily):
    def __init__(self, params: BallCarvingParams, d: int):
        if d < params.t:
            raise ValueError(f"input dimension {d} is below the projected dimension t={params.t}")
        self.params = params
        self.dim = d
        self.key_size = 1 + params.t

    def sample(self, seed) -> BallCarvingFunction:
        return BallCarvingFunction(self.params, self.dim, seed)

    def projected_collisions(self, u, v, trials, seed):
        # Keys of u and v depend only on the projected offset G(u - v) ~ N(0, r^2 I_t)
        # and, per grid, on u's position modulo the lattice, which the uniform shift
        # makes uniform on the cell.
        p = self.params
        t, side, w2 = p.t, p.side, p.w * p.w
        r = float(np.linalg.norm(np.asarray(u) - np.asarray(v)))
        rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PROJECTED_MC)
        offsets = rng.standard_normal((trials, t)) * r
        per_pass = int(min(1024, max(16, 0.75 / p.cover_probability())))
        chunk = max(1, 2**22 // (per_pass * t))
        hits = np.zeros(trials, dtype=bool)
        overflowed = 0
        for lo in range(0, trials, chunk):
            delta = offsets[lo : lo + chunk]
            res = np.zeros(len(delta), dtype=bool)
            pending = np.arange(len(delta))
            used = 0
            while pending.size and used < p.max_grids:
                g = min(per_pass, p.max_grids - used)
                a = rng.uniform(0.0, side, (pending.size, g, t))
                b = a + delta[pending, None, :]
                za = np.rint(a / side)
                zb = np.rint(b / side)
                ca = np.einsum("mgt,mgt->mg", a - za * side, a - za * side) <= w2
                cb = np.einsum("mgt,mgt->mg", b - zb * side, b - zb * side) <= w2
                either = ca | cb
                found = either.any(axis=1)
                first = either.argmax(axis=1)
                j = np.arange(pending.size)
                same = ca[j, first] & cb[j, first] & np.all(za[j, first] == zb[j, first], axis=1)
                res[pending[found]] = same[found]
                pending = pending[~found]
                used += g
            # both keys are the shared overflow key
            res[pending] = True
            overflowed += 2 * pending.size
            hits[lo : lo + chunk] = res
        return hits, overflowed / (2 * trials)


def sample_ball_carving(params: BallCarvingParams, d: int, seed) -> BallCarvingFunction:
    return BallCarvingFunction(params, d, seed)
