"""Inner-level family: Gaussian partitioning of a sphere of radius ``eta * c``.

A sampled function owns an endless stream of Gaussian directions ``w_1, w_2,
...`` generated lazily from its seed.  A point is first rescaled onto the
sphere; its key is the index of the first direction whose cap
``<x, w> >= eta * c * epsilon * sqrt(d)`` contains it.  The stream is cut
after ``max_parts`` directions and uncovered points get the overflow key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal, norm

from . import _rng
from .families import OVERFLOW, CollisionEstimate, HashFunction, LshFamily
from .geometry import SLACK

DIRECTION_BLOCK = 256
_STREAM_CHUNK = 1 << 20


@dataclass(frozen=True)
class SphericalParams:
    eta: float
    c: float
    d: int
    epsilon: float | None = None
    max_parts: int = 1_000_000
    strict: bool = False

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.d**-0.25)
        if self.eta < 0.5:
            raise ValueError(f"eta must be >= 1/2, got {self.eta}")
        if self.c <= 1:
            raise ValueError(f"c must be > 1, got {self.c}")
        if not self.d**-0.5 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (d^-1/2, 1), got {self.epsilon}")
        if self.max_parts < 1:
            raise ValueError("max_parts must be >= 1")

    @property
    def radius(self) -> float:
        return self.eta * self.c

    @property
    def threshold(self) -> float:
        return self.radius * self.epsilon * math.sqrt(self.d)

    @property
    def unit_threshold(self) -> float:
        """Cap threshold for unit vectors, ``epsilon * sqrt(d)``."""
        return self.epsilon * math.sqrt(self.d)


class SphericalFunction(HashFunction):
    key_size = 1

    def __init__(self, params: SphericalParams, seed):
        self.params = params
        self.seed = _rng.as_key(seed)

    def direction_block(self, b: int) -> np.ndarray:
        rng = _rng.keyed_rng(*self.seed, _rng.DIRECTION, b)
        return rng.standard_normal((DIRECTION_BLOCK, self.params.d))

    def hash_many(self, X) -> np.ndarray:
        p = self.params
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != p.d:
            raise ValueError(f"expected an (n, {p.d}) array, got shape {X.shape}")
        norms = np.linalg.norm(X, axis=1)
        _check_norms(norms, p)
        on_shell = X * (p.radius / norms)[:, None]
        keys = np.full((len(X), 1), OVERFLOW, dtype=np.int64)
        pending = np.arange(len(X))
        for b in range(math.ceil(p.max_parts / DIRECTION_BLOCK)):
            if pending.size == 0:
                break
            W = self.direction_block(b)[: p.max_parts - b * DIRECTION_BLOCK]
            inside = on_shell[pending] @ W.T >= p.threshold
            found = inside.any(axis=1)
            keys[pending[found], 0] = b * DIRECTION_BLOCK + inside[found].argmax(axis=1)
            pending = pending[~found]
        return keys


def _check_norms(norms: np.ndarray, p: SphericalParams) -> None:
    if np.any(norms == 0.0):
        raise ValueError("the zero vector has no direction to hash")
    if p.strict and np.any(np.abs(norms - p.radius) > 1.0 + SLACK):
        raise ValueError(f"point off the shell [{p.radius - 1}, {p.radius + 1}] (strict mode)")


class SphericalFamily(LshFamily):
    key_size = 1

    def __init__(self, params: SphericalParams):
        self.params = params
        self.dim = params.d

    def sample(self, seed) -> SphericalFunction:
        return SphericalFunction(self.params, seed)

    def check_domain(self, x) -> None:
        _check_norms(np.atleast_1d(np.linalg.norm(x)), self.params)

    def projected_collisions(self, u, v, trials, seed):
        # <u', w> and <v', w> are jointly Gaussian with correlation cos(alpha), so the
        # whole direction stream reduces to a stream of correlated pairs.
        p = self.params
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        cos_a = float(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1.0, 1.0))
        sin_a = math.sqrt(max(0.0, 1.0 - cos_a * cos_a))
        s = p.unit_threshold
        rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PROJECTED_MC)
        hits = np.empty(trials, dtype=bool)
        done = 0
        overflowed = 0
        start = 0
        base = 0
        while done < trials:
            g = rng.standard_normal((2, _STREAM_CHUNK))
            xu = g[0]
            xv = cos_a * g[0] + sin_a * g[1]
            cu = xu >= s
            cv = xv >= s
            where = np.flatnonzero(cu | cv)
            both = (cu & cv)[where]
            for h, same in zip((where + base).tolist(), both.tolist()):
                while h - start >= p.max_parts and done < trials:
                    hits[done] = True
                    overflowed += 2
                    done += 1
                    start += p.max_parts
                if done >= trials:
                    break
                hits[done] = same
                done += 1
                start = h + 1
            base += _STREAM_CHUNK
            while base - start >= p.max_parts and done < trials:
                hits[done] = True
                overflowed += 2
                done += 1
                start += p.max_parts
        return hits, overflowed / (2 * trials)


def sample_spherical(params: SphericalParams, seed) -> SphericalFunction:
    return SphericalFunction(params, seed)


def chord_angle(s: float, eta: float, c: float) -> float:
    """Angle subtended by a chord of length ``s`` on the sphere of radius ``eta * c``."""
    r = eta * c
    if not 0 <= s <= 2 * r:
        raise ValueError(f"chord {s} impossible on a sphere of radius {r}")
    return 2.0 * math.asin(s / (2.0 * r))


def tan_sq_half_angle(s: float, eta: float, c: float) -> float:
    """``tan^2(alpha/2)`` for the chord ``s``: ``(s/(eta c))^2 / (4 - (s/(eta c))^2)``."""
    r = eta * c
    if s < 0 or s >= 2 * r:
        raise ValueError(f"chord {s} must lie in [0, {2 * r})")
    x = (s / r) ** 2
    return x / (4.0 - x)


def predicted_log_inv_p(s: float, params: SphericalParams, alpha0: float | None = None,
                        slack: float = 3.0) -> tuple[float, float]:
    """Bracket ``(lower, upper)`` on ``ln(1/p)`` for two shell points at chord ``s``.

    ``alpha0`` defaults to the pair's own angle; the unspecified O(1) terms are
    replaced by the additive ``slack``.
    """
    eps, d = params.epsilon, params.d
    lead = eps * eps * d / 2.0
    lower = lead * tan_sq_half_angle(s, params.eta, params.c) - slack
    a0 = chord_angle(s, params.eta, params.c) if alpha0 is None else alpha0
    if a0 >= math.pi / 2:
        raise ValueError(f"upper bracket needs an angle below pi/2, got {a0}")
    half = math.tan(a0 / 2.0)
    if half == 0.0:
        # zero angle: the pair always collides, ln(1/p) = 0
        return lower, slack
    upper = lead * half * half + math.log(eps * math.sqrt(d) * half) + slack
    return lower, upper


def predicted_rho(eta: float, c: float) -> float:
    """Finite-form exponent ``(4 - 1/eta^2) / (4 - 1/(eta c)^2) / c^2``."""
    if eta < 0.5:
        raise ValueError(f"eta must be >= 1/2, got {eta}")
    if c <= 1:
        raise ValueError(f"c must be > 1, got {c}")
    return (4.0 - 1.0 / eta**2) / (4.0 - 1.0 / (eta * c) ** 2) / c**2


def ideal_collision_probability(s: float, params: SphericalParams) -> float:
    """Uncapped collision probability at chord ``s`` by bivariate-normal integration."""
    alpha = chord_angle(s, params.eta, params.c)
    t = params.unit_threshold
    if alpha == 0.0:
        return 1.0
    cos_a = math.cos(alpha)
    joint = float(multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, cos_a], [cos_a, 1.0]]).cdf([-t, -t]))
    single = float(norm.sf(t))
    return joint / (2.0 * single - joint)


def orthant_prob(s: float, alpha: float, trials: int, seed) -> CollisionEstimate:
    """Monte-Carlo ``Pr[X >= s and cos(a) X - sin(a) Y >= s]`` for independent standard normals."""
    if s <= 0:
        raise ValueError("s must be positive")
    if not 0 <= alpha < math.pi / 2:
        raise ValueError(f"alpha must lie in [0, pi/2), got {alpha}")
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PROJECTED_MC)
    hits = np.empty(trials, dtype=bool)
    for lo in range(0, trials, _STREAM_CHUNK):
        m = min(_STREAM_CHUNK, trials - lo)
        x = rng.standard_normal(m)
        y = rng.standard_normal(m)
        hits[lo : lo + m] = (x >= s) & (math.cos(alpha) * x - math.sin(alpha) * y >= s)
    return CollisionEstimate.from_hits(hits)


def orthant_upper_bound(s: float, alpha: float, const: float = 1.0) -> float:
    return const * math.exp(-s * s * (1.0 + math.tan(alpha / 2.0) ** 2) / 2.0) / s


def orthant_lower_bound(s: float, alpha0: float, const: float = 0.1) -> float:
    half = math.tan(alpha0 / 2.0)
    return const * math.exp(-s * s * (1.0 + half * half) / 2.0) / (s * s * half)
