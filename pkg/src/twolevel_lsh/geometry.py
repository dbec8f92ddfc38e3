"""Euclidean primitives: distances, normalization, enclosing balls, JL maps.

Points are plain 1-D ``float64`` arrays; a :class:`Dataset` wraps an ``(n, d)``
array whose row index is the point id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import _rng

# inclusive-side slack for threshold comparisons
SLACK = 1e-9


def as_point(x, dim: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"a point must be a non-empty 1-D vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    if dim is not None and p.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {p.size}")
    return p


@dataclass(frozen=True)
class Dataset:
    """Points ``P`` with implicit ids ``0..n-1``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"dataset must be a 2-D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset has non-finite coordinates")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> np.ndarray:
        return self.points[i]


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")


def distance(u, v) -> float:
    u = as_point(u)
    v = as_point(v, u.size)
    return float(np.linalg.norm(u - v))


def normalize_to_radius(x, radius: float) -> np.ndarray:
    """Rescale ``x`` so that its norm equals ``radius``."""
    x = as_point(x)
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return x * (radius / norm)


def normalized_distance_sq(u, v) -> float:
    """Squared distance between ``u/|u|`` and ``v/|v|``, computed from norms.

    Uses ``(|u - v|^2 - (|u| - |v|)^2) / (|u| |v|)``.
    """
    u = as_point(u)
    v = as_point(v, u.size)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("normalized distance is undefined for the zero vector")
    diff = np.linalg.norm(u - v)
    return max(0.0, float((diff * diff - (nu - nv) ** 2) / (nu * nv)))


def diameter(points) -> float:
    """Largest pairwise distance (brute force)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(pdist(pts).max())


def smallest_enclosing_ball(points, delta: float = 0.01, max_iter: int = 100_000) -> Ball:
    """(1 + delta)-approximate minimum enclosing ball.

    Frank-Wolfe on the dual of the MEB problem, stopping on a duality-gap
    certificate: the returned radius is the true covering radius of the
    returned center and is at most ``(1 + delta)`` times the optimum.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("smallest_enclosing_ball needs a non-empty (m, d) array")
    if not 0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 0.5], got {delta}")
    m = len(pts)
    if m == 1:
        return Ball(pts[0].copy(), 0.0)

    # start on the two ends of an approximate diameter
    a = int(np.argmax(np.sum((pts - pts[0]) ** 2, axis=1)))
    b = int(np.argmax(np.sum((pts - pts[a]) ** 2, axis=1)))
    weights = np.zeros(m)
    weights[a] += 0.5
    weights[b] += 0.5
    center = 0.5 * (pts[a] + pts[b])
    bound = (1.0 + delta) ** 2
    for _ in range(max_iter):
        d2 = np.sum((pts - center) ** 2, axis=1)
        j = int(np.argmax(d2))
        far = d2[j]
        dual = float(weights @ d2)
        if dual <= 0.0:
            # every point coincides with the center
            return Ball(center, float(np.sqrt(far)))
        if far <= bound * dual:
            break
        gap = far / dual - 1.0
        step = gap / (2.0 * (1.0 + gap))
        weights *= 1.0 - step
        weights[j] += step
        center = (1.0 - step) * center + step * pts[j]
    radius = float(np.sqrt(np.max(np.sum((pts - center) ** 2, axis=1))))
    return Ball(center, radius)


def jung_radius_bound(diam: float) -> float:
    """Radius of a ball guaranteed to enclose any set of the given diameter."""
    if diam < 0:
        raise ValueError("diameter must be non-negative")
    return diam / math.sqrt(2.0)


def jl_target_dim(n_points: int, eps: float, const: float = 8.0) -> int:
    """``ceil(const * ln(n) / eps^2)`` output dimensions."""
    if n_points < 2 or eps <= 0:
        raise ValueError("need n_points >= 2 and eps > 0")
    return math.ceil(const * math.log(n_points) / eps**2)


@dataclass(frozen=True)
class JlMap:
    """Dense Gaussian map ``R^in_dim -> R^out_dim`` with entries scaled by ``1/sqrt(out_dim)``."""

    seed: int
    in_dim: int
    out_dim: int
    scale: float
    matrix: np.ndarray = field(repr=False, compare=False)

    def __call__(self, x) -> np.ndarray:
        return apply_jl(self, x)


def sample_jl(in_dim: int, out_dim: int, seed: int) -> JlMap:
    if out_dim < 1 or in_dim < 1:
        raise ValueError("in_dim and out_dim must be positive")
    scale = 1.0 / math.sqrt(out_dim)
    g = _rng.keyed_rng(*_rng.as_key(seed), _rng.JL).standard_normal((out_dim, in_dim))
    g *= scale
    g.setflags(write=False)
    return JlMap(seed=seed, in_dim=in_dim, out_dim=out_dim, scale=scale, matrix=g)


def apply_jl(jl: JlMap, x) -> np.ndarray:
    """Apply the map to one point or to each row of an ``(n, in_dim)`` array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != jl.in_dim:
        raise ValueError(f"dimension mismatch: map expects {jl.in_dim}, got {arr.shape[-1]}")
    return arr @ jl.matrix.T
