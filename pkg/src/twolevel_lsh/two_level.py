"""Data-aware two-level index.

Outer level: a tensored ball-carving function splits the data into buckets.
Each bucket is pruned to bounded diameter, centered (minimum enclosing ball or
pivot), and cut into overlapping annuli of width 2 around its center; every
annulus gets its own tensored spherical Gaussian function at the matching
shell radius.  A query checks the bucket's pivot first, then at most three
annuli.  Several independent tables are probed under a global work limit.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import pdist, squareform

from . import _rng
from .ball_carving import AnalyticBounds, BallCarvingFamily, BallCarvingParams, default_t
from .families import CollisionEstimate, TensoredFamily, TensoredFunction, estimate_collision
from .gaussian_lsh import SphericalFamily, SphericalParams, ideal_collision_probability
from .geometry import SLACK, Dataset, JlMap, as_point, sample_jl, smallest_enclosing_ball

SQRT2 = math.sqrt(2.0)
# key of the translated zero vector (a member sitting exactly on the center)
ORIGIN = -2
FORMAT_VERSION = 1


class ParamMode(str, enum.Enum):
    ANALYTIC = "analytic"
    EMPIRICAL = "empirical"


class Variant(str, enum.Enum):
    MEB = "meb"
    PIVOT = "pivot"


class InfeasibleParameters(ValueError):
    """Parameter selection has no solution at the requested scales."""


@dataclass(frozen=True)
class TwoLevelParams:
    c: float
    tau: float = SQRT2
    n: int | None = None
    delta_meb: float = 0.01
    param_mode: ParamMode = ParamMode.EMPIRICAL
    variant: Variant = Variant.MEB
    jl: bool = False
    epsilon_jl: float | None = None
    seed: int = 0
    tables_override: int | None = None
    k_override: int | None = None
    r: float = 1.0
    t: int | None = None
    calibration_trials: int = 20_000
    q_trials: int = 1_000
    sigmas: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "param_mode", ParamMode(self.param_mode))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.epsilon_jl is None:
            object.__setattr__(self, "epsilon_jl", 1.0 / (2.0 * self.c))
        if not self.c > 1:
            raise ValueError(f"c must be > 1, got {self.c}")
        if not self.tau > 1:
            raise ValueError(f"tau must be > 1, got {self.tau}")
        if not 0 <= self.delta_meb <= 0.5:
            raise ValueError("delta_meb must lie in [0, 0.5]")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.tables_override is not None and self.tables_override < 1:
            raise ValueError("tables_override must be >= 1")
        if self.k_override is not None and self.k_override < 1:
            raise ValueError("k_override must be >= 1")
        if self.calibration_trials < 1 or self.q_trials < 100:
            raise ValueError("need calibration_trials >= 1 and q_trials >= 100")

    def to_json(self) -> dict:
        d = asdict(self)
        d["param_mode"] = self.param_mode.value
        d["variant"] = self.variant.value
        return d


# ---------------------------------------------------------------- formulas


def choose_T(tau: float, c: float, delta_meb: float = 0.01) -> int:
    """Largest annulus index needed to cover a bucket of diameter ``tau * c``."""
    if tau <= 1 or c <= 1:
        raise ValueError("need tau > 1 and c > 1")
    return math.ceil((1.0 + delta_meb) * tau * c / SQRT2 - c / 2.0 - SLACK) + 1


def choose_T_pivot(tau: float, c: float) -> int:
    """Annulus range when the center is a member and the bucket radius is ``tau * c``."""
    if tau <= 1 or c <= 1:
        raise ValueError("need tau > 1 and c > 1")
    return math.ceil(tau * c - c / 2.0 - SLACK) + 1


def _smallest_power(ratio: float, factor: float, target: float) -> int:
    # smallest k >= 1 with factor * ratio**k <= target
    if factor <= target:
        return 1
    k = max(1, math.ceil(math.log(target / factor) / math.log(ratio) - 1e-12))
    while factor * ratio**k > target:
        k += 1
    while k > 1 and factor * ratio ** (k - 1) <= target:
        k -= 1
    return k


def choose_k(n: int, tau: float, c: float, source) -> int:
    """Smallest outer tensor power with ``ratio^k <= 1/(2n)``.

    ``source`` is the ratio itself, :class:`AnalyticBounds` (``U(tau c - 1)/L``)
    or an :class:`OuterCalibration` (measured, inflated ratio).
    """
    if isinstance(source, AnalyticBounds):
        ratio = source.U(tau * c - 1.0) / source.L()
    elif isinstance(source, OuterCalibration):
        ratio = source.separation_ratio()
    else:
        ratio = float(source)
    if not ratio < 1:
        raise InfeasibleParameters(
            f"outer family cannot separate scales at these parameters (ratio {ratio:.4g} >= 1)")
    if ratio <= 0:
        return 1
    return _smallest_power(ratio, 1.0, 1.0 / (2.0 * n))


def choose_k_l(n: int, p2_worst: float, outer_factor: float) -> int:
    """Smallest inner tensor power with ``outer_factor * p2_worst^k <= 1/(3n)``."""
    if not p2_worst < 1:
        raise InfeasibleParameters(f"inner far-pair probability {p2_worst:.4g} >= 1")
    if p2_worst <= 0:
        return 1
    return _smallest_power(p2_worst, outer_factor, 1.0 / (3.0 * n))


def rho_two_level(tau: float, c: float) -> float:
    if tau <= 1:
        raise ValueError(f"tau must be > 1, got {tau}")
    if c <= 1:
        raise ValueError(f"c must be > 1, got {c}")
    return _rho_bracket(tau) / c**2


def _rho_bracket(tau: float) -> float:
    return 1.0 - 1.0 / (2.0 * tau**2) + 1.0 / (2.0 * tau**4)


def optimal_tau() -> float:
    res = minimize_scalar(_rho_bracket, bounds=(1.0 + 1e-9, 10.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def pivot_rho_bound(c: float) -> float:
    if c <= 1:
        raise ValueError(f"c must be > 1, got {c}")
    return (15.0 / 16.0) / c**2


# ------------------------------------------------------------- calibration


@dataclass(frozen=True)
class OuterCalibration:
    """Measured outer collision probabilities at distances 1, c and tau*c - 1."""

    near: CollisionEstimate
    at_c: CollisionEstimate
    at_far: CollisionEstimate
    sigmas: float = 3.0

    def separation_ratio(self) -> float:
        p1, pf = self.near.p_hat, self.at_far.p_hat
        if p1 == 0:
            return math.inf
        rel = math.hypot(self.near.stderr / p1, self.at_far.stderr / pf if pf > 0 else 0.0)
        return pf / p1 * (1.0 + self.sigmas * rel)


@functools.lru_cache(maxsize=64)
def calibrate_outer(bc: BallCarvingParams, tau: float, c: float, trials: int, seed: int,
                    sigmas: float = 3.0) -> OuterCalibration:
    family = BallCarvingFamily(bc, bc.t)
    origin = np.zeros(bc.t)

    def at(dist, tag):
        v = np.zeros(bc.t)
        v[0] = dist
        return estimate_collision(family, origin, v, trials, (seed, _rng.CALIBRATION, tag),
                                  method="projected")

    return OuterCalibration(at(1.0, 0), at(c, 1), at(tau * c - 1.0, 2), sigmas)


def worst_inner_pair(l: int, c: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Two points at norm ``c/2 + l + 1`` and distance ``c``: the most colliding far pair."""
    rad = c / 2.0 + l + 1.0
    half = math.asin(c / (2.0 * rad))
    u = np.zeros(d)
    v = np.zeros(d)
    u[0] = rad
    v[0] = rad * math.cos(2 * half)
    v[1] = rad * math.sin(2 * half)
    return u, v


@functools.lru_cache(maxsize=256)
def inner_p2_worst(l: int, c: float, d: int, mode: ParamMode, trials: int, seed: int,
                   sigmas: float = 3.0) -> float:
    params = SphericalParams(eta=0.5 + l / c, c=c, d=d)
    u, v = worst_inner_pair(l, c, d)
    if mode is ParamMode.ANALYTIC:
        chord = params.radius * math.sqrt(2.0 - 2.0 * float(u @ v) / float(u @ u))
        return ideal_collision_probability(chord, params)
    est = estimate_collision(SphericalFamily(params), u, v, trials,
                             (seed, _rng.CALIBRATION, 10 + l), method="projected")
    return min(1.0, est.upper(sigmas))


@dataclass(frozen=True)
class Plan:
    """Everything fixed before any table is built."""

    c: float
    tau: float
    d: int
    n: int
    variant: Variant
    delta_meb: float
    T: int
    k: int
    k_tilde: tuple[int, ...]
    outer_params: BallCarvingParams
    outer_near: float
    outer_far_factor: float
    inner_p2: tuple[float, ...]

    @property
    def outer_family(self) -> TensoredFamily:
        return TensoredFamily(BallCarvingFamily(self.outer_params, self.d), self.k)

    def inner_family(self, l: int) -> TensoredFamily:
        sp = SphericalParams(eta=0.5 + l / self.c, c=self.c, d=self.d)
        return TensoredFamily(SphericalFamily(sp), self.k_tilde[l])

    def predicted_outer_near(self) -> float:
        """Probability that a pair at distance 1 shares an outer bucket."""
        return self.outer_near**self.k


def make_plan(params: TwoLevelParams, n: int, d: int, c: float) -> Plan:
    """Select ``T``, ``k`` and ``k_tilde`` for data of size ``n`` in ``R^d`` at approximation ``c``."""
    t = params.t if params.t is not None else default_t(max(n, 2))
    if d < t:
        raise ValueError(f"dimension {d} is below the projected dimension t={t}")
    bc = BallCarvingParams(t=t)
    if params.variant is Variant.MEB:
        T = choose_T(params.tau, c, params.delta_meb)
    else:
        T = choose_T_pivot(params.tau, c)
    if params.param_mode is ParamMode.ANALYTIC:
        b = bc.bounds()
        k = params.k_override or choose_k(n, params.tau, c, b)
        near = b.L()
        factor = b.U(c) ** k
    else:
        cal = calibrate_outer(bc, params.tau, c, params.calibration_trials, params.seed, params.sigmas)
        k = params.k_override or choose_k(n, params.tau, c, cal)
        near = cal.near.p_hat
        factor = min(1.0, cal.at_c.upper(params.sigmas)) ** k
    p2 = tuple(inner_p2_worst(l, c, d, params.param_mode, params.calibration_trials, params.seed,
                              params.sigmas) for l in range(T + 1))
    k_tilde = tuple(choose_k_l(n, p, factor) for p in p2)
    return Plan(c=c, tau=params.tau, d=d, n=n, variant=params.variant, delta_meb=params.delta_meb,
                T=T, k=k, k_tilde=k_tilde, outer_params=bc, outer_near=near,
                outer_far_factor=factor, inner_p2=p2)


# ------------------------------------------------------------------ tables


@dataclass
class Annulus:
    l: int
    seed: tuple[int, ...]
    keys: dict[bytes, np.ndarray]


@dataclass
class Bucket:
    members: np.ndarray
    center: np.ndarray
    pivot: int
    annuli: dict[int, Annulus] = field(default_factory=dict)


@dataclass
class Table:
    seed: tuple[int, ...]
    outer: TensoredFunction
    buckets: dict[bytes, Bucket]


def prune_far_pairs(points: np.ndarray, limit: float) -> np.ndarray:
    """Mask of survivors after repeatedly deleting the lexicographically first pair farther than ``limit``."""
    m = len(points)
    alive = np.ones(m, dtype=bool)
    if m < 2:
        return alive
    far = squareform(pdist(points)) > limit + SLACK
    for i in range(m):
        if not alive[i]:
            continue
        js = np.flatnonzero(far[i, i + 1 :] & alive[i + 1 :])
        if js.size:
            alive[i] = False
            alive[i + 1 + js[0]] = False
    return alive


def shell_indices(dist: float, c: float, T: int) -> list[int]:
    """Annuli ``l <= T`` whose shell ``[c/2 + l - 1, c/2 + l + 1]`` contains ``dist``."""
    lo = math.ceil(dist - c / 2.0 - 1.0 - SLACK)
    hi = math.floor(dist - c / 2.0 + 1.0 + SLACK)
    return [l for l in range(max(lo, 0), min(hi, T) + 1)]


def _inner_keys(plan: Plan, l: int, seed, X: np.ndarray) -> np.ndarray:
    keys = np.full((len(X), plan.k_tilde[l]), ORIGIN, dtype=np.int64)
    nz = np.any(X != 0.0, axis=1)
    if nz.any():
        keys[nz] = plan.inner_family(l).sample(seed).hash_many(X[nz])
    return keys


def _group(keys: np.ndarray, ids: np.ndarray) -> dict[bytes, np.ndarray]:
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    splits = np.cumsum(np.bincount(inverse, minlength=len(uniq)))[:-1]
    return {u.tobytes(): g for u, g in zip(uniq, np.split(ids[order], splits))}


def build_table(points: np.ndarray, plan: Plan, seed: tuple[int, ...]) -> Table:
    outer = plan.outer_family.sample(seed + (_rng.OUTER,))
    groups = _group(outer.hash_many(points), np.arange(len(points)))
    limit = plan.tau * plan.c
    buckets = {}
    for ordinal, (key, members) in enumerate(groups.items()):
        pts = points[members]
        if plan.variant is Variant.MEB:
            keep = prune_far_pairs(pts, limit)
            members, pts = members[keep], pts[keep]
            if members.size == 0:
                continue
            center = smallest_enclosing_ball(pts, plan.delta_meb).center if len(pts) > 1 else pts[0].copy()
        else:
            keep = np.linalg.norm(pts - pts[0], axis=1) <= limit + SLACK
            members, pts = members[keep], pts[keep]
            center = pts[0].copy()
        dists = np.linalg.norm(pts - center, axis=1)
        bucket = Bucket(members, center, int(members[np.argmin(dists)]))
        for l in range(plan.T + 1):
            inside = (dists >= plan.c / 2 + l - 1 - SLACK) & (dists <= plan.c / 2 + l + 1 + SLACK)
            if not inside.any():
                continue
            aseed = seed + (_rng.INNER, ordinal, l)
            keys = _inner_keys(plan, l, aseed, pts[inside] - center)
            bucket.annuli[l] = Annulus(l, aseed, _group(keys, members[inside]))
        buckets[key] = bucket
    return Table(seed, outer, buckets)


# ------------------------------------------------------------------- query


@dataclass(frozen=True)
class QueryResult:
    answer: int | None
    points_examined: int
    tables_probed: int
    annuli_probed: int
    non_answers: int = 0
    max_annuli_per_table: int = 0


def query_single_table(table: Table, plan: Plan, points: np.ndarray, q: np.ndarray, accept,
                       outer_key: bytes | None = None, budget: int | None = None):
    """Probe one table.

    Returns ``(answer, examined, non_answers, annuli_probed)``.  ``accept(i)``
    decides whether point ``i`` is a valid answer; scanning stops early once
    ``budget`` non-answers have been seen.
    """
    if outer_key is None:
        outer_key = table.outer.hash_many(q[None, :])[0].tobytes()
    bucket = table.buckets.get(outer_key)
    if bucket is None:
        return None, 0, 0, 0
    if accept(bucket.pivot):
        return bucket.pivot, 1, 0, 0
    examined = non = 1
    seen = {bucket.pivot}
    rel = q - bucket.center
    shells = shell_indices(float(np.linalg.norm(rel)), plan.c, plan.T)
    probed = 0
    for l in shells:
        ann = bucket.annuli.get(l)
        probed += 1
        if ann is None:
            continue
        key = _inner_keys(plan, l, ann.seed, rel[None, :])[0].tobytes()
        for i in ann.keys.get(key, ()):
            i = int(i)
            if i in seen:
                continue
            if budget is not None and non >= budget:
                return None, examined, non, probed
            seen.add(i)
            examined += 1
            if accept(i):
                return i, examined, non, probed
            non += 1
    return None, examined, non, probed


class TwoLevelIndex:
    """Multi-table two-level index over an immutable dataset."""

    def __init__(self, dataset: Dataset, params: TwoLevelParams, plan: Plan, tables: list[Table],
                 jl: JlMap | None, q_estimate: "QEstimate | None"):
        self.dataset = dataset
        self.params = params
        self.plan = plan
        self.tables = tables
        self.jl = jl
        self.q_estimate = q_estimate
        self._scaled = dataset.points / params.r
        self._build_points = _to_build_space(self._scaled, jl)

    @property
    def R(self) -> int:
        return len(self.tables)

    @property
    def dim(self) -> int:
        return self.dataset.dim

    @property
    def stop_limit(self) -> int:
        """Non-answer points examined before a query gives up."""
        if self.q_estimate is not None and self.params.tables_override is None:
            return math.ceil(3.0 / self.q_estimate.q_hat - 1e-12) + 1
        return math.ceil(3.0 * self.R) + 1

    def _accept_fn(self, q_scaled: np.ndarray):
        pts, c = self._scaled, self.params.c
        return lambda i: float(np.linalg.norm(pts[i] - q_scaled)) <= c + SLACK

    def query(self, q) -> QueryResult:
        return self.query_many(np.asarray(q, dtype=np.float64)[None, :])[0]

    def query_many(self, Q) -> list[QueryResult]:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.dim:
            raise ValueError(f"queries must have shape (m, {self.dim}), got {Q.shape}")
        Qs = Q / self.params.r
        Qb = _to_build_space(Qs, self.jl)
        outer_keys = [t.outer.hash_many(Qb) for t in self.tables]
        out = []
        limit = self.stop_limit
        for j in range(len(Q)):
            accept = self._accept_fn(Qs[j])
            examined = non = annuli = probed = worst = 0
            answer = None
            for ti, table in enumerate(self.tables):
                if non >= limit:
                    break
                probed += 1
                a, e, nn, ap = query_single_table(table, self.plan, self._build_points, Qb[j], accept,
                                                  outer_keys[ti][j].tobytes(), limit - non)
                examined += e
                non += nn
                annuli += ap
                worst = max(worst, ap)
                if a is not None:
                    answer = a
                    break
            out.append(QueryResult(answer, examined, probed, annuli, non, worst))
        return out

    def save(self, path) -> None:
        save_index(self, path)

    @classmethod
    def load(cls, path) -> "TwoLevelIndex":
        return load_index(path)


def query(index: TwoLevelIndex, q) -> QueryResult:
    return index.query(q)


def _to_build_space(X: np.ndarray, jl: JlMap | None) -> np.ndarray:
    return X if jl is None else jl(X)


def jl_dimension(n: int, epsilon_jl: float) -> int:
    return math.ceil(24.0 * math.log(max(n, 2)) / epsilon_jl**2)


def _prepare(dataset: Dataset, params: TwoLevelParams):
    if dataset.n == 0:
        raise ValueError("cannot build an index over an empty dataset")
    n = params.n or dataset.n
    scaled = dataset.points / params.r
    jl = None
    c = params.c
    if params.jl:
        m = jl_dimension(n, params.epsilon_jl)
        if dataset.dim > m:
            if params.c - 1 <= 1:
                raise ValueError("JL reduction builds at c - 1, which needs c > 2")
            jl = sample_jl(dataset.dim, m, params.seed)
            c = params.c - 1
    pts = _to_build_space(scaled, jl)
    plan = make_plan(params, n, pts.shape[1], c)
    return scaled, pts, jl, plan


def build(dataset, params: TwoLevelParams) -> TwoLevelIndex:
    dataset = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    scaled, pts, jl, plan = _prepare(dataset, params)
    q_est = None
    if params.tables_override is not None:
        R = params.tables_override
    else:
        q_est = _estimate_q(scaled, pts, jl, plan, params, params.q_trials, params.seed)
        R = q_est.tables_needed
    tables = [build_table(pts, plan, (params.seed, _rng.OUTER, i)) for i in range(R)]
    return TwoLevelIndex(dataset, params, plan, tables, jl, q_est)


# --------------------------------------------------------------- Q estimate


@dataclass(frozen=True)
class QEstimate:
    q_hat: float
    successes: int
    trials: int
    tables_built: int

    @property
    def stderr(self) -> float:
        return math.sqrt(self.q_hat * (1.0 - self.q_hat) / self.trials)

    @property
    def tables_needed(self) -> int:
        return math.ceil(1.0 / self.q_hat - 1e-12)


def planted_queries(points: np.ndarray, m: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """``m`` queries at distance exactly 1 from uniformly chosen points."""
    rng = _rng.keyed_rng(*_rng.as_key(seed), _rng.PLANTED)
    ids = rng.integers(0, len(points), m)
    g = rng.standard_normal((m, points.shape[1]))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return points[ids] + g, ids


def _estimate_q(scaled, pts, jl, plan, params, trials, seed, per_table=100) -> QEstimate:
    if trials < 100:
        raise ValueError("estimate_Q needs trials >= 100")
    n_tables = math.ceil(trials / per_table)
    hits = total = 0
    for b in range(n_tables):
        m = min(per_table, trials - total)
        table = build_table(pts, plan, (seed, _rng.QEST, b))
        Qs, _ = planted_queries(scaled, m, (seed, _rng.QEST, b))
        Qb = _to_build_space(Qs, jl)
        keys = table.outer.hash_many(Qb)
        for j in range(m):
            q = Qs[j]
            accept = lambda i, q=q: float(np.linalg.norm(scaled[i] - q)) <= params.c + SLACK
            a, *_ = query_single_table(table, plan, pts, Qb[j], accept, keys[j].tobytes())
            hits += a is not None
        total += m
    if hits == 0:
        raise InfeasibleParameters(
            f"no per-table success in {total} trials: increase trials or adjust parameters "
            f"(outer near-pair collision p^k = {plan.predicted_outer_near():.3g}, k = {plan.k})")
    return QEstimate(hits / total, hits, total, n_tables)


def estimate_Q(dataset, params: TwoLevelParams, trials: int = 1_000, seed: int | None = None) -> QEstimate:
    """Per-table success frequency on planted distance-1 queries."""
    dataset = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    scaled, pts, jl, plan = _prepare(dataset, params)
    return _estimate_q(scaled, pts, jl, plan, params, trials, params.seed if seed is None else seed)


def tables_for(q: QEstimate, params: TwoLevelParams) -> int:
    return params.tables_override if params.tables_override is not None else q.tables_needed


# ----------------------------------------------------------- serialization


def save_index(index: TwoLevelIndex, path) -> None:
    """Write the index to a versioned ``.npz`` container.

    Functions are stored by seed and regenerated on load; bucket and annulus
    maps are stored as flat arrays with offsets.
    """
    bucket_keys, members, member_off, centers, pivots = [], [], [0], [], []
    ann_meta, ann_keys, ann_ids, ann_key_off, ann_id_off = [], [], [], [0], [0]
    for ti, table in enumerate(index.tables):
        for bi, (key, b) in enumerate(table.buckets.items()):
            bucket_keys.append(np.frombuffer(key, dtype=np.int64))
            members.append(b.members)
            member_off.append(member_off[-1] + len(b.members))
            centers.append(b.center)
            pivots.append(b.pivot)
            for l, ann in b.annuli.items():
                ann_meta.append([ti, bi, l, len(ann.seed)] + list(ann.seed) + [0] * (8 - len(ann.seed)))
                for k, ids in ann.keys.items():
                    ann_keys.append(np.frombuffer(k, dtype=np.int64))
                    ann_ids.append(ids)
                    ann_id_off.append(ann_id_off[-1] + len(ids))
                ann_key_off.append(len(ann_keys))
    per_table = [len(t.buckets) for t in index.tables]
    header = {
        "format_version": FORMAT_VERSION,
        "params": index.params.to_json(),
        "plan": {"c": index.plan.c, "T": index.plan.T, "k": index.plan.k,
                 "k_tilde": list(index.plan.k_tilde), "d": index.plan.d, "n": index.plan.n,
                 "tau": index.plan.tau, "variant": index.plan.variant.value,
                 "delta_meb": index.plan.delta_meb, "t": index.plan.outer_params.t,
                 "outer_near": index.plan.outer_near,
                 "outer_far_factor": index.plan.outer_far_factor,
                 "inner_p2": list(index.plan.inner_p2)},
        "table_seeds": [list(t.seed) for t in index.tables],
        "buckets_per_table": per_table,
        "q_estimate": None if index.q_estimate is None else asdict(index.q_estimate),
        "jl": None if index.jl is None else [index.jl.in_dim, index.jl.out_dim],
    }
    key_len = index.plan.outer_family.key_size
    np.savez_compressed(
        path,
        header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
        points=index.dataset.points,
        bucket_keys=np.array(bucket_keys, dtype=np.int64).reshape(-1, key_len),
        members=_cat(members), member_off=np.array(member_off, dtype=np.int64),
        centers=np.array(centers, dtype=np.float64).reshape(-1, index.plan.d),
        pivots=np.array(pivots, dtype=np.int64),
        ann_meta=np.array(ann_meta, dtype=np.int64).reshape(-1, 12),
        ann_keys=_cat(ann_keys), ann_key_lens=np.array([len(k) for k in ann_keys], dtype=np.int64),
        ann_ids=_cat(ann_ids), ann_id_off=np.array(ann_id_off, dtype=np.int64),
        ann_key_off=np.array(ann_key_off, dtype=np.int64),
    )


def _cat(arrays) -> np.ndarray:
    return np.concatenate(arrays).astype(np.int64) if arrays else np.zeros(0, dtype=np.int64)


def load_index(path) -> TwoLevelIndex:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(z["header"].tobytes().decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported index format {header.get('format_version')!r}")
        arrays = {k: z[k] for k in z.files}
    params = TwoLevelParams(**header["params"])
    p = header["plan"]
    plan = Plan(c=p["c"], tau=p["tau"], d=p["d"], n=p["n"], variant=Variant(p["variant"]),
                delta_meb=p["delta_meb"], T=p["T"], k=p["k"], k_tilde=tuple(p["k_tilde"]),
                outer_params=BallCarvingParams(t=p["t"]), outer_near=p["outer_near"],
                outer_far_factor=p["outer_far_factor"], inner_p2=tuple(p["inner_p2"]))
    dataset = Dataset(arrays["points"])
    jl = None
    if header["jl"] is not None:
        jl = sample_jl(header["jl"][0], header["jl"][1], params.seed)
    key_ends = np.cumsum(arrays["ann_key_lens"])
    key_starts = key_ends - arrays["ann_key_lens"]
    meta = arrays["ann_meta"]
    ann_by_bucket: dict[tuple[int, int], dict[int, Annulus]] = {}
    for a, row in enumerate(meta):
        ti, bi, l, slen = (int(x) for x in row[:4])
        keys = {}
        for kk in range(arrays["ann_key_off"][a], arrays["ann_key_off"][a + 1]):
            key = arrays["ann_keys"][key_starts[kk] : key_ends[kk]].tobytes()
            keys[key] = arrays["ann_ids"][arrays["ann_id_off"][kk] : arrays["ann_id_off"][kk + 1]]
        ann_by_bucket.setdefault((ti, bi), {})[l] = Annulus(l, tuple(int(x) for x in row[4 : 4 + slen]), keys)
    tables = []
    g = 0
    for ti, (seed, nb) in enumerate(zip(header["table_seeds"], header["buckets_per_table"])):
        seed = tuple(seed)
        buckets = {}
        for bi in range(nb):
            m0, m1 = arrays["member_off"][g], arrays["member_off"][g + 1]
            b = Bucket(arrays["members"][m0:m1], arrays["centers"][g], int(arrays["pivots"][g]),
                       ann_by_bucket.get((ti, bi), {}))
            buckets[arrays["bucket_keys"][g].tobytes()] = b
            g += 1
        tables.append(Table(seed, plan.outer_family.sample(seed + (_rng.OUTER,)), buckets))
    q = header["q_estimate"]
    return TwoLevelIndex(dataset, params, plan, tables, jl, None if q is None else QEstimate(**q))


def brute_force_nearest(points: np.ndarray, q: np.ndarray) -> tuple[int, float]:
    """Exact nearest neighbor by linear scan."""
    q = as_point(q, points.shape[1])
    d = np.linalg.norm(points - q, axis=1)
    i = int(np.argmin(d))
    return i, float(d[i])
