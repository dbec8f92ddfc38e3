import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import pdist

from invariants import structure_violations
from twolevel_lsh.ball_carving import AnalyticBounds
from twolevel_lsh.geometry import Dataset
from twolevel_lsh.harness.datasets import gen_clustered, gen_planted, gen_random
from twolevel_lsh.two_level import (SQRT2, InfeasibleParameters, TwoLevelIndex, TwoLevelParams, build,
                                    choose_k, choose_k_l, choose_T, choose_T_pivot, estimate_Q, optimal_tau,
                                    pivot_rho_bound, prune_far_pairs, rho_two_level, shell_indices)


class TestChooseT:
    @pytest.mark.parametrize("tau,c,T", [(SQRT2, 10, 6), (2.0, 4, 5)])
    def test_values(self, tau, c, T):
        assert choose_T(tau, c, 0.0) == T

    @given(st.floats(1.01, 5), st.floats(1.01, 20))
    def test_widening_never_decreases(self, tau, c):
        assert choose_T(tau, c, 0.01) >= choose_T(tau, c, 0.0) >= 1

    def test_pivot(self):
        assert choose_T_pivot(SQRT2, 2) == math.ceil(2 * SQRT2 - 1) + 1

    @pytest.mark.parametrize("tau,c", [(1.0, 2.0), (2.0, 1.0)])
    def test_domain(self, tau, c):
        with pytest.raises(ValueError):
            choose_T(tau, c)


class TestChooseK:
    def test_examples(self):
        assert choose_k(1000, SQRT2, 2, 0.5) == 11
        assert choose_k(1000, SQRT2, 2, 1e-300) == 1
        assert choose_k(100, SQRT2, 2, 0.9) == 51

    @pytest.mark.parametrize("ratio", [1.0, 1.5])
    def test_no_separation(self, ratio):
        with pytest.raises(InfeasibleParameters, match="cannot separate"):
            choose_k(100, SQRT2, 2, ratio)

    def test_analytic_bounds_at_default_t(self):
        # U(tau c - 1) exceeds L for small t: the analytic bounds cannot drive k
        with pytest.raises(InfeasibleParameters):
            choose_k(10_000, SQRT2, 2, AnalyticBounds(5, 5**-0.5))

    @given(st.floats(0.01, 0.99), st.integers(2, 10**6))
    def test_minimal(self, ratio, n):
        k = choose_k(n, SQRT2, 2, ratio)
        assert ratio**k <= 1 / (2 * n)
        assert k == 1 or ratio ** (k - 1) > 1 / (2 * n)


class TestChooseKl:
    def test_examples(self):
        assert choose_k_l(100, 0.1, 1.0) == 3
        assert choose_k_l(100, 0.1, 1 / 300) == 1
        assert choose_k_l(1000, 0.5, 0.01) == 5

    def test_degenerate(self):
        with pytest.raises(InfeasibleParameters):
            choose_k_l(100, 1.0, 1.0)

    @given(st.floats(0.01, 0.99), st.floats(1e-6, 1.0), st.integers(2, 10**5))
    def test_minimal(self, p2, factor, n):
        k = choose_k_l(n, p2, factor)
        assert factor * p2**k <= 1 / (3 * n)
        assert k == 1 or factor * p2 ** (k - 1) > 1 / (3 * n)


class TestRhoFormulas:
    @pytest.mark.parametrize("c", [1.5, 2, 3, 4, 10])
    def test_seven_eighths(self, c):
        assert rho_two_level(SQRT2, c) == 0.875 / c**2

    def test_classic_limit(self):
        assert rho_two_level(1e4, 2) * 4 == pytest.approx(1.0, abs=1e-8)

    def test_optimal_tau(self):
        assert abs(optimal_tau() - math.sqrt(2)) <= 1e-6

    def test_pivot(self):
        assert pivot_rho_bound(4) == pytest.approx(15 / 256, rel=1e-15)
        assert pivot_rho_bound(1e6) < 1e-11
        for c in (1.1, 2, 5, 50):
            assert pivot_rho_bound(c) > rho_two_level(SQRT2, c)

    def test_domain(self):
        with pytest.raises(ValueError):
            rho_two_level(1.0, 2)
        with pytest.raises(ValueError):
            pivot_rho_bound(1.0)


class TestPruning:
    def test_lexicographic_rule(self):
        pts = np.array([[0.0], [1.0], [1.5], [10.0]])
        np.testing.assert_array_equal(prune_far_pairs(pts, 2.0), [False, True, True, False])

    def test_noop_when_close(self, rng):
        pts = rng.uniform(0, 0.1, (30, 3))
        assert prune_far_pairs(pts, 1.0).all()

    @given(arrays(np.float64, st.tuples(st.integers(1, 25), st.just(3)), elements=st.floats(-5, 5)))
    def test_survivors_have_small_diameter(self, pts):
        keep = prune_far_pairs(pts, 2.0)
        if keep.sum() > 1:
            assert pdist(pts[keep]).max() <= 2.0 + 1e-9
        # points are removed in pairs
        assert (len(pts) - keep.sum()) % 2 == 0


class TestShells:
    @given(st.floats(0, 30), st.floats(1.01, 10), st.integers(0, 10))
    def test_matches_brute_force(self, dist, c, T):
        brute = [l for l in range(T + 1) if c / 2 + l - 1 - 1e-9 <= dist <= c / 2 + l + 1 + 1e-9]
        assert shell_indices(dist, c, T) == brute
        assert len(brute) <= 3


@pytest.fixture(scope="module")
def clustered():
    return gen_clustered(800, 16, 2.0, 3, clusters=12, radius=1.2)


def small_params(**kw):
    base = dict(c=2.0, seed=1, tables_override=2, k_override=1, calibration_trials=5000)
    base.update(kw)
    return TwoLevelParams(**base)


class TestBuild:
    @pytest.mark.parametrize("variant", ["meb", "pivot"])
    @pytest.mark.parametrize("tau", [SQRT2, 2.0])
    def test_structure(self, clustered, variant, tau):
        index = build(clustered, small_params(variant=variant, tau=tau))
        assert structure_violations(index) == []
        sizes = [len(b.members) for b in index.tables[0].buckets.values()]
        assert max(sizes) > 5
        assert any(b.annuli for b in index.tables[0].buckets.values())

    def test_pruning_happens(self):
        # one wide cluster forces far pairs into shared buckets
        ds = gen_clustered(400, 8, 2.0, 9, clusters=1, radius=6.0)
        index = build(ds, small_params())
        kept = sum(len(b.members) for b in index.tables[0].buckets.values())
        assert kept < ds.n
        assert structure_violations(index) == []

    def test_single_point(self):
        index = build(Dataset(np.ones((1, 8))), small_params())
        (bucket,) = index.tables[0].buckets.values()
        assert bucket.pivot == 0 and list(bucket.members) == [0]
        assert index.query(np.ones(8)).answer == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            build(Dataset(np.zeros((0, 8))), small_params())

    def test_duplicates_kept(self):
        pts = np.repeat(np.arange(8.0)[None, :], 5, axis=0)
        index = build(Dataset(pts), small_params())
        (bucket,) = index.tables[0].buckets.values()
        assert len(bucket.members) == 5

    def test_deterministic(self, clustered):
        a = build(clustered, small_params())
        b = build(clustered, small_params())
        for ta, tb in zip(a.tables, b.tables):
            assert ta.buckets.keys() == tb.buckets.keys()
            for k in ta.buckets:
                np.testing.assert_array_equal(ta.buckets[k].members, tb.buckets[k].members)
                np.testing.assert_array_equal(ta.buckets[k].center, tb.buckets[k].center)
                assert ta.buckets[k].annuli.keys() == tb.buckets[k].annuli.keys()

    def test_infeasible_analytic_mode(self, clustered):
        with pytest.raises(InfeasibleParameters):
            build(clustered, TwoLevelParams(c=2.0, param_mode="analytic", tables_override=1))


class TestQuery:
    def test_soundness_and_annuli(self, clustered, rng):
        index = build(clustered, small_params())
        Q = clustered.points[rng.integers(0, clustered.n, 500)] + rng.standard_normal((500, 16)) * 0.4
        for q, r in zip(Q, index.query_many(Q)):
            assert r.max_annuli_per_table <= 3
            if r.answer is not None:
                assert np.linalg.norm(clustered.points[r.answer] - q) <= 2.0 + 1e-9

    def test_stored_point_is_found(self, clustered):
        index = build(clustered, small_params())
        res = index.query(clustered.points[17])
        assert res.answer is not None and res.tables_probed == 1

    def test_empty_bucket(self, clustered):
        index = build(clustered, small_params())
        res = index.query(np.full(16, 1e3))
        assert res.answer is None and res.points_examined == 0

    def test_dimension_mismatch(self, clustered):
        index = build(clustered, small_params())
        with pytest.raises(ValueError):
            index.query(np.zeros(15))

    def test_stop_rule(self, clustered, rng):
        index = build(clustered, small_params(tables_override=6))
        far = rng.standard_normal((300, 16)) * 0.8
        for r in index.query_many(far):
            assert r.non_answers <= index.stop_limit

    def test_far_work_bound(self):
        ds, Q = gen_random(2000, 32, 2.0, 4, n_queries=1000)
        far = Q[np.array([np.linalg.norm(ds.points - q, axis=1).min() >= 2.0 for q in Q])]
        index = build(ds, TwoLevelParams(c=2.0, seed=2, tables_override=3, calibration_trials=5000))
        res = index.query_many(far)
        assert all(r.answer is None for r in res)
        assert np.mean([r.points_examined / r.tables_probed for r in res]) <= 3.0

    def test_rescaling(self, clustered, rng):
        scaled = Dataset(clustered.points * 8.0)
        a = build(clustered, small_params())
        b = build(scaled, small_params(r=8.0))
        Q = clustered.points[:50] + rng.standard_normal((50, 16)) * 0.3
        assert [r.answer for r in a.query_many(Q)] == [r.answer for r in b.query_many(Q * 8.0)]


class TestEstimateQ:
    def test_feasible(self):
        inst = gen_planted(500, 32, 3.0, 5, n_queries=10)
        params = TwoLevelParams(c=3.0, tau=2.0, seed=3, calibration_trials=5000)
        q = estimate_Q(inst.dataset, params, trials=500)
        assert 0 < q.q_hat <= 1 and q.trials == 500
        assert 1 <= q.tables_needed * q.q_hat < 2

    def test_override(self):
        inst = gen_planted(300, 32, 3.0, 5, n_queries=10)
        index = build(inst.dataset, TwoLevelParams(c=3.0, tau=2.0, tables_override=10, calibration_trials=5000))
        assert index.R == 10 and index.q_estimate is None

    def test_zero_successes(self):
        inst = gen_planted(300, 32, 3.0, 5, n_queries=10)
        with pytest.raises(InfeasibleParameters, match="increase trials"):
            estimate_Q(inst.dataset, TwoLevelParams(c=3.0, k_override=60, calibration_trials=5000), trials=100)

    def test_min_trials(self):
        inst = gen_planted(300, 32, 3.0, 5, n_queries=10)
        with pytest.raises(ValueError):
            estimate_Q(inst.dataset, TwoLevelParams(c=3.0, calibration_trials=5000), trials=50)


class TestRecallFeasibleRegime:
    def test_planted_recall(self):
        inst = gen_planted(1000, 32, 3.0, 8, n_queries=200)
        index = build(inst.dataset, TwoLevelParams(c=3.0, tau=2.0, seed=8, calibration_trials=5000))
        res = index.query_many(inst.queries)
        assert np.mean([r.answer is not None for r in res]) >= 1 - 1 / 3 - 1 / math.e
        for q, r in zip(inst.queries, res):
            if r.answer is not None:
                assert np.linalg.norm(inst.dataset.points[r.answer] - q) <= 3.0 + 1e-9


class TestJl:
    def test_jl_build(self, rng):
        # a coarse epsilon_jl keeps the target dimension small enough for spherical hashing
        base = rng.standard_normal((20, 200)) * 0.2
        params = TwoLevelParams(c=3.0, jl=True, epsilon_jl=0.9, tables_override=2, calibration_trials=2000)
        index = build(Dataset(base), params)
        assert index.jl is not None and index.plan.c == 2.0 and index.plan.d < 200
        res = index.query_many(base + 0.01)
        for q, r in zip(base + 0.01, res):
            if r.answer is not None:
                assert np.linalg.norm(base[r.answer] - q) <= 3.0

    def test_jl_skipped_in_low_dimension(self, clustered):
        index = build(clustered, small_params(jl=True, c=3.0))
        assert index.jl is None


class TestSerialization:
    def test_round_trip(self, clustered, rng, tmp_path):
        index = build(clustered, small_params())
        path = tmp_path / "ix.npz"
        index.save(path)
        loaded = TwoLevelIndex.load(path)
        Q = clustered.points[rng.integers(0, clustered.n, 300)] + rng.standard_normal((300, 16)) * 0.5
        assert index.query_many(Q) == loaded.query_many(Q)
        assert structure_violations(loaded) == []

    def test_version_check(self, clustered, tmp_path):
        index = build(clustered, small_params())
        path = tmp_path / "ix.npz"
        index.save(path)
        with np.load(path) as z:
            arrays = dict(z)
        arrays["header"] = np.frombuffer(b'{"format_version": 99}', dtype=np.uint8)
        np.savez(path, **arrays)
        with pytest.raises(ValueError, match="format"):
            TwoLevelIndex.load(path)
