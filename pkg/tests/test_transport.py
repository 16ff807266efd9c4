import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcsc.chain import DistributionSeries, evolve, is_column_stochastic
from mcsc.transport import (average_plan, match_series, plan_cost, plan_to_transition,
                            regrid_series, solve_ot)

from oracles import transport_vertex_cost


def line_distances(k):
    x = np.arange(k, dtype=float)
    return np.abs(x[:, None] - x[None, :])


class TestSolve:
    def test_identity_marginals(self):
        z = np.array([0.2, 0.5, 0.3])
        F = solve_ot(z, z, line_distances(3))
        np.testing.assert_allclose(F, np.diag(z))
        assert plan_cost(F, line_distances(3)) == 0.0

    def test_only_feasible_plan(self):
        D = np.array([[0.0, 2.5], [2.5, 0.0]])
        F = solve_ot(np.array([1.0, 0.0]), np.array([0.0, 1.0]), D)
        np.testing.assert_allclose(F, [[0, 1], [0, 0]])
        assert plan_cost(F, D) == pytest.approx(2.5)

    def test_infeasible_marginals(self):
        with pytest.raises(ValueError):
            solve_ot(np.array([0.5, 0.5]), np.array([0.5, 0.6]), line_distances(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_ot(np.array([1.0]), np.array([0.5, 0.5]), line_distances(2))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_ot_matches_vertex_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    pts = rng.normal(size=(3, 2))
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    F = solve_ot(a, b, D)
    assert abs(plan_cost(F, D) - transport_vertex_cost(a, b, D)) < 1e-9
    assert np.abs(F.sum(axis=1) - a).max() < 1e-10
    assert np.abs(F.sum(axis=0) - b).max() < 1e-10
    assert F.min() >= 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 12))
def test_plans_feasible_and_transition_stochastic(seed, k):
    rng = np.random.default_rng(seed)
    zs = rng.dirichlet(np.ones(k), size=4)
    D = line_distances(k)
    plans = [solve_ot(zs[t], zs[t + 1], D) for t in range(3)]
    for t, F in enumerate(plans):
        assert np.abs(F.sum(axis=1) - zs[t]).max() < 1e-10
        assert np.abs(F.sum(axis=0) - zs[t + 1]).max() < 1e-10
    F_bar = average_plan(plans)
    np.testing.assert_allclose(F_bar.sum(axis=1), zs[:3].mean(axis=0), atol=1e-12)
    assert is_column_stochastic(plan_to_transition(F_bar))


class TestPlans:
    def test_average_single(self):
        F = np.array([[0.2, 0.3], [0.1, 0.4]])
        np.testing.assert_array_equal(average_plan([F]), F)

    def test_average_two(self):
        out = average_plan([np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 0.0]])])
        np.testing.assert_array_equal(out, [[0.5, 0.5], [0, 0]])

    def test_average_empty(self):
        with pytest.raises(ValueError):
            average_plan([])

    def test_plan_to_transition(self):
        A = plan_to_transition(np.array([[0.3, 0.1], [0.0, 0.6]]))
        np.testing.assert_allclose(A, [[0.75, 0.0], [0.25, 1.0]])

    def test_diagonal_plan_gives_identity(self):
        np.testing.assert_array_equal(plan_to_transition(np.diag([0.2, 0.0, 0.8])), np.eye(3))

    def test_negative_plan_rejected(self):
        with pytest.raises(ValueError):
            plan_to_transition(np.array([[0.5, -0.1], [0.1, 0.5]]))


class TestRegrid:
    def test_identity(self):
        s = DistributionSeries(np.array([0.0, 1.0, 3.0]), np.random.default_rng(0).dirichlet(np.ones(4), 3))
        out = regrid_series(s, s.times, 0)
        np.testing.assert_allclose(out.points, s.points)

    def test_midpoint(self):
        s = DistributionSeries(np.array([0.0, 1.0]), np.array([[1.0, 0.0], [0.0, 1.0]]))
        out = regrid_series(s, [0.0, 0.5, 1.0], 0)
        np.testing.assert_allclose(out.points[1], [0.5, 0.5])

    def test_constant_series_unchanged_by_smoothing(self):
        z = np.array([0.1, 0.6, 0.3])
        s = DistributionSeries(np.arange(6.0), np.tile(z, (6, 1)))
        out = regrid_series(s, np.linspace(0, 5, 11), 3)
        np.testing.assert_allclose(out.points, np.tile(z, (11, 1)))

    def test_out_of_range(self):
        s = DistributionSeries(np.array([0.0, 1.0]), np.array([[1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            regrid_series(s, [0.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), window=st.integers(0, 5))
def test_regrid_stays_on_simplex(seed, window):
    rng = np.random.default_rng(seed)
    s = DistributionSeries(np.cumsum(rng.uniform(0.1, 2, 6)), rng.dirichlet(np.ones(5), 6))
    out = regrid_series(s, np.linspace(s.times[0], s.times[-1], 17), window)
    assert out.points.min() >= 0
    np.testing.assert_allclose(out.points.sum(axis=1), 1.0, atol=1e-12)


class TestMatch:
    def test_constant_series(self):
        z = np.array([0.3, 0.3, 0.4])
        s = DistributionSeries(np.arange(4.0), np.tile(z, (4, 1)))
        np.testing.assert_allclose(match_series(s, line_distances(3)), np.eye(3))

    def test_two_points_disjoint_support(self):
        src, dst = np.array([0.5, 0.5, 0.0, 0.0]), np.array([0.0, 0.0, 0.7, 0.3])
        D = line_distances(4)
        A = match_series(DistributionSeries(np.array([0.0, 1.0]), np.stack([src, dst])), D,
                         mismatch_tol=None)
        np.testing.assert_allclose(A, plan_to_transition(solve_ot(src, dst, D)))
        np.testing.assert_allclose(A @ src, dst)

    def test_free_run_reproduces_chain_series(self):
        # a chain that only moves mass one step right is recovered exactly
        A_true = np.array([[0.6, 0.0, 0.0], [0.4, 0.7, 0.0], [0.0, 0.3, 1.0]])
        s = evolve(A_true, np.array([1.0, 0.0, 0.0]), 1)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            A = match_series(s, line_distances(3))
        np.testing.assert_allclose(A[:, 0], A_true[:, 0])

    def test_mismatch_warns(self):
        # oscillating snapshots cannot come from one time-invariant chain
        pts = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        s = DistributionSeries(np.arange(4.0), pts)
        with pytest.warns(RuntimeWarning, match="smoothing"):
            match_series(s, line_distances(2), mismatch_tol=0.5)

    def test_too_short(self):
        with pytest.raises(ValueError):
            match_series(DistributionSeries(np.array([0.0]), np.array([[1.0]])), np.zeros((1, 1)))
