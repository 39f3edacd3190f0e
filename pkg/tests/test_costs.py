import numpy as np
import pytest
from scipy.integrate import quad

from bspop.costs import (LambdaTable, ObjectiveWeights, control_cost,
                         goal_cost, precompute_lambda)
from bspop.splinecore import ControlSpline, SplineBasis, make_clamped_uniform


def quad_lambda_entry(basis, s, j1, j2):
    """Independent oracle: adaptive quadrature of (GammaM)_j1 (GammaM)_j2."""
    p = basis.degree
    tau = basis.knots.knots
    i = p + s

    def integrand(t):
        seg, w = basis.segment_weights(t)
        assert seg == s
        return w[j1] * w[j2]

    val, err = quad(integrand, tau[i], tau[i + 1] - 1e-13, limit=200)
    return val


class TestPrecomputeLambda:
    def test_linear_segment(self):
        basis = SplineBasis(make_clamped_uniform(1, 2, 1.0))
        table = precompute_lambda(basis)
        np.testing.assert_allclose(table.flat(0),
                                   [1 / 3, 1 / 6, 1 / 6, 1 / 3],
                                   rtol=0, atol=1e-15)

    def test_degree_zero_is_span_width(self):
        basis = SplineBasis(make_clamped_uniform(0, 3, 1.5))
        table = precompute_lambda(basis)
        for s in range(table.n_segments):
            np.testing.assert_allclose(table.flat(s), [0.5], atol=1e-15)

    def test_matches_adaptive_quadrature(self):
        rng = np.random.default_rng(21)
        for p in (1, 2, 3):
            n_ctrl = int(rng.integers(p + 1, p + 4))
            horizon = float(rng.uniform(0.5, 2.5))
            basis = SplineBasis(make_clamped_uniform(p, n_ctrl, horizon))
            table = precompute_lambda(basis)
            for s in range(table.n_segments):
                for j1 in range(p + 1):
                    for j2 in range(p + 1):
                        expected = quad_lambda_entry(basis, s, j1, j2)
                        assert abs(table.tables[s][j1, j2] - expected) <= 1e-10

    def test_symmetry(self):
        basis = SplineBasis(make_clamped_uniform(3, 6, 2.0))
        table = precompute_lambda(basis)
        for tab in table.tables:
            np.testing.assert_allclose(tab, tab.T, rtol=0, atol=1e-14)

    def test_row_sum_is_span_width(self):
        rng = np.random.default_rng(22)
        for p in (1, 2, 3):
            n_ctrl = int(rng.integers(p + 1, p + 5))
            basis = SplineBasis(make_clamped_uniform(p, n_ctrl, 2.0))
            table = precompute_lambda(basis)
            for s, (a, b) in enumerate(table.spans):
                assert abs(table.flat(s).sum() - (b - a)) <= 1e-12


class TestControlCost:
    def test_zero_points(self):
        basis = SplineBasis(make_clamped_uniform(3, 5, 1.0))
        table = precompute_lambda(basis)
        assert control_cost(table, np.zeros((5, 2))) == 0.0

    def test_constant_control(self):
        horizon = 1.7
        basis = SplineBasis(make_clamped_uniform(3, 6, horizon))
        table = precompute_lambda(basis)
        c = np.array([0.8, -0.3])
        pts = np.tile(c, (6, 1))
        np.testing.assert_allclose(control_cost(table, pts),
                                   horizon * float(c @ c), rtol=1e-12)

    def test_matches_quadrature_of_norm(self):
        rng = np.random.default_rng(23)
        for _ in range(5):
            p = int(rng.integers(1, 4))
            n_ctrl = int(rng.integers(p + 1, p + 4))
            basis = SplineBasis(make_clamped_uniform(p, n_ctrl, 1.3))
            table = precompute_lambda(basis)
            pts = rng.normal(size=(n_ctrl, 2))
            spline = ControlSpline(basis, pts)

            def norm2(t):
                u = spline.eval(t)
                return float(u @ u)

            expected = 0.0
            for a, b in table.spans:
                expected += quad(norm2, a, b - 1e-13, limit=200)[0]
            assert abs(control_cost(table, pts) - expected) <= 1e-8

    def test_nonnegative(self):
        rng = np.random.default_rng(24)
        basis = SplineBasis(make_clamped_uniform(2, 5, 1.0))
        table = precompute_lambda(basis)
        for _ in range(50):
            pts = rng.normal(size=(5, 2))
            assert control_cost(table, pts) >= 0.0

    def test_point_count_checked(self):
        table = precompute_lambda(SplineBasis(make_clamped_uniform(2, 5, 1.0)))
        with pytest.raises(ValueError):
            control_cost(table, np.zeros((4, 2)))


class TestGoalCost:
    def test_at_goal_is_zero(self):
        traj = np.tile([0.5, -0.5, 1.0], (20, 1))
        assert goal_cost(traj, [0.5, -0.5], 0.1) == 0.0

    def test_single_state_unit_distance(self):
        assert goal_cost(np.array([[1.0, 0.0, 0.3]]), [0.0, 0.0], 1.0) == 1.0

    def test_constant_offset(self):
        n, dt, delta = 12, 0.05, 0.7
        traj = np.tile([delta, 0.0, 0.0], (n, 1))
        np.testing.assert_allclose(goal_cost(traj, [0.0, 0.0], dt),
                                   n * dt * delta ** 2, rtol=1e-12)

    def test_component_mask(self):
        traj = np.array([[1.0, 2.0, 3.0, 4.0]])
        assert goal_cost(traj, [3.0], 1.0, components=(2,)) == 0.0

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ValueError):
            goal_cost(np.zeros((0, 3)), [0.0, 0.0], 0.1)


class TestWeights:
    def test_defaults(self):
        w = ObjectiveWeights()
        assert w.w1 == 10.0 and w.w2 == 1.0

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError):
            ObjectiveWeights(0.0, 0.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ObjectiveWeights(-1.0, 1.0)


def test_weight_matrix_total_matches_direct_sum():
    basis = SplineBasis(make_clamped_uniform(3, 6, 1.0))
    table = precompute_lambda(basis)
    rng = np.random.default_rng(25)
    pts = rng.normal(size=(6, 2))
    w = table.weight_matrix(6)
    via_matrix = float(np.sum(w * (pts @ pts.T)))
    np.testing.assert_allclose(via_matrix, control_cost(table, pts),
                               rtol=1e-12)
