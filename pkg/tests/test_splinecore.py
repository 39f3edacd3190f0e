import numpy as np
import pytest

from bspop.dynamics import diamond_wheel_set
from bspop.splinecore import (ControlSpline, KnotVector, SplineBasis,
                              basis_function, basis_matrix, eval_control,
                              make_clamped_uniform)

GOLDEN_CUBIC = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [-3.0, 3.0, 0.0, 0.0],
    [3.0, -6.0, 3.0, 0.0],
    [-1.0, 3.0, -3.0, 1.0],
])


def random_clamped(rng, p):
    n_ctrl = int(rng.integers(p + 1, p + 5))
    horizon = float(rng.uniform(0.5, 3.0))
    return make_clamped_uniform(p, n_ctrl, horizon)


def random_spline(rng, p, dim_u=2):
    kv = random_clamped(rng, p)
    pts = rng.normal(size=(kv.n_ctrl, dim_u))
    return ControlSpline(SplineBasis(kv), pts)


class TestKnots:
    def test_cubic_single_segment(self):
        kv = make_clamped_uniform(3, 4, 1.0)
        np.testing.assert_array_equal(kv.knots, [0, 0, 0, 0, 1, 1, 1, 1])

    def test_degree_zero(self):
        kv = make_clamped_uniform(0, 1, 1.0)
        np.testing.assert_array_equal(kv.knots, [0, 1])

    def test_quadratic_three_segments(self):
        kv = make_clamped_uniform(2, 5, 1.0)
        np.testing.assert_allclose(kv.knots, [0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1])

    def test_length_is_nctrl_plus_p_plus_one(self):
        rng = np.random.default_rng(0)
        for p in (1, 2, 3):
            kv = random_clamped(rng, p)
            assert len(kv) == kv.n_ctrl + p + 1

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            make_clamped_uniform(3, 3, 1.0)

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            make_clamped_uniform(2, 4, 0.0)

    def test_rejects_decreasing_knots(self):
        with pytest.raises(ValueError):
            KnotVector(np.array([0.0, 1.0, 0.5, 2.0]), 1)


class TestBasisFunction:
    def test_degree_zero_is_span_indicator(self):
        kv = KnotVector(np.array([0.0, 1.0]), 0)
        assert basis_function(0, 0, 0.0, kv) == 1.0
        assert basis_function(0, 0, 0.5, kv) == 1.0
        # left limit at the final knot
        assert basis_function(0, 0, 1.0, kv) == 1.0

    def test_partition_of_unity(self):
        kv = make_clamped_uniform(3, 6, 2.0)
        rng = np.random.default_rng(1)
        for t in rng.uniform(0.0, 2.0, size=10_000):
            total = sum(basis_function(i, 3, t, kv) for i in range(6))
            assert abs(total - 1.0) <= 1e-12

    def test_bernstein_values_at_half(self):
        kv = make_clamped_uniform(3, 4, 1.0)
        vals = [basis_function(i, 3, 0.5, kv) for i in range(4)]
        np.testing.assert_allclose(vals, [0.125, 0.375, 0.375, 0.125],
                                   rtol=0, atol=1e-15)

    def test_out_of_range_raises(self):
        kv = make_clamped_uniform(2, 4, 1.0)
        with pytest.raises(ValueError):
            basis_function(0, 2, 1.5, kv)


class TestBasisMatrix:
    def test_golden_cubic(self):
        kv = make_clamped_uniform(3, 4, 1.0)
        np.testing.assert_array_equal(basis_matrix(3, 3, kv), GOLDEN_CUBIC)

    def test_degree_zero(self):
        kv = make_clamped_uniform(0, 1, 1.0)
        np.testing.assert_array_equal(basis_matrix(0, 0, kv), [[1.0]])

    def test_linear(self):
        kv = make_clamped_uniform(1, 2, 1.0)
        np.testing.assert_array_equal(basis_matrix(1, 1, kv),
                                      [[1.0, 0.0], [-1.0, 1.0]])

    def test_empty_span_rejected(self):
        kv = make_clamped_uniform(3, 4, 1.0)
        with pytest.raises(ValueError):
            basis_matrix(0, 3, kv)


class TestEvalControl:
    def test_clamped_endpoints_exact(self):
        rng = np.random.default_rng(2)
        for p in (1, 2, 3):
            sp = random_spline(rng, p)
            t0, t1 = sp.horizon
            np.testing.assert_array_equal(sp.eval(t0), sp.control_points[0])
            np.testing.assert_array_equal(sp.eval(t1), sp.control_points[-1])

    def test_matrix_form_matches_cox_de_boor(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            p = int(rng.integers(1, 4))
            sp = random_spline(rng, p)
            kv = sp.basis.knots
            for t in rng.uniform(0.0, kv.t_end, size=8):
                weights = np.array([basis_function(i, p, t, kv)
                                    for i in range(kv.n_ctrl)])
                expected = weights @ sp.control_points
                np.testing.assert_allclose(eval_control(sp, t), expected,
                                           rtol=0, atol=1e-10)

    def test_sample_matches_scalar_eval(self):
        rng = np.random.default_rng(4)
        sp = random_spline(rng, 3)
        ts = rng.uniform(0.0, sp.horizon[1], size=50)
        batch = sp.sample(ts)
        for t, row in zip(ts, batch):
            np.testing.assert_allclose(row, sp.eval(t), rtol=0, atol=1e-12)

    def test_out_of_range_raises(self):
        rng = np.random.default_rng(5)
        sp = random_spline(rng, 2)
        with pytest.raises(ValueError):
            sp.eval(sp.horizon[1] + 0.1)


class TestInvariants:
    def test_segment_count(self):
        rng = np.random.default_rng(6)
        for p in (1, 2, 3):
            kv = random_clamped(rng, p)
            basis = SplineBasis(kv)
            assert basis.n_segments == kv.n_ctrl - p

    def test_convex_hull_box(self):
        # points in a box keep the whole signal in the box
        rng = np.random.default_rng(7)
        lo, hi = np.array([-1.0, -2.0]), np.array([1.5, 0.5])
        for _ in range(600):
            p = int(rng.integers(1, 4))
            kv = random_clamped(rng, p)
            pts = rng.uniform(lo, hi, size=(kv.n_ctrl, 2))
            sp = ControlSpline(SplineBasis(kv), pts)
            ts = np.linspace(0.0, kv.t_end, 40)
            u = sp.sample(ts)
            assert np.all(u >= lo - 1e-9) and np.all(u <= hi + 1e-9)

    def test_convex_hull_diamond(self):
        cset = diamond_wheel_set(0.33, 0.67, 3.0)
        a, b = cset.halfspaces()
        rng = np.random.default_rng(8)
        count = 0
        while count < 500:
            p = int(rng.integers(1, 4))
            kv = random_clamped(rng, p)
            pts = rng.uniform(-1.0, 1.0, size=(kv.n_ctrl, 2))
            if not all(cset.contains(q, tol=0.0) for q in pts):
                continue
            count += 1
            sp = ControlSpline(SplineBasis(kv), pts)
            u = sp.sample(np.linspace(0.0, kv.t_end, 40))
            assert np.max(u @ a.T - b) <= 1e-9

    def test_point_count_must_match_basis(self):
        basis = SplineBasis(make_clamped_uniform(3, 5, 1.0))
        with pytest.raises(ValueError):
            ControlSpline(basis, np.zeros((4, 2)))
