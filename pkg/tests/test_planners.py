import numpy as np
import pytest

from bspop import nlp
from bspop.costs import ObjectiveWeights
from bspop.dynamics import (Box, Circle, ObstacleField, ackermann,
                            diamond_wheel_set, unicycle)
from bspop.planners import (PlanRequest, plan_baseline, plan_bspop,
                            _baseline_problem)


def request(x_c=(-4.0, 0.0, 1.4), goal=(0.5, -0.5), rate=10.0,
            control_set=None, obstacles=None, model=None):
    return PlanRequest(
        x_c=np.asarray(x_c, dtype=float), goal=np.asarray(goal, dtype=float),
        model=model or unicycle(),
        control_set=control_set or Box([-1.0, -1.0], [1.0, 1.0]),
        obstacles=obstacles or ObstacleField(),
        horizon=1.0, rate=rate, weights=ObjectiveWeights(10.0, 1.0))


class TestPlanBaseline:
    def test_at_goal_controls_near_zero(self):
        req = request(x_c=(0.5, -0.5, 0.0), goal=(0.5, -0.5))
        plan = plan_baseline(req)
        assert plan.status == nlp.CONVERGED
        assert np.abs(plan.controls).max() <= 1e-4
        assert plan.objective <= 1e-6

    def test_first_control_saturates_toward_goal(self):
        # goal straight ahead and far: optimal constant control drives at the
        # speed bound; the brute-force oracle scans constant controls
        req = request(x_c=(0.0, 0.0, 0.0), goal=(8.0, 0.0))
        plan = plan_baseline(req)
        assert plan.status == nlp.CONVERGED

        def rollout_cost(u):
            m, dt = req.model, 0.1
            x = req.x_c.copy()
            cost = 0.0
            for _ in range(10):
                cost += 10.0 * dt * np.sum((x[:2] - req.goal) ** 2) \
                    + 1.0 * dt * float(u @ u)
                k1 = m.deriv(x, u); k2 = m.deriv(x + 0.05 * k1, u)
                k3 = m.deriv(x + 0.05 * k2, u); k4 = m.deriv(x + 0.1 * k3, u)
                x = x + (0.1 / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            return cost

        grid = [(v, w) for v in np.linspace(-1, 1, 21)
                for w in np.linspace(-1, 1, 21)]
        best = min(grid, key=lambda u: rollout_cost(np.asarray(u)))
        assert best[0] == 1.0
        assert plan.controls[0, 0] >= 0.97
        assert abs(plan.controls[0, 1]) <= 0.05

    def test_euler_mode_defects(self):
        req = request()
        prob = _baseline_problem(req, 10, "euler")
        rng = np.random.default_rng(51)
        z = prob.z0 + 0.1 * rng.normal(size=prob.n_vars)
        vals, _ = prob.eq_fn(z)
        xs = z[:33].reshape(11, 3)
        us = z[33:].reshape(10, 2)
        for k in range(10):
            expected = xs[k + 1] - (xs[k] + 0.1 * req.model.deriv(xs[k], us[k]))
            np.testing.assert_allclose(vals[3 * (k + 1):3 * (k + 2)], expected,
                                       rtol=0, atol=1e-12)

    def test_rejects_degenerate_grid(self):
        with pytest.raises(ValueError):
            plan_baseline(request(rate=0.4))


class TestPlanBspop:
    def test_at_goal_points_near_zero(self):
        req = request(x_c=(0.5, -0.5, 0.0), goal=(0.5, -0.5))
        plan = plan_bspop(req)
        assert plan.status == nlp.CONVERGED
        assert np.abs(plan.spline.control_points).max() <= 1e-4

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            plan_bspop(request(), degree=3, n_ctrl=3)

    def test_convex_hull_on_converged_diamond_plans(self):
        cset = diamond_wheel_set(0.33, 0.67, 3.0)
        a, b = cset.halfspaces()
        rng = np.random.default_rng(52)
        checked = 0
        ts = np.linspace(0.0, 1.0, 1000)
        while checked < 40:
            x_c = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3),
                            rng.uniform(-np.pi, np.pi)])
            goal = x_c[:2] + rng.uniform(-2, 2, size=2)
            plan = plan_bspop(request(x_c=x_c, goal=goal, control_set=cset))
            if plan.status != nlp.CONVERGED:
                continue
            checked += 1
            u = plan.spline.sample(ts)
            assert np.max(u @ a.T - b) <= 1e-9

    def test_control_signal_continuity(self):
        plan = plan_bspop(request())
        ts = np.linspace(0.0, 1.0, 500)
        u = plan.spline.sample(ts)
        # piecewise polynomial: consecutive 2 ms samples stay close
        assert np.abs(np.diff(u, axis=0)).max() <= 0.05


class TestVariableCounts:
    def test_bspop_invariant_to_rate(self):
        counts = set()
        for rate in (10.0, 20.0, 50.0):
            plan = plan_bspop(request(rate=rate),
                              opts=nlp.SolverOptions(max_iter=5))
            counts.add(plan.control_vars)
            assert plan.control_ineq_rows == 4 * 4
        assert counts == {8}

    def test_baseline_grows_linearly(self):
        for rate in (10.0, 20.0, 50.0):
            n = int(round(rate))
            plan = plan_baseline(request(rate=rate),
                                 opts=nlp.SolverOptions(max_iter=5))
            assert plan.control_vars == 2 * n
            assert plan.control_ineq_rows == 4 * n


class TestWarmStart:
    def test_bspop_reuses_previous_solution(self):
        req = request()
        first = plan_bspop(req)
        second = plan_bspop(req, warm_from=first)
        assert second.iterations <= first.iterations
        np.testing.assert_allclose(second.z, first.z, atol=1e-6)

    def test_baseline_shifted_start_converges_fast(self):
        req = request()
        first = plan_baseline(req)
        # advance the state one planner period and replan, as the loop does
        x_next = first.states[1]
        req2 = request(x_c=x_next)
        warm = plan_baseline(req2, warm_from=first)
        cold = plan_baseline(req2)
        assert warm.status == nlp.CONVERGED
        assert warm.iterations <= cold.iterations

    def test_plans_are_deterministic(self):
        req = request()
        a = plan_bspop(req)
        b = plan_bspop(req)
        np.testing.assert_array_equal(a.z, b.z)


class TestControlAt:
    def test_baseline_zero_order_hold(self):
        plan = plan_baseline(request())
        u0 = plan.control_at(0.0)
        np.testing.assert_array_equal(u0, plan.controls[0])
        np.testing.assert_array_equal(plan.control_at(0.0999),
                                      plan.controls[0])
        np.testing.assert_array_equal(plan.control_at(0.15),
                                      plan.controls[1])

    def test_bspop_continuous_and_clamped(self):
        plan = plan_bspop(request())
        np.testing.assert_array_equal(plan.control_at(0.0),
                                      plan.spline.control_points[0])
        np.testing.assert_array_equal(plan.control_at(5.0),
                                      plan.spline.control_points[-1])


class TestGoalMask:
    def test_heading_only_goal(self):
        req = PlanRequest(x_c=np.array([0.0, 0.0, 0.0]), goal=np.array([1.0]),
                          model=unicycle(),
                          control_set=Box([-1.0, -1.0], [1.0, 1.0]),
                          goal_mask=(2,))
        plan = plan_baseline(req)
        assert plan.status == nlp.CONVERGED
        # heading moves toward the target, position cost is absent
        assert plan.states[-1, 2] > 0.5

    def test_mask_size_validated(self):
        with pytest.raises(ValueError):
            PlanRequest(x_c=np.zeros(3), goal=np.array([1.0, 2.0, 3.0]),
                        model=unicycle(),
                        control_set=Box([-1.0, -1.0], [1.0, 1.0]))


class TestAckermannPlanning:
    def test_steering_bound_respected(self):
        req = request(x_c=(0.0, 0.0, 0.0, 0.0), goal=(3.0, 3.0),
                      model=ackermann(2.0),
                      control_set=Box([-2.0, -1.0], [2.0, 1.0]))
        plan = plan_bspop(req)
        assert plan.usable
        assert np.abs(plan.states[:, 3]).max() <= 0.4 * np.pi + 1e-8

    def test_obstacle_rows_present(self):
        obs = ObstacleField((Circle([1.0, 0.0], 0.4),))
        plan = plan_baseline(request(obstacles=obs),
                             opts=nlp.SolverOptions(max_iter=5))
        assert plan.ineq_rows == 4 * 10 + 10
