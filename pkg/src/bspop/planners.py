"""The two receding-horizon planners.

Baseline: discrete-time controls u_0..u_{N-1} held piecewise constant, one
control-set constraint block per step, transcribed with multiple-shooting RK4
defects (a config flag restores the literal forward-Euler defects).

Spline planner: the decision controls are the n+1 control points of a clamped
B-spline over [0, T]; defects integrate the continuous spline with RK4, the
control-effort term is exact (quadratic through the precomputed segment
integrals), and the control set is imposed on the control points only, which
by the convex hull property bounds the whole continuous signal.

Both share the state grid of N = round(T * rate) intervals, the same weighted
objective, obstacle clearances at the free grid states, and corridor /
steering limits as variable bounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nlp
from .costs import ObjectiveWeights, precompute_lambda
from .dynamics import (STEERING_LIMIT, ControlAffineModel, ControlSet,
                       ObstacleField)
from .dynamics import saturate as saturate_control
from .splinecore import ControlSpline, SplineBasis, make_clamped_uniform

__all__ = ["PlanRequest", "PlanResult", "plan_baseline", "plan_bspop",
           "receding_horizon"]

# a plan that hit the iteration cap is still applied if it is this close
# to feasible
USABLE_VIOLATION = 1e-3


@dataclass(frozen=True)
class PlanRequest:
    x_c: np.ndarray
    goal: np.ndarray
    model: ControlAffineModel
    control_set: ControlSet
    obstacles: ObstacleField = field(default_factory=ObstacleField)
    horizon: float = 1.0
    rate: float = 10.0
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    goal_mask: tuple = (0, 1)      # state components the goal cost penalizes

    def __post_init__(self):
        object.__setattr__(self, "x_c", np.asarray(self.x_c, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        object.__setattr__(self, "goal_mask", tuple(self.goal_mask))
        if not np.all(np.isfinite(self.x_c)):
            raise ValueError("current state must be finite")
        if self.x_c.size != self.model.dim_x:
            raise ValueError("state dimension mismatch")
        if self.goal.size != len(self.goal_mask):
            raise ValueError("goal size must match the component mask")
        if not (self.horizon > 0 and self.rate > 0):
            raise ValueError("horizon and rate must be positive")


@dataclass
class PlanResult:
    kind: str                      # "baseline" | "bspop"
    status: str
    states: np.ndarray             # predicted states, (N+1, dim_x)
    dt: float
    controls: Optional[np.ndarray] = None   # baseline, (N, dim_u)
    spline: Optional[ControlSpline] = None  # bspop
    z: Optional[np.ndarray] = None
    objective: float = np.nan
    solve_time: float = 0.0
    iterations: int = 0
    control_vars: int = 0
    total_vars: int = 0
    eq_rows: int = 0
    ineq_rows: int = 0
    control_ineq_rows: int = 0
    max_violation: float = np.inf

    @property
    def usable(self) -> bool:
        if self.status == nlp.CONVERGED:
            return True
        return self.status == nlp.MAX_ITERATIONS and \
            self.max_violation <= USABLE_VIOLATION

    def control_at(self, t: float) -> np.ndarray:
        """Planned control at plan-local time t (clamped to the horizon)."""
        if self.kind == "baseline":
            k = min(max(int(t / self.dt), 0), self.controls.shape[0] - 1)
            return self.controls[k]
        t0, t1 = self.spline.horizon
        return self.spline.eval(min(max(t, t0), t1))


def _rk4_sens(model, x, dt, u1, u2, u4, j1, j2, j4):
    """One RK4 step with Jacobians w.r.t. the start state and the control
    parameters; j* map the parameter vector to each stage control."""
    dx = model.dim_x
    eye = np.eye(dx)
    h2 = 0.5 * dt

    g1 = model.g(x)
    k1 = model.f(x) + g1 @ u1
    a1 = model.jac(x, u1)
    k1x = a1
    k1p = g1 @ j1

    x2 = x + h2 * k1
    g2 = model.g(x2)
    k2 = model.f(x2) + g2 @ u2
    a2 = model.jac(x2, u2)
    k2x = a2 @ (eye + h2 * k1x)
    k2p = a2 @ (h2 * k1p) + g2 @ j2

    x3 = x + h2 * k2
    g3 = model.g(x3)
    k3 = model.f(x3) + g3 @ u2
    a3 = model.jac(x3, u2)
    k3x = a3 @ (eye + h2 * k2x)
    k3p = a3 @ (h2 * k2p) + g3 @ j2

    x4 = x + dt * k3
    g4 = model.g(x4)
    k4 = model.f(x4) + g4 @ u4
    a4 = model.jac(x4, u4)
    k4x = a4 @ (eye + dt * k3x)
    k4p = a4 @ (dt * k3p) + g4 @ j4

    x_next = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    jx = eye + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    jp = (dt / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    return x_next, jx, jp


def _euler_sens(model, x, dt, u, ju):
    g = model.g(x)
    x_next = x + dt * (model.f(x) + g @ u)
    jx = np.eye(model.dim_x) + dt * model.jac(x, u)
    jp = dt * (g @ ju)
    return x_next, jx, jp


def _wrap_angle(a: float) -> float:
    return (a + np.pi) % (2 * np.pi) - np.pi


def _rollout_guess(req: PlanRequest, n_steps: int,
                   u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constant control saturated into the set and rolled out with the model
    so the defects start consistent."""
    u = saturate_control(req.control_set, np.asarray(u, dtype=float))
    dt = req.horizon / n_steps
    states = np.empty((n_steps + 1, req.model.dim_x))
    states[0] = req.x_c
    for k in range(n_steps):
        states[k + 1] = _rk4_const(req.model, states[k], u, dt)
    return states, np.tile(u, (n_steps, 1))


def aim_control(req: PlanRequest) -> np.ndarray:
    """Turn-and-drive control aimed at the goal.

    The all-zero guess is an exact saddle of the quadratic goal cost whenever
    the heading is perpendicular to the goal direction; aiming avoids
    starting (and re-starting) the solver there.
    """
    x = req.x_c
    offset = req.goal - x[:2]
    dist = float(np.hypot(*offset))
    heading_err = _wrap_angle(float(np.arctan2(offset[1], offset[0])) - x[2])
    v = min(dist, 1.0) * np.cos(heading_err)
    if req.model.name == "ackermann":
        phi_des = np.clip(heading_err, -0.25 * np.pi, 0.25 * np.pi)
        omega = 2.0 * (phi_des - x[3])
    else:
        omega = 2.0 * heading_err
    return np.array([v, omega])


def backup_control(req: PlanRequest) -> np.ndarray:
    """Back straight out of a blocked pose, unwinding the steering."""
    omega = -2.0 * req.x_c[3] if req.model.name == "ackermann" else 0.0
    return np.array([-0.5, omega])


def _rk4_const(model, x, u, dt):
    k1 = model.deriv(x, u)
    k2 = model.deriv(x + 0.5 * dt * k1, u)
    k3 = model.deriv(x + 0.5 * dt * k2, u)
    k4 = model.deriv(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _state_bounds(req: PlanRequest, n_states: int) -> tuple[np.ndarray, np.ndarray]:
    dx = req.model.dim_x
    lo = np.full(n_states * dx, -np.inf)
    hi = np.full(n_states * dx, np.inf)
    obs = req.obstacles
    if obs.corridor_lower is not None:
        for k in range(n_states):
            lo[k * dx:k * dx + 2] = obs.corridor_lower
            hi[k * dx:k * dx + 2] = obs.corridor_upper
    if req.model.name == "ackermann":
        for k in range(n_states):
            lo[k * dx + 3] = -STEERING_LIMIT
            hi[k * dx + 3] = STEERING_LIMIT
    return lo, hi


def _obstacle_rows(req: PlanRequest, states: np.ndarray, jac: np.ndarray,
                   row0: int, state_offset: int):
    """Fill clearance rows r^2 - ||p_k - c||^2 <= 0 for grid states k >= 1.

    The initial state is pinned by the initial-condition equality, so a
    clearance row on it adds nothing and makes every problem infeasible the
    moment tracking drift grazes a boundary.
    """
    dx = req.model.dim_x
    circles = req.obstacles.circles
    vals = np.empty((states.shape[0] - 1) * len(circles))
    r = row0
    for k in range(1, states.shape[0]):
        p = states[k, :2]
        base = state_offset + k * dx
        for c in circles:
            diff = p - c.center
            vals[r - row0] = c.radius ** 2 - float(diff @ diff)
            jac[r, base:base + 2] = -2.0 * diff
            r += 1
    return vals


def _baseline_problem(req: PlanRequest, n_steps: int, integrator: str,
                      guess: Optional[np.ndarray] = None) -> nlp.NlpProblem:
    model = req.model
    dx, du = model.dim_x, model.dim_u
    dt = req.horizon / n_steps
    n_state_vars = dx * (n_steps + 1)
    n_ctrl_vars = du * n_steps
    n = n_state_vars + n_ctrl_vars
    w1, w2 = req.weights.w1, req.weights.w2
    goal = req.goal

    a_set, b_set = req.control_set.halfspaces()
    mg = b_set.size
    n_obs_rows = req.obstacles.n_circles * n_steps
    n_ctrl_rows = mg * n_steps

    # constant control-set rows
    j_ctrl = np.zeros((n_ctrl_rows, n))
    b_rep = np.tile(b_set, n_steps)
    for k in range(n_steps):
        j_ctrl[k * mg:(k + 1) * mg,
               n_state_vars + k * du:n_state_vars + (k + 1) * du] = a_set

    def split(z):
        return (z[:n_state_vars].reshape(n_steps + 1, dx),
                z[n_state_vars:].reshape(n_steps, du))

    mask = list(req.goal_mask)

    def objective(z):
        xs, us = split(z)
        perr = xs[:n_steps, mask] - goal
        val = w1 * dt * float(np.sum(perr * perr)) + \
            w2 * dt * float(np.sum(us * us))
        grad = np.zeros(n)
        gs = grad[:n_state_vars].reshape(n_steps + 1, dx)
        gs[:n_steps, mask] = 2.0 * w1 * dt * perr
        grad[n_state_vars:] = (2.0 * w2 * dt * us).ravel()
        return val, grad

    hess = np.zeros((n, n))
    for k in range(n_steps):
        for i in mask:
            hess[k * dx + i, k * dx + i] = 2.0 * w1 * dt
    for i in range(n_ctrl_vars):
        hess[n_state_vars + i, n_state_vars + i] = 2.0 * w2 * dt

    def eq_fn(z):
        xs, us = split(z)
        vals = np.empty(dx * (n_steps + 1))
        jac = np.zeros((vals.size, n))
        vals[:dx] = xs[0] - req.x_c
        jac[:dx, :dx] = np.eye(dx)
        for k in range(n_steps):
            uk = us[k]
            if integrator == "euler":
                x_next, jx, jp = _euler_sens(model, xs[k], dt, uk, np.eye(du))
            else:
                eye = np.eye(du)
                x_next, jx, jp = _rk4_sens(model, xs[k], dt,
                                           uk, uk, uk, eye, eye, eye)
            r = dx * (k + 1)
            vals[r:r + dx] = xs[k + 1] - x_next
            jac[r:r + dx, dx * (k + 1):dx * (k + 2)] = np.eye(dx)
            jac[r:r + dx, dx * k:dx * (k + 1)] = -jx
            jac[r:r + dx,
                n_state_vars + k * du:n_state_vars + (k + 1) * du] = -jp
        return vals, jac

    def ineq_fn(z):
        xs, _ = split(z)
        vals = np.empty(n_ctrl_rows + n_obs_rows)
        jac = np.zeros((vals.size, n))
        vals[:n_ctrl_rows] = j_ctrl @ z - b_rep
        jac[:n_ctrl_rows] = j_ctrl
        if n_obs_rows:
            vals[n_ctrl_rows:] = _obstacle_rows(req, xs, jac, n_ctrl_rows, 0)
        return vals, jac

    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    lo[:n_state_vars], hi[:n_state_vars] = _state_bounds(req, n_steps + 1)

    u_guess = aim_control(req) if guess is None else guess
    g_states, g_controls = _rollout_guess(req, n_steps, u_guess)
    z0 = np.concatenate([g_states.ravel(), g_controls.ravel()])

    return nlp.NlpProblem(
        blocks=[("states", n_state_vars), ("controls", n_ctrl_vars)],
        objective=objective, eq_fn=eq_fn, ineq_fn=ineq_fn,
        lower=lo, upper=hi, z0=z0, objective_hessian=hess,
        info={"dt": dt, "n_steps": n_steps,
              "control_ineq_rows": n_ctrl_rows,
              "obstacle_rows": n_obs_rows,
              "eq_rows": dx * (n_steps + 1)},
    )


def _bspop_problem(req: PlanRequest, degree: int, n_ctrl: int, n_steps: int,
                   guess: Optional[np.ndarray] = None) -> nlp.NlpProblem:
    model = req.model
    dx, du = model.dim_x, model.dim_u
    dt = req.horizon / n_steps
    n_state_vars = dx * (n_steps + 1)
    n_point_vars = du * n_ctrl
    n = n_state_vars + n_point_vars
    w1, w2 = req.weights.w1, req.weights.w2
    goal = req.goal

    basis = SplineBasis(make_clamped_uniform(degree, n_ctrl, req.horizon))
    lam_table = precompute_lambda(basis)
    w_ctrl = lam_table.weight_matrix(n_ctrl)
    h_ctrl = 2.0 * w2 * np.kron(w_ctrl, np.eye(du))

    # basis rows at the stage times k*dt/2 for k = 0..2N; the RK4 stage
    # controls for step k use rows 2k, 2k+1 and 2k+2
    stage_rows = [basis.basis_row(min(0.5 * j * dt, req.horizon))
                  for j in range(2 * n_steps + 1)]
    stage_maps = [np.kron(row, np.eye(du)) for row in stage_rows]

    a_set, b_set = req.control_set.halfspaces()
    mg = b_set.size
    n_ctrl_rows = mg * n_ctrl
    n_obs_rows = req.obstacles.n_circles * n_steps

    j_ctrl = np.zeros((n_ctrl_rows, n))
    b_rep = np.tile(b_set, n_ctrl)
    for i in range(n_ctrl):
        j_ctrl[i * mg:(i + 1) * mg,
               n_state_vars + i * du:n_state_vars + (i + 1) * du] = a_set

    def split(z):
        return (z[:n_state_vars].reshape(n_steps + 1, dx),
                z[n_state_vars:])

    mask = list(req.goal_mask)

    def objective(z):
        xs, q = split(z)
        perr = xs[:n_steps, mask] - goal
        val = w1 * dt * float(np.sum(perr * perr)) + \
            0.5 * float(q @ h_ctrl @ q)
        grad = np.zeros(n)
        gs = grad[:n_state_vars].reshape(n_steps + 1, dx)
        gs[:n_steps, mask] = 2.0 * w1 * dt * perr
        grad[n_state_vars:] = h_ctrl @ q
        return val, grad

    hess = np.zeros((n, n))
    for k in range(n_steps):
        for i in mask:
            hess[k * dx + i, k * dx + i] = 2.0 * w1 * dt
    hess[n_state_vars:, n_state_vars:] = h_ctrl

    def eq_fn(z):
        xs, q = split(z)
        pts = q.reshape(n_ctrl, du)
        vals = np.empty(dx * (n_steps + 1))
        jac = np.zeros((vals.size, n))
        vals[:dx] = xs[0] - req.x_c
        jac[:dx, :dx] = np.eye(dx)
        for k in range(n_steps):
            w_a, w_b, w_c = stage_rows[2 * k], stage_rows[2 * k + 1], \
                stage_rows[2 * k + 2]
            u1, u2, u4 = w_a @ pts, w_b @ pts, w_c @ pts
            x_next, jx, jp = _rk4_sens(
                model, xs[k], dt, u1, u2, u4,
                stage_maps[2 * k], stage_maps[2 * k + 1],
                stage_maps[2 * k + 2])
            r = dx * (k + 1)
            vals[r:r + dx] = xs[k + 1] - x_next
            jac[r:r + dx, dx * (k + 1):dx * (k + 2)] = np.eye(dx)
            jac[r:r + dx, dx * k:dx * (k + 1)] = -jx
            jac[r:r + dx, n_state_vars:] = -jp
        return vals, jac

    def ineq_fn(z):
        xs, _ = split(z)
        vals = np.empty(n_ctrl_rows + n_obs_rows)
        jac = np.zeros((vals.size, n))
        vals[:n_ctrl_rows] = j_ctrl @ z - b_rep
        jac[:n_ctrl_rows] = j_ctrl
        if n_obs_rows:
            vals[n_ctrl_rows:] = _obstacle_rows(req, xs, jac, n_ctrl_rows, 0)
        return vals, jac

    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    lo[:n_state_vars], hi[:n_state_vars] = _state_bounds(req, n_steps + 1)

    # constant-control guess: identical control points give the same
    # constant signal, so the rolled-out states stay defect-consistent
    u_guess = aim_control(req) if guess is None else guess
    g_states, g_controls = _rollout_guess(req, n_steps, u_guess)
    z0 = np.concatenate([g_states.ravel(), np.tile(g_controls[0], n_ctrl)])

    return nlp.NlpProblem(
        blocks=[("states", n_state_vars), ("controls", n_point_vars)],
        objective=objective, eq_fn=eq_fn, ineq_fn=ineq_fn,
        lower=lo, upper=hi, z0=z0, objective_hessian=hess,
        info={"dt": dt, "n_steps": n_steps, "basis": basis,
              "control_ineq_rows": n_ctrl_rows,
              "obstacle_rows": n_obs_rows,
              "eq_rows": dx * (n_steps + 1)},
    )


def _result_from(kind, req, problem, sol, n_steps, **extra) -> PlanResult:
    dx = req.model.dim_x
    ctrl_vars, total = nlp.count_variables(problem)
    states = sol.z[:dx * (n_steps + 1)].reshape(n_steps + 1, dx)
    return PlanResult(
        kind=kind, status=sol.status, states=states,
        dt=req.horizon / n_steps, z=sol.z,
        objective=sol.objective, solve_time=sol.solve_time,
        iterations=sol.iterations,
        control_vars=ctrl_vars, total_vars=total,
        eq_rows=problem.info["eq_rows"],
        ineq_rows=problem.info["control_ineq_rows"] + problem.info["obstacle_rows"],
        control_ineq_rows=problem.info["control_ineq_rows"],
        max_violation=max(sol.max_eq_violation, sol.max_ineq_violation),
        **extra,
    )


def plan_baseline(req: PlanRequest, *, integrator: str = "rk4",
                  opts: Optional[nlp.SolverOptions] = None,
                  warm_from: Optional[PlanResult] = None,
                  guess: Optional[np.ndarray] = None) -> PlanResult:
    """Discrete-time plan: piecewise-constant controls over N = T*rate steps."""
    n_steps = int(round(req.horizon * req.rate))
    if n_steps < 1:
        raise ValueError("horizon times rate must round to at least one step")
    t0 = time.perf_counter()
    problem = _baseline_problem(req, n_steps, integrator, guess)
    z_init = None
    if warm_from is not None and warm_from.z is not None \
            and warm_from.z.size == problem.n_vars:
        # shift the previous solution by one step
        dx, du = req.model.dim_x, req.model.dim_u
        ns = dx * (n_steps + 1)
        xs = warm_from.z[:ns].reshape(n_steps + 1, dx)
        us = warm_from.z[ns:].reshape(n_steps, du)
        z_init = np.concatenate([
            np.vstack([xs[1:], xs[-1]]).ravel(),
            np.vstack([us[1:], us[-1]]).ravel(),
        ])
    sol = nlp.solve(problem, z_init, opts)
    sol.solve_time = time.perf_counter() - t0
    dx, du = req.model.dim_x, req.model.dim_u
    controls = sol.z[dx * (n_steps + 1):].reshape(n_steps, du)
    return _result_from("baseline", req, problem, sol, n_steps,
                        controls=controls)


def plan_bspop(req: PlanRequest, degree: int = 3, n_ctrl: int = 4, *,
               opts: Optional[nlp.SolverOptions] = None,
               warm_from: Optional[PlanResult] = None,
               guess: Optional[np.ndarray] = None) -> PlanResult:
    """Spline plan: decision controls are the control points of a clamped
    B-spline over [0, T]; the previous solution is reused directly as the
    warm start."""
    if n_ctrl < degree + 1:
        raise ValueError("need at least degree+1 control points")
    n_steps = int(round(req.horizon * req.rate))
    if n_steps < 1:
        raise ValueError("horizon times rate must round to at least one step")
    t0 = time.perf_counter()
    problem = _bspop_problem(req, degree, n_ctrl, n_steps, guess)
    z_init = None
    if warm_from is not None and warm_from.z is not None \
            and warm_from.z.size == problem.n_vars:
        z_init = warm_from.z
    sol = nlp.solve(problem, z_init, opts)
    sol.solve_time = time.perf_counter() - t0
    dx, du = req.model.dim_x, req.model.dim_u
    points = sol.z[dx * (n_steps + 1):].reshape(n_ctrl, du)
    spline = ControlSpline(problem.info["basis"], points)
    return _result_from("bspop", req, problem, sol, n_steps, spline=spline)


def _stalled(plan: PlanResult, req: PlanRequest, goal_radius: float) -> bool:
    """A usable plan that does essentially nothing while still away from the
    goal; a symptom of the zero-control saddle of the quadratic cost."""
    if not plan.usable:
        return False
    dist = float(np.hypot(*(req.goal - req.x_c[:2])))
    if dist <= goal_radius:
        return False
    u = plan.controls if plan.kind == "baseline" \
        else plan.spline.control_points
    return float(np.abs(u).max()) < 1e-3


def receding_horizon(planner: str, scenario, sim):
    """Plan-track-replan loop at the planner rate against a simulation handle.

    The sim handle owns the plant: it exposes ``state``, ``time``,
    ``reached()``, ``advance(plan)`` covering one planner period, and
    ``finish(...)`` assembling the run metrics. Failures are recorded in the
    metrics, never raised.
    """
    pc = scenario.planner
    opts = nlp.SolverOptions(max_iter=pc.solver_max_iter, tol_kkt=pc.tol_kkt,
                             tol_eq=pc.tol_eq, tol_ineq=pc.tol_ineq)
    retry_opts = nlp.SolverOptions(max_iter=min(pc.solver_max_iter, 60),
                                   tol_kkt=pc.tol_kkt, tol_eq=pc.tol_eq,
                                   tol_ineq=pc.tol_ineq)
    solve_times: list[float] = []
    statuses: list[str] = []
    prev: Optional[PlanResult] = None
    first: Optional[PlanResult] = None
    last_retry_pos: Optional[np.ndarray] = None
    outcome = "timeout"

    if sim.reached():
        return sim.finish("reached", solve_times, statuses, None)

    def make_plan(req, warm, o=None, guess=None):
        if planner == "baseline":
            return plan_baseline(req, integrator=pc.integrator, opts=o or opts,
                                 warm_from=warm, guess=guess)
        if planner == "bspop":
            return plan_bspop(req, pc.degree, pc.points, opts=o or opts,
                              warm_from=warm, guess=guess)
        raise ValueError(f"unknown planner {planner!r}")

    while sim.time < scenario.sim.timeout - 1e-12:
        req = PlanRequest(
            x_c=sim.state, goal=scenario.goal, model=sim.model,
            control_set=sim.control_set, obstacles=sim.obstacles,
            horizon=pc.horizon, rate=pc.rate,
            weights=ObjectiveWeights(*pc.weights),
        )
        plan = make_plan(req, prev if pc.warm_start else None)
        if not plan.usable and prev is not None:
            # warm-started solve wedged (e.g. after grazing a constraint
            # boundary); retry from the cold aim guess, then from a
            # back-straight-out guess
            t_spent = plan.solve_time
            plan = make_plan(req, None, retry_opts)
            if not plan.usable:
                plan = make_plan(req, None, retry_opts,
                                 guess=backup_control(req))
            plan.solve_time += t_spent
        elif prev is not None and _stalled(plan, req, scenario.sim.goal_radius) \
                and (last_retry_pos is None
                     or np.hypot(*(sim.state[:2] - last_retry_pos)) > 0.05):
            # the warm start converged onto a do-nothing saddle away from
            # the goal; retry once per stuck position from the aim-at-goal
            # cold start
            last_retry_pos = sim.state[:2].copy()
            retry = make_plan(req, None, retry_opts)
            retry.solve_time += plan.solve_time
            if retry.usable and retry.objective < plan.objective - 1e-9:
                plan = retry
        solve_times.append(plan.solve_time)
        statuses.append(plan.status)
        if first is None:
            first = plan
        if not plan.usable:
            outcome = "infeasible"
            break
        if sim.advance(plan):
            outcome = "reached"
            break
        prev = plan
    return sim.finish(outcome, solve_times, statuses, first)
