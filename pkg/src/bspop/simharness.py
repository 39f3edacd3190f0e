"""Closed-loop simulation: high-rate plant integration, a 400 Hz PD tracking
loop on the planned control signal, scenario definitions, heading sweeps, and
metric collection.

The tracker samples the active plan continuously (spline evaluation for the
spline planner, zero-order hold for the baseline); commands are always
saturated into the control set by scaling toward its interior point. A
direct-application mode bypasses the PD filter and applies the sampled
reference as-is.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import planners
from .dynamics import (ControlAffineModel, ControlSet, ObstacleField,
                       ackermann, saturate, unicycle)

__all__ = [
    "PlannerConfig",
    "SimConfig",
    "Scenario",
    "RunMetrics",
    "PdTracker",
    "pd_command",
    "ClosedLoopSim",
    "run_closed_loop",
    "heading_grid",
    "heading_sweep",
    "resolve_workers",
]


@dataclass(frozen=True)
class PlannerConfig:
    type: str = "bspop"            # "baseline" | "bspop"
    rate: float = 10.0             # planner invocations per second
    horizon: float = 1.0
    degree: int = 3
    points: int = 4
    weights: tuple = (10.0, 1.0)
    integrator: str = "rk4"        # baseline defects; "euler" is the literal mode
    solver_max_iter: int = 200
    tol_kkt: float = 1e-6
    tol_eq: float = 1e-6
    tol_ineq: float = 1e-6
    warm_start: bool = True

    def __post_init__(self):
        if self.type not in ("baseline", "bspop"):
            raise ValueError(f"unknown planner type {self.type!r}")
        if self.rate <= 0 or self.horizon <= 0:
            raise ValueError("rate and horizon must be positive")


@dataclass(frozen=True)
class SimConfig:
    tracker_hz: float = 400.0
    plant_hz: float = 1000.0
    goal_radius: float = 0.1
    timeout: float = 30.0
    kp: float = 1.0
    kd: float = 0.05
    direct: bool = False           # bypass the PD filter
    latency_aware: bool = False    # delay plan activation by its solve time

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be non-negative")


@dataclass(frozen=True)
class Scenario:
    name: str
    model: str                     # "unicycle" | "ackermann"
    initial_state: np.ndarray
    goal: np.ndarray
    control_set: ControlSet
    obstacles: ObstacleField = field(default_factory=ObstacleField)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    wheelbase: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "initial_state",
                           np.asarray(self.initial_state, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        if self.sim.tracker_hz < self.planner.rate:
            raise ValueError("tracker rate must be at least the planner rate")
        if self.sim.plant_hz < self.sim.tracker_hz:
            raise ValueError("plant rate must be at least the tracker rate")

    def build_model(self) -> ControlAffineModel:
        if self.model == "unicycle":
            return unicycle()
        if self.model == "ackermann":
            return ackermann(self.wheelbase)
        raise ValueError(f"unknown model {self.model!r}")

    def with_heading(self, theta: float) -> "Scenario":
        x0 = self.initial_state.copy()
        x0[2] = theta
        return replace(self, initial_state=x0)


@dataclass
class RunMetrics:
    outcome: str                   # "reached" | "infeasible" | "timeout"
    trajectory_length: float
    solve_mean: float
    solve_std: float
    solve_max: float
    solve_min: float
    control_vars: int
    total_vars: int
    eq_rows: int
    ineq_rows: int
    control_ineq_rows: int
    n_cycles: int
    sim_time: float
    solve_times: np.ndarray
    statuses: tuple
    t_log: np.ndarray
    x_log: np.ndarray
    u_log: np.ndarray
    cycle_log: np.ndarray


def pd_command(u_ref: np.ndarray, u_applied: np.ndarray,
               prev_err: np.ndarray,
               kp: float, kd: float) -> tuple[np.ndarray, np.ndarray]:
    """One PD correction on the control-space reference.

    command = u_ref + kp * e + kd * de with e = u_ref - u_applied and de the
    backward difference of the error over one tracker period. Returns the
    raw (unsaturated) command and the new error.
    """
    err = np.asarray(u_ref, dtype=float) - np.asarray(u_applied, dtype=float)
    return u_ref + kp * err + kd * (err - prev_err), err


class PdTracker:
    """Stateful PD loop; feedback uses the previous tracker-period command as
    the applied control (the kinematic plants carry no actuator state).

    The correction is integrated implicitly over each tracker period
    (divided by 1 + kp), which keeps the loop a stable discretization of the
    first-order tracking filter for any non-negative gains; with kp = 1 a
    step reference settles within a few periods. Zero gains degenerate to
    pure feedforward of the reference.
    """

    def __init__(self, control_set: ControlSet, kp: float, kd: float,
                 dt: float):
        self.control_set = control_set
        self.kp = kp
        self.kd = kd
        self.dt = dt
        self.u_applied = control_set.interior_point()
        self.prev_err = np.zeros_like(self.u_applied)

    def step(self, u_ref: np.ndarray) -> np.ndarray:
        raw, err = pd_command(u_ref, self.u_applied, self.prev_err,
                              self.kp, self.kd)
        self.prev_err = err
        correction = (raw - u_ref) / (1.0 + self.kp)
        cmd = saturate(self.control_set, u_ref + correction)
        self.u_applied = cmd
        return cmd


class ClosedLoopSim:
    """Owns the plant state, the tracker, and the step logs for one run."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.model = scenario.build_model()
        self.control_set = scenario.control_set
        self.obstacles = scenario.obstacles
        self.state = scenario.initial_state.copy()
        self.time = 0.0

        pc, sc = scenario.planner, scenario.sim
        self.period = 1.0 / pc.rate
        self.n_track = max(1, round(sc.tracker_hz / pc.rate))
        self.track_dt = self.period / self.n_track
        self.n_sub = max(1, math.ceil(sc.plant_hz / sc.tracker_hz))
        self.sub_dt = self.track_dt / self.n_sub

        self.tracker = PdTracker(self.control_set, sc.kp, sc.kd, self.track_dt)
        self.cycle = -1
        self._prev_plan = None
        u0 = self.control_set.interior_point()
        self._t_log = [0.0]
        self._x_log = [self.state.copy()]
        self._u_log = [u0]
        self._cycle_log = [-1]

    def reached(self) -> bool:
        err = self.state[:2] - self.scenario.goal
        return float(err @ err) <= self.scenario.sim.goal_radius ** 2

    def advance(self, plan) -> bool:
        """Track the plan for one planner period; True once the goal radius
        is hit (checked at every plant substep)."""
        sc = self.scenario.sim
        self.cycle += 1
        delay = min(plan.solve_time, self.period) if sc.latency_aware else 0.0
        for j in range(self.n_track):
            t_loc = j * self.track_dt
            if t_loc < delay and self._prev_plan is not None:
                u_ref = self._prev_plan.control_at(self.period + t_loc)
            elif t_loc < delay:
                u_ref = self.control_set.interior_point()
            else:
                u_ref = plan.control_at(t_loc - delay)
            if sc.direct:
                cmd = saturate(self.control_set, u_ref)
                self.tracker.u_applied = cmd
            else:
                cmd = self.tracker.step(u_ref)
            for _ in range(self.n_sub):
                self.state = _rk4_const(self.model, self.state, cmd,
                                        self.sub_dt)
                self.time += self.sub_dt
                self._t_log.append(self.time)
                self._x_log.append(self.state.copy())
                self._u_log.append(cmd.copy())
                self._cycle_log.append(self.cycle)
                if self.reached():
                    self._prev_plan = plan
                    return True
            if self.time >= sc.timeout - 1e-12:
                break
        self._prev_plan = plan
        return False

    def finish(self, outcome: str, solve_times, statuses,
               first_plan) -> RunMetrics:
        xs = np.asarray(self._x_log)
        seg = np.diff(xs[:, :2], axis=0)
        length = float(np.sum(np.sqrt(np.sum(seg * seg, axis=1))))
        times = np.asarray(solve_times, dtype=float)
        if times.size:
            stats = (float(times.mean()), float(times.std()),
                     float(times.max()), float(times.min()))
        else:
            stats = (0.0, 0.0, 0.0, 0.0)
        fp = first_plan
        return RunMetrics(
            outcome=outcome,
            trajectory_length=length,
            solve_mean=stats[0], solve_std=stats[1],
            solve_max=stats[2], solve_min=stats[3],
            control_vars=fp.control_vars if fp else 0,
            total_vars=fp.total_vars if fp else 0,
            eq_rows=fp.eq_rows if fp else 0,
            ineq_rows=fp.ineq_rows if fp else 0,
            control_ineq_rows=fp.control_ineq_rows if fp else 0,
            n_cycles=times.size,
            sim_time=self.time,
            solve_times=times,
            statuses=tuple(statuses),
            t_log=np.asarray(self._t_log),
            x_log=xs,
            u_log=np.asarray(self._u_log),
            cycle_log=np.asarray(self._cycle_log),
        )


def _rk4_const(model: ControlAffineModel, x: np.ndarray, u: np.ndarray,
               dt: float) -> np.ndarray:
    k1 = model.deriv(x, u)
    k2 = model.deriv(x + 0.5 * dt * k1, u)
    k3 = model.deriv(x + 0.5 * dt * k2, u)
    k4 = model.deriv(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def run_closed_loop(scenario: Scenario) -> RunMetrics:
    """Run one scenario to completion and collect metrics."""
    sim = ClosedLoopSim(scenario)
    return planners.receding_horizon(scenario.planner.type, scenario, sim)


def heading_grid(theta_min: float, theta_max: float, step: float) -> np.ndarray:
    """Inclusive-start grid theta_min, theta_min+step, ... up to theta_max."""
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(math.floor((theta_max - theta_min) / step + 1e-12)) + 1
    return theta_min + step * np.arange(max(count, 1))


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count for sweeps, capped by the BSPOP_THREADS variable."""
    workers = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get("BSPOP_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def _run_with_heading(args) -> RunMetrics:
    scenario, theta = args
    return run_closed_loop(scenario.with_heading(theta))


def heading_sweep(base: Scenario, theta_min: float, theta_max: float,
                  step: float, workers: Optional[int] = None) -> list[RunMetrics]:
    """Closed-loop run per initial heading, ordered by heading."""
    thetas = heading_grid(theta_min, theta_max, step)
    jobs = [(base, float(t)) for t in thetas]
    n_workers = resolve_workers(workers)
    if n_workers <= 1 or len(jobs) <= 1:
        return [_run_with_heading(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_with_heading, jobs))
