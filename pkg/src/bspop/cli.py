"""Command-line entry point: scenario files, experiment execution, metric
tables, and SVG trajectory plots.

Scenario files are versioned JSON documents (schema 1) mirroring the Scenario
type; unknown fields are rejected. Outputs are a metrics CSV (one row per
run), per-run trajectory CSVs with columns t, state components, applied
control components and the active planner cycle, and deterministic SVG
overlays.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import Box, Circle, ObstacleField, Polytope, diamond_wheel_set
from .simharness import (PlannerConfig, RunMetrics, Scenario, SimConfig,
                         heading_grid, heading_sweep, run_closed_loop)

__all__ = ["ConfigError", "ExperimentConfig", "load_scenario",
           "scenario_from_dict", "scenario_to_dict", "render_svg", "main"]

SCHEMA_VERSION = 1

METRICS_COLUMNS = [
    "scenario", "planner", "rate", "heading", "outcome", "traj_length_m",
    "solve_mean_s", "solve_std_s", "solve_max_s", "solve_min_s",
    "control_vars", "total_vars", "eq_rows", "ineq_rows", "cycles",
    "sim_time_s", "trajectory_file",
]


class ConfigError(Exception):
    """Bad scenario file, bad override, or bad command arguments."""


@dataclass(frozen=True)
class ExperimentConfig:
    """What a single CLI invocation will execute."""

    scenario_path: str
    planner: Optional[str] = None
    rate: Optional[float] = None
    degree: Optional[int] = None
    points: Optional[int] = None
    seed: Optional[int] = None
    out_dir: str = "out"
    formats: tuple = ("csv",)
    sweep: Optional[dict] = None
    direct: bool = False
    latency_aware: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["formats"] = list(self.formats)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if "formats" in d:
            d["formats"] = tuple(d["formats"])
        return cls(**d)


def _require_keys(d: dict, allowed: set, context: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {context}: {sorted(unknown)}")


def _control_set_from(d: dict):
    kind = d.get("type")
    if kind == "box":
        _require_keys(d, {"type", "lower", "upper"}, "control_set")
        return Box(np.asarray(d["lower"], float), np.asarray(d["upper"], float))
    if kind == "diamond":
        _require_keys(d, {"type", "wheel_radius", "wheel_separation",
                          "wheel_rate_max"}, "control_set")
        return diamond_wheel_set(d["wheel_radius"], d["wheel_separation"],
                                 d["wheel_rate_max"])
    if kind == "polytope":
        _require_keys(d, {"type", "A", "b"}, "control_set")
        return Polytope(np.asarray(d["A"], float), np.asarray(d["b"], float))
    raise ConfigError(f"unknown control_set type {kind!r}")


def _control_set_to(cset) -> dict:
    if isinstance(cset, Box):
        return {"type": "box", "lower": cset.lower.tolist(),
                "upper": cset.upper.tolist()}
    return {"type": "polytope", "A": cset.A.tolist(), "b": cset.b.tolist()}


def _obstacles_from(d: dict) -> ObstacleField:
    _require_keys(d, {"circles", "corridor"}, "obstacles")
    circles = []
    for c in d.get("circles", []):
        _require_keys(c, {"center", "radius"}, "circle")
        circles.append(Circle(np.asarray(c["center"], float), c["radius"]))
    corridor = d.get("corridor")
    lo = hi = None
    if corridor is not None:
        _require_keys(corridor, {"x", "y"}, "corridor")
        lo = np.array([-np.inf, -np.inf])
        hi = np.array([np.inf, np.inf])
        for axis, i in (("x", 0), ("y", 1)):
            if axis in corridor:
                lo[i], hi[i] = corridor[axis]
    return ObstacleField(tuple(circles), lo, hi)


def _obstacles_to(obs: ObstacleField) -> dict:
    d: dict = {"circles": [{"center": c.center.tolist(), "radius": c.radius}
                           for c in obs.circles]}
    if obs.corridor_lower is not None:
        corridor = {}
        for axis, i in (("x", 0), ("y", 1)):
            if np.isfinite(obs.corridor_lower[i]) or \
                    np.isfinite(obs.corridor_upper[i]):
                corridor[axis] = [obs.corridor_lower[i], obs.corridor_upper[i]]
        d["corridor"] = corridor
    else:
        d["corridor"] = None
    return d


_SCENARIO_KEYS = {"schema", "name", "model", "wheelbase", "initial_state",
                  "goal", "control_set", "obstacles", "planner", "sim", "seed"}
_PLANNER_KEYS = {"type", "rate", "horizon", "degree", "points", "weights",
                 "integrator", "solver_max_iter", "tol_kkt", "tol_eq",
                 "tol_ineq", "warm_start"}
_SIM_KEYS = {"tracker_hz", "plant_hz", "goal_radius", "timeout", "kp", "kd",
             "direct", "latency_aware"}


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported scenario schema {d.get('schema')!r}")
    _require_keys(d, _SCENARIO_KEYS, "scenario")
    planner_d = dict(d.get("planner", {}))
    _require_keys(planner_d, _PLANNER_KEYS, "planner")
    if "weights" in planner_d:
        planner_d["weights"] = tuple(planner_d["weights"])
    sim_d = dict(d.get("sim", {}))
    _require_keys(sim_d, _SIM_KEYS, "sim")
    try:
        return Scenario(
            name=d["name"],
            model=d["model"],
            initial_state=np.asarray(d["initial_state"], float),
            goal=np.asarray(d["goal"], float),
            control_set=_control_set_from(d["control_set"]),
            obstacles=_obstacles_from(d.get("obstacles", {"circles": [],
                                                          "corridor": None})),
            planner=PlannerConfig(**planner_d),
            sim=SimConfig(**sim_d),
            wheelbase=d.get("wheelbase", 2.0),
            seed=d.get("seed", 0),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "name": s.name,
        "model": s.model,
        "wheelbase": s.wheelbase,
        "initial_state": s.initial_state.tolist(),
        "goal": s.goal.tolist(),
        "control_set": _control_set_to(s.control_set),
        "obstacles": _obstacles_to(s.obstacles),
        "planner": {"type": s.planner.type, "rate": s.planner.rate,
                    "horizon": s.planner.horizon, "degree": s.planner.degree,
                    "points": s.planner.points,
                    "weights": list(s.planner.weights),
                    "integrator": s.planner.integrator,
                    "solver_max_iter": s.planner.solver_max_iter,
                    "tol_kkt": s.planner.tol_kkt,
                    "tol_eq": s.planner.tol_eq,
                    "tol_ineq": s.planner.tol_ineq,
                    "warm_start": s.planner.warm_start},
        "sim": {"tracker_hz": s.sim.tracker_hz, "plant_hz": s.sim.plant_hz,
                "goal_radius": s.sim.goal_radius, "timeout": s.sim.timeout,
                "kp": s.sim.kp, "kd": s.sim.kd, "direct": s.sim.direct,
                "latency_aware": s.sim.latency_aware},
        "seed": s.seed,
    }


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return scenario_from_dict(data)


def bundled_scenario_path(name: str) -> Path:
    return Path(__file__).parent / "scenarios" / f"{name}.json"


def _apply_overrides(scenario: Scenario, cfg: ExperimentConfig) -> Scenario:
    pc = scenario.planner
    updates = {}
    if cfg.planner is not None:
        if cfg.planner not in ("baseline", "bspop"):
            raise ConfigError(f"unknown planner {cfg.planner!r}")
        updates["type"] = cfg.planner
    if cfg.rate is not None:
        updates["rate"] = cfg.rate
    if cfg.degree is not None:
        updates["degree"] = cfg.degree
    if cfg.points is not None:
        updates["points"] = cfg.points
    if updates:
        scenario = replace(scenario, planner=replace(pc, **updates))
    sim_updates = {}
    if cfg.direct:
        sim_updates["direct"] = True
    if cfg.latency_aware:
        sim_updates["latency_aware"] = True
    if sim_updates:
        scenario = replace(scenario, sim=replace(scenario.sim, **sim_updates))
    if cfg.seed is not None:
        scenario = replace(scenario, seed=cfg.seed)
    return scenario


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def write_trajectory_csv(path: Path, scenario: Scenario, metrics: RunMetrics):
    state_names = {"unicycle": ["px", "py", "theta"],
                   "ackermann": ["px", "py", "theta", "phi"]}
    cols = (["t"] + state_names.get(scenario.model,
                                    [f"x{i}" for i in
                                     range(metrics.x_log.shape[1])])
            + ["v", "omega"] + ["cycle"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(metrics.t_log.size):
            row = [metrics.t_log[i], *metrics.x_log[i], *metrics.u_log[i],
                   int(metrics.cycle_log[i])]
            w.writerow([_fmt(v) for v in row])


def metrics_row(scenario: Scenario, metrics: RunMetrics, heading: float,
                traj_file: str = "") -> list:
    return [scenario.name, scenario.planner.type, scenario.planner.rate,
            heading, metrics.outcome, metrics.trajectory_length,
            metrics.solve_mean, metrics.solve_std, metrics.solve_max,
            metrics.solve_min, metrics.control_vars, metrics.total_vars,
            metrics.eq_rows, metrics.ineq_rows, metrics.n_cycles,
            metrics.sim_time, traj_file]


def write_metrics_csv(path: Path, rows: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# SVG rendering (hand-rolled so repeated runs are byte-identical)
# ---------------------------------------------------------------------------

_SVG_STYLE = (".obstacle{fill:#d9d9d9;stroke:#666;stroke-width:1}"
              ".corridor{stroke:#999;stroke-width:1;stroke-dasharray:6 4}"
              ".reached{stroke:#1f77b4}.failed{stroke:#d62728}"
              ".traj{fill:none;stroke-width:1.5}"
              ".goal{fill:#2ca02c}")


def render_svg(trajectories: list, obstacles: ObstacleField,
               goal: Optional[np.ndarray] = None,
               width: int = 640, height: int = 480) -> str:
    """Deterministic SVG overlay.

    trajectories: list of (xy array, outcome string); outcomes other than
    "reached" render in the failed style.
    """
    pts = [np.atleast_2d(t[0])[:, :2] for t in trajectories if len(t[0])]
    xs, ys = [], []
    for p in pts:
        xs.extend([p[:, 0].min(), p[:, 0].max()])
        ys.extend([p[:, 1].min(), p[:, 1].max()])
    for c in obstacles.circles:
        xs.extend([c.center[0] - c.radius, c.center[0] + c.radius])
        ys.extend([c.center[1] - c.radius, c.center[1] + c.radius])
    if goal is not None:
        xs.append(float(goal[0]))
        ys.append(float(goal[1]))
    if obstacles.corridor_lower is not None:
        for i, arr in enumerate((xs, ys)):
            if np.isfinite(obstacles.corridor_lower[i]):
                arr.append(float(obstacles.corridor_lower[i]))
            if np.isfinite(obstacles.corridor_upper[i]):
                arr.append(float(obstacles.corridor_upper[i]))
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    pad = 0.05 * max(x1 - x0, y1 - y0, 1.0)
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    scale = min((width - 20) / (x1 - x0), (height - 20) / (y1 - y0))

    def sx(x):
        return 10 + (x - x0) * scale

    def sy(y):
        return height - 10 - (y - y0) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f"<style>{_SVG_STYLE}</style>"]
    if obstacles.corridor_lower is not None:
        for i, (lo, hi) in enumerate(zip(obstacles.corridor_lower,
                                         obstacles.corridor_upper)):
            for val in (lo, hi):
                if not np.isfinite(val):
                    continue
                if i == 0:
                    out.append(f'<line class="corridor" x1="{sx(val):.2f}" '
                               f'y1="{sy(y0):.2f}" x2="{sx(val):.2f}" '
                               f'y2="{sy(y1):.2f}"/>')
                else:
                    out.append(f'<line class="corridor" x1="{sx(x0):.2f}" '
                               f'y1="{sy(val):.2f}" x2="{sx(x1):.2f}" '
                               f'y2="{sy(val):.2f}"/>')
    for c in obstacles.circles:
        out.append(f'<circle class="obstacle" cx="{sx(c.center[0]):.2f}" '
                   f'cy="{sy(c.center[1]):.2f}" r="{c.radius * scale:.2f}"/>')
    if goal is not None:
        out.append(f'<circle class="goal" cx="{sx(goal[0]):.2f}" '
                   f'cy="{sy(goal[1]):.2f}" r="4"/>')
    for xy, outcome in trajectories:
        xy = np.atleast_2d(xy)
        cls = "reached" if outcome == "reached" else "failed"
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in xy[:, :2])
        out.append(f'<polyline class="traj {cls}" points="{points}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = ExperimentConfig(
        scenario_path=args.scenario, planner=args.planner, rate=args.rate,
        degree=args.degree, points=args.points, seed=args.seed,
        out_dir=args.out, direct=args.direct,
        latency_aware=args.latency_aware)
    scenario = _apply_overrides(load_scenario(cfg.scenario_path), cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = run_closed_loop(scenario)
    traj_name = f"{scenario.name}_{scenario.planner.type}_traj.csv"
    write_trajectory_csv(out / traj_name, scenario, metrics)
    write_metrics_csv(out / "metrics.csv",
                      [metrics_row(scenario, metrics,
                                   float(scenario.initial_state[2]),
                                   traj_name)])
    print(f"{scenario.name} [{scenario.planner.type} @ "
          f"{scenario.planner.rate:g} Hz] -> {metrics.outcome}, "
          f"length {metrics.trajectory_length:.3f} m, "
          f"{metrics.n_cycles} cycles, mean solve "
          f"{metrics.solve_mean * 1e3:.1f} ms")
    return 0


def _parse_variants(spec: str) -> list[tuple[str, float]]:
    out = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        if len(parts) == 1:
            out.append((parts[0], None))
        elif len(parts) == 2:
            try:
                out.append((parts[0], float(parts[1])))
            except ValueError as exc:
                raise ConfigError(f"bad variant {token!r}") from exc
        else:
            raise ConfigError(f"bad variant {token!r}")
    if len(out) < 2:
        raise ConfigError("compare needs at least two planner variants")
    for name, _ in out:
        if name not in ("baseline", "bspop"):
            raise ConfigError(f"unknown planner {name!r} in variants")
    return out


def cmd_compare(args) -> int:
    base = load_scenario(args.scenario)
    variants = _parse_variants(args.variants)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    trajs = []
    for ptype, rate in variants:
        planner = replace(base.planner, type=ptype,
                          **({"rate": rate} if rate else {}))
        scenario = replace(base, planner=planner)
        if args.direct:
            scenario = replace(scenario, sim=replace(scenario.sim, direct=True))
        metrics = run_closed_loop(scenario)
        label = f"{ptype}_{scenario.planner.rate:g}hz"
        traj_name = f"{base.name}_{label}_traj.csv"
        write_trajectory_csv(out / traj_name, scenario, metrics)
        rows.append(metrics_row(scenario, metrics,
                                float(scenario.initial_state[2]), traj_name))
        trajs.append((metrics.x_log[:, :2], metrics.outcome))
    write_metrics_csv(out / "comparison.csv", rows)
    svg = render_svg(trajs, base.obstacles, base.goal)
    (out / "comparison.svg").write_text(svg)

    header = ["planner", "rate_hz", "outcome", "traj_m", "solve_mean_s",
              "solve_std_s", "ctrl_vars", "total_vars"]
    print("  ".join(f"{h:>12}" for h in header))
    for row in rows:
        display = [row[1], f"{row[2]:g}", row[4], f"{row[5]:.3f}",
                   f"{row[6]:.4f}", f"{row[7]:.4f}", row[10], row[11]]
        print("  ".join(f"{str(v):>12}" for v in display))
    return 0


def cmd_sweep(args) -> int:
    base = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    planners_to_run = ["baseline", "bspop"] if args.planner == "both" \
        else [args.planner]
    thetas = heading_grid(args.theta_min, args.theta_max, args.step)
    for ptype in planners_to_run:
        scenario = replace(base, planner=replace(base.planner, type=ptype))
        if args.direct:
            scenario = replace(scenario, sim=replace(scenario.sim, direct=True))
        results = heading_sweep(scenario, args.theta_min, args.theta_max,
                                args.step, workers=args.workers)
        rows = [metrics_row(scenario, m, float(t))
                for t, m in zip(thetas, results)]
        write_metrics_csv(out / f"sweep_{base.name}_{ptype}.csv", rows)
        n_ok = sum(1 for m in results if m.outcome == "reached")
        print(f"{ptype}: {n_ok}/{len(results)} headings reached the goal")
    return 0


def _read_traj_xy(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        try:
            ix, iy = header.index("px"), header.index("py")
        except ValueError as exc:
            raise ConfigError(f"{path}: missing px/py columns") from exc
        rows = []
        for row in reader:
            try:
                rows.append((float(row[ix]), float(row[iy])))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}: malformed row") from exc
    return np.asarray(rows)


def cmd_plot(args) -> int:
    scenario = load_scenario(args.scenario)
    outcomes = args.outcomes.split(",") if args.outcomes else []
    trajs = []
    for i, p in enumerate(args.traj):
        outcome = outcomes[i] if i < len(outcomes) else "reached"
        trajs.append((_read_traj_xy(Path(p)), outcome))
    svg = render_svg(trajs, scenario.obstacles, scenario.goal)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bspop",
        description="Receding-horizon planner benchmarks: continuous-time "
                    "spline controls vs discrete-time controls.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--planner", choices=["baseline", "bspop"])
    run.add_argument("--rate", type=float)
    run.add_argument("--degree", type=int)
    run.add_argument("--points", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="out")
    run.add_argument("--direct", action="store_true",
                     help="apply the sampled reference without the PD filter")
    run.add_argument("--latency-aware", action="store_true")
    run.set_defaults(func=cmd_run)

    comp = sub.add_parser("compare", help="run several planner variants")
    comp.add_argument("--scenario", required=True)
    comp.add_argument("--variants", required=True,
                      help="comma list like baseline:10,baseline:50,bspop:10")
    comp.add_argument("--out", default="out")
    comp.add_argument("--direct", action="store_true")
    comp.set_defaults(func=cmd_compare)

    sweep = sub.add_parser("sweep", help="sweep the initial heading")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--planner", choices=["baseline", "bspop", "both"],
                       default="both")
    sweep.add_argument("--theta-min", type=float, default=-np.pi)
    sweep.add_argument("--theta-max", type=float, default=np.pi)
    sweep.add_argument("--step", type=float, default=0.1)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--out", default="out")
    sweep.add_argument("--direct", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    plot = sub.add_parser("plot", help="render trajectory CSVs over obstacles")
    plot.add_argument("--scenario", required=True)
    plot.add_argument("--traj", nargs="*", default=[])
    plot.add_argument("--outcomes", default="",
                      help="comma list matching --traj, e.g. reached,failed")
    plot.add_argument("--out", default="plot.svg")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
