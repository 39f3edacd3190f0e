"""Receding-horizon planning with B-spline parameterized continuous-time
controls, a discrete-time baseline planner, and a closed-loop benchmark
harness."""

from .costs import LambdaTable, ObjectiveWeights, control_cost, goal_cost, \
    precompute_lambda
from .dynamics import (Box, Circle, ControlAffineModel, ControlSet,
                       ObstacleField, Polytope, ackermann, diamond_wheel_set,
                       lifted_gain, rk4_step, unicycle)
from .linop import kron, vec, vec_product
from .nlp import (CONVERGED, INFEASIBLE, MAX_ITERATIONS, NlpProblem,
                  NlpSolution, SolverOptions, count_variables,
                  finite_difference_check, solve)
from .planners import PlanRequest, PlanResult, plan_baseline, plan_bspop, \
    receding_horizon
from .simharness import (ClosedLoopSim, PdTracker, PlannerConfig, RunMetrics,
                         Scenario, SimConfig, heading_sweep, run_closed_loop)
from .splinecore import (ControlSpline, KnotVector, SplineBasis,
                         basis_function, basis_matrix, eval_control,
                         make_clamped_uniform)

__version__ = "0.1.0"
