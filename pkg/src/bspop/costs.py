"""Objective assembly: goal-tracking cost, control-effort cost, and the
precomputed per-segment integral coefficients that make the control effort
quadratic in the control points.

For each segment the row (GammaM)(t) kron (GammaM)(t) integrates in closed
form: every entry is a polynomial of degree <= 2p in the normalized segment
parameter, so

    Lambda = span_width * M^T H M,   H[k1, k2] = 1 / (k1 + k2 + 1),

and the control effort of the spline is

    integral ||u(t)||^2 dt = sum_s sum_{j1,j2} Lambda_s[j1,j2] <q_{s+j1}, q_{s+j2}>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .splinecore import SplineBasis

__all__ = ["LambdaTable", "ObjectiveWeights", "precompute_lambda",
           "control_cost", "goal_cost"]


@dataclass(frozen=True)
class LambdaTable:
    """Per-segment integral coefficients, one (p+1) x (p+1) symmetric table
    per segment, indexed by the (j1, j2) control-point offsets."""

    degree: int
    spans: tuple
    tables: tuple

    @property
    def n_segments(self) -> int:
        return len(self.tables)

    def flat(self, s: int) -> np.ndarray:
        """Segment s as a row of length (p+1)^2, entry index (p+1)*j1 + j2."""
        return self.tables[s].ravel()

    def weight_matrix(self, n_ctrl: int) -> np.ndarray:
        """Accumulate the segment tables into an (n+1) x (n+1) matrix W such
        that the total control effort is sum_{a,b} W[a,b] <q_a, q_b>."""
        w = np.zeros((n_ctrl, n_ctrl))
        for s, tab in enumerate(self.tables):
            k = tab.shape[0]
            w[s:s + k, s:s + k] += tab
        return w


def precompute_lambda(basis: SplineBasis) -> LambdaTable:
    """Integrate (GammaM) kron (GammaM) exactly over every segment."""
    p = basis.degree
    tau = basis.knots.knots
    powers = np.arange(p + 1)
    hilbert = 1.0 / (powers[:, None] + powers[None, :] + 1)
    spans = []
    tables = []
    for s in range(basis.n_segments):
        i = p + s
        width = tau[i + 1] - tau[i]
        m = basis.matrices[s]
        tables.append(width * (m.T @ hilbert @ m))
        spans.append((float(tau[i]), float(tau[i + 1])))
    return LambdaTable(p, tuple(spans), tuple(tables))


def control_cost(table: LambdaTable, control_points: np.ndarray) -> float:
    """Control effort integral ||u(t)||^2 dt expressed through the table."""
    q = np.atleast_2d(np.asarray(control_points, dtype=float))
    p1 = table.degree + 1
    if q.shape[0] != table.n_segments + table.degree:
        raise ValueError(
            f"expected {table.n_segments + table.degree} control points, "
            f"got {q.shape[0]}")
    total = 0.0
    for s, tab in enumerate(table.tables):
        block = q[s:s + p1]
        total += float(np.sum(tab * (block @ block.T)))
    return total


def goal_cost(trajectory: np.ndarray, x_g: np.ndarray, dt: float,
              components: tuple = (0, 1)) -> float:
    """Rectangle-rule approximation of the squared distance-to-goal integral.

    The distance is taken over the listed state components (positions by
    default); x_g must match their count.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if traj.shape[0] == 0:
        raise ValueError("trajectory must be nonempty")
    goal = np.asarray(x_g, dtype=float)
    idx = list(components)
    if goal.size != len(idx):
        raise ValueError("goal size must match the component mask")
    err = traj[:, idx] - goal
    return float(dt * np.sum(err * err))


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights for the goal and control terms; the control penalty matrix is
    fixed to identity."""

    w1: float = 10.0
    w2: float = 1.0

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or self.w1 + self.w2 <= 0:
            raise ValueError("weights must be non-negative and not both zero")
