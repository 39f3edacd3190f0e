"""Clamped B-spline knots, basis functions, segment basis matrices, and curve
evaluation in matrix form.

A degree-p spline with n+1 control points uses m+1 = n+p+2 knots. On each
nonempty span [tau_i, tau_i+1) the curve is a polynomial in the normalized
parameter TT = (t - tau_i) / (tau_i+1 - tau_i):

    u(t) = [1, TT, ..., TT^p] @ M_i @ Q_block

where M_i is the span's (p+1)x(p+1) basis matrix and Q_block stacks the p+1
control points active on that span. The basis matrices are built once per
knot vector by a recursion over the degree and cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KnotVector",
    "SplineBasis",
    "ControlSpline",
    "make_clamped_uniform",
    "basis_function",
    "basis_matrix",
    "eval_control",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class KnotVector:
    """Non-decreasing knot sequence tau_0..tau_m with a spline degree."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        object.__setattr__(self, "knots", _readonly(self.knots))
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if self.knots.ndim != 1 or self.knots.size < 2 * (self.degree + 1):
            raise ValueError("need at least 2*(degree+1) knots")
        if np.any(np.diff(self.knots) < 0):
            raise ValueError("knots must be non-decreasing")

    def __len__(self) -> int:
        return self.knots.size

    @property
    def n_ctrl(self) -> int:
        """Number of control points n+1 implied by the knot count."""
        return self.knots.size - self.degree - 1

    @property
    def t_start(self) -> float:
        return float(self.knots[self.degree])

    @property
    def t_end(self) -> float:
        return float(self.knots[self.n_ctrl])

    def __eq__(self, other) -> bool:
        return (isinstance(other, KnotVector) and self.degree == other.degree
                and np.array_equal(self.knots, other.knots))


def make_clamped_uniform(p: int, n_ctrl: int, horizon: float) -> KnotVector:
    """Clamped uniform knots over [0, horizon] for degree p and n_ctrl points.

    The first and last p+1 knots repeat (0 and horizon respectively) and the
    interior knots increase strictly uniformly, giving S = n_ctrl - p segments.
    """
    if n_ctrl < p + 1:
        raise ValueError(f"need at least p+1={p + 1} control points, got {n_ctrl}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    segments = n_ctrl - p
    interior = np.arange(1, segments) * (horizon / segments)
    knots = np.concatenate([np.zeros(p + 1), interior, np.full(p + 1, horizon)])
    return KnotVector(knots, p)


def basis_function(i: int, p: int, t: float, kv: KnotVector) -> float:
    """N_{i,p}(t) by the Cox-de Boor recursion with the 0/0 = 0 convention.

    At t equal to the final knot the left-limit value is returned, so a
    clamped basis evaluates to 1 for the last index instead of 0.
    """
    tau = kv.knots
    if not (tau[0] <= t <= tau[-1]):
        raise ValueError(f"t={t} outside knot range [{tau[0]}, {tau[-1]}]")
    if not 0 <= i <= tau.size - p - 2:
        raise ValueError(f"basis index {i} out of range for degree {p}")
    return _cox_de_boor(i, p, t, tau)


def _cox_de_boor(i: int, p: int, t: float, tau: np.ndarray) -> float:
    if p == 0:
        if tau[i] <= t < tau[i + 1]:
            return 1.0
        # close the final nonempty span on the right
        if t == tau[-1] and tau[i] < tau[i + 1] == tau[-1]:
            return 1.0
        return 0.0
    left = 0.0
    den = tau[i + p] - tau[i]
    if den > 0:
        left = (t - tau[i]) / den * _cox_de_boor(i, p - 1, t, tau)
    right = 0.0
    den = tau[i + p + 1] - tau[i + 1]
    if den > 0:
        right = (tau[i + p + 1] - t) / den * _cox_de_boor(i + 1, p - 1, t, tau)
    return left + right


def basis_matrix(i: int, p: int, kv: KnotVector) -> np.ndarray:
    """Basis matrix M_i for the span [tau_i, tau_i+1), shape (p+1, p+1).

    Built by expanding the degree one step at a time: the step that produces
    the (rho+1)-sized matrix mixes the previous one through two banded
    matrices whose entries are the knot ratios

        d0_j = (tau_i - tau_j) / (tau_j+rho - tau_j)
        d1_j = (tau_i+1 - tau_j) / (tau_j+rho - tau_j)

    for j = i-rho+1 .. i, with 0/0 treated as 0. Row k of the result holds
    the TT^k coefficients of the p+1 basis polynomials on the span.
    """
    tau = kv.knots
    if not 0 <= i < tau.size - 1:
        raise ValueError(f"span index {i} out of range")
    if not tau[i + 1] > tau[i]:
        raise ValueError(f"span [tau_{i}, tau_{i + 1}) is empty")
    if i - p < -1 or i + p >= tau.size:
        raise ValueError(f"span {i} cannot support degree {p} on these knots")
    m = np.array([[1.0]])
    for rho in range(1, p + 1):
        r0 = np.zeros((rho, rho + 1))
        r1 = np.zeros((rho, rho + 1))
        for r in range(rho):
            j = i - rho + 1 + r
            den = tau[j + rho] - tau[j]
            if den > 0:
                d0 = (tau[i] - tau[j]) / den
                d1 = (tau[i + 1] - tau[j]) / den
            else:
                d0 = d1 = 0.0
            r0[r, r] = 1.0 - d0
            r0[r, r + 1] = d0
            r1[r, r] = -(d1 - d0)
            r1[r, r + 1] = d1 - d0
        z = np.zeros((1, rho))
        m = np.vstack([m, z]) @ r0 + np.vstack([z, m]) @ r1
    return m


@dataclass(frozen=True)
class SplineBasis:
    """Degree, knots, and the cached per-segment basis matrices.

    Requires the clamped layout (possibly non-uniform interior): the first and
    last p+1 knots repeated, interior knots strictly increasing. Segment s
    covers the span [tau_{p+s}, tau_{p+s+1}) and weights control points
    s..s+p.
    """

    knots: KnotVector
    matrices: tuple = field(default=(), compare=False)

    def __post_init__(self):
        kv = self.knots
        p, tau = kv.degree, kv.knots
        n1 = kv.n_ctrl
        if n1 < p + 1:
            raise ValueError("knot vector implies fewer than p+1 control points")
        if tau[0] != tau[p] or tau[n1] != tau[-1]:
            raise ValueError("clamped knot layout required")
        if np.any(np.diff(tau[p:n1 + 1]) <= 0):
            raise ValueError("interior knots must be strictly increasing")
        mats = tuple(basis_matrix(p + s, p, kv) for s in range(self.n_segments))
        object.__setattr__(self, "matrices", mats)

    @property
    def degree(self) -> int:
        return self.knots.degree

    @property
    def n_ctrl(self) -> int:
        return self.knots.n_ctrl

    @property
    def n_segments(self) -> int:
        """S = n + 1 - p."""
        return self.n_ctrl - self.degree

    def segment_of(self, t: float) -> int:
        """Index of the segment containing t; the final instant maps to the
        last segment (closed right endpoint)."""
        kv = self.knots
        if not (kv.t_start <= t <= kv.t_end):
            raise ValueError(f"t={t} outside [{kv.t_start}, {kv.t_end}]")
        idx = int(np.searchsorted(kv.knots, t, side="right")) - 1
        idx = min(max(idx, kv.degree), self.n_ctrl - 1)
        return idx - kv.degree

    def segment_weights(self, t: float) -> tuple[int, np.ndarray]:
        """Segment index s and the p+1 basis values weighting points s..s+p."""
        s = self.segment_of(t)
        p = self.degree
        tau = self.knots.knots
        i = p + s
        tt = (t - tau[i]) / (tau[i + 1] - tau[i])
        gamma = tt ** np.arange(p + 1)
        return s, gamma @ self.matrices[s]

    def basis_row(self, t: float) -> np.ndarray:
        """Basis values over all n+1 control points at time t."""
        s, w = self.segment_weights(t)
        row = np.zeros(self.n_ctrl)
        row[s:s + self.degree + 1] = w
        return row


@dataclass(frozen=True)
class ControlSpline:
    """A control-space B-spline: basis plus an (n+1) x dim_u control-point
    matrix. With clamped knots the signal starts at the first point and ends
    at the last one."""

    basis: SplineBasis
    control_points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        object.__setattr__(self, "control_points", _readonly(pts))
        if pts.shape[0] != self.basis.n_ctrl:
            raise ValueError(
                f"expected {self.basis.n_ctrl} control points, got {pts.shape[0]}")

    @property
    def dim_u(self) -> int:
        return self.control_points.shape[1]

    @property
    def horizon(self) -> tuple[float, float]:
        return self.basis.knots.t_start, self.basis.knots.t_end

    def eval(self, t: float) -> np.ndarray:
        kv = self.basis.knots
        # exact endpoint interpolation on clamped knots
        if t == kv.t_start:
            return self.control_points[0].copy()
        if t == kv.t_end:
            return self.control_points[-1].copy()
        s, w = self.basis.segment_weights(t)
        return w @ self.control_points[s:s + self.basis.degree + 1]

    def sample(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at many times, shape (len(ts), dim_u)."""
        ts = np.asarray(ts, dtype=float)
        kv = self.basis.knots
        p = self.basis.degree
        tau = kv.knots
        if ts.size and (ts.min() < kv.t_start or ts.max() > kv.t_end):
            raise ValueError("sample times outside the knot range")
        seg = np.searchsorted(tau, ts, side="right") - 1
        seg = np.clip(seg, p, self.basis.n_ctrl - 1) - p
        out = np.empty((ts.size, self.dim_u))
        for s in np.unique(seg):
            mask = seg == s
            i = p + s
            tt = (ts[mask] - tau[i]) / (tau[i + 1] - tau[i])
            gamma = tt[:, None] ** np.arange(p + 1)
            out[mask] = (gamma @ self.matrices_for(s)) @ \
                self.control_points[s:s + p + 1]
        return out

    def matrices_for(self, s: int) -> np.ndarray:
        return self.basis.matrices[s]


def eval_control(spline: ControlSpline, t: float) -> np.ndarray:
    """Control value u(t) of the spline; equals the Cox-de Boor weighted sum
    of the control points."""
    return spline.eval(t)
