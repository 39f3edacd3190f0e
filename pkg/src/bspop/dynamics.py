"""Control-affine vehicle models, convex control sets, obstacle fields, RK4
propagation, and the spline-lifted input gain."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .linop import kron
from .splinecore import SplineBasis

__all__ = [
    "ControlAffineModel",
    "Box",
    "Polytope",
    "ControlSet",
    "Circle",
    "ObstacleField",
    "unicycle",
    "ackermann",
    "diamond_wheel_set",
    "rk4_step",
    "lifted_gain",
    "STEERING_LIMIT",
]

# steering-angle bound imposed on the Ackermann model by the planners,
# keeping tan(phi) finite
STEERING_LIMIT = 0.4 * np.pi


@dataclass(frozen=True)
class ControlAffineModel:
    """System xdot = f(x) + g(x) u with fixed state/control dimensions.

    jac_x, when given, is the analytic Jacobian of f(x) + g(x) u with respect
    to x; otherwise a central finite difference is used.
    """

    name: str
    dim_x: int
    dim_u: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    jac_x: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def deriv(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.f(x) + self.g(x) @ u

    def jac(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.jac_x is not None:
            return self.jac_x(x, u)
        out = np.empty((self.dim_x, self.dim_x))
        for i in range(self.dim_x):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp = x.copy(); xp[i] += h
            xm = x.copy(); xm[i] -= h
            out[:, i] = (self.deriv(xp, u) - self.deriv(xm, u)) / (2 * h)
        return out


def unicycle() -> ControlAffineModel:
    """Unicycle: state (px, py, theta), control (v, omega)."""

    def g(x):
        c, s = np.cos(x[2]), np.sin(x[2])
        return np.array([[c, 0.0], [s, 0.0], [0.0, 1.0]])

    def jac(x, u):
        c, s = np.cos(x[2]), np.sin(x[2])
        v = u[0]
        return np.array([[0.0, 0.0, -v * s],
                         [0.0, 0.0, v * c],
                         [0.0, 0.0, 0.0]])

    return ControlAffineModel("unicycle", 3, 2, lambda x: np.zeros(3), g, jac)


def ackermann(wheelbase: float) -> ControlAffineModel:
    """Ackermann car: state (px, py, theta, phi), control (v, steering rate).

    tan(phi) is unbounded near |phi| = pi/2; planners bound the steering angle
    via STEERING_LIMIT.
    """
    if not wheelbase > 0:
        raise ValueError("wheelbase must be positive")
    length = float(wheelbase)

    def g(x):
        c, s = np.cos(x[2]), np.sin(x[2])
        return np.array([[c, 0.0], [s, 0.0],
                         [np.tan(x[3]) / length, 0.0], [0.0, 1.0]])

    def jac(x, u):
        c, s = np.cos(x[2]), np.sin(x[2])
        v = u[0]
        out = np.zeros((4, 4))
        out[0, 2] = -v * s
        out[1, 2] = v * c
        out[2, 3] = v / (length * np.cos(x[3]) ** 2)
        return out

    return ControlAffineModel("ackermann", 4, 2, lambda x: np.zeros(4), g, jac)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of admissible controls."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box must have lower < upper per channel")

    @property
    def dim(self) -> int:
        return self.lower.size

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows (A, b) with the set given by A u <= b."""
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.upper, -self.lower])

    def interior_point(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def violation(self, u: np.ndarray) -> float:
        return float(max(np.max(self.lower - u, initial=0.0),
                         np.max(u - self.upper, initial=0.0)))


@dataclass(frozen=True)
class Polytope:
    """Convex polytope A u <= b; must contain the origin or a supplied
    interior point strictly."""

    A: np.ndarray
    b: np.ndarray
    interior: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        bb = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", bb)
        if a.shape[0] != bb.size:
            raise ValueError("row count of A must match b")
        pt = np.zeros(a.shape[1]) if self.interior is None \
            else np.asarray(self.interior, dtype=float)
        if np.any(a @ pt >= bb):
            raise ValueError("interior point does not satisfy A u < b")
        object.__setattr__(self, "interior", pt)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        return self.A.copy(), self.b.copy()

    def interior_point(self) -> np.ndarray:
        return self.interior.copy()

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ u <= self.b + tol))

    def violation(self, u: np.ndarray) -> float:
        return float(np.max(self.A @ u - self.b, initial=0.0))


ControlSet = Union[Box, Polytope]


def saturate(cset: ControlSet, u: np.ndarray) -> np.ndarray:
    """Pull u into the set by scaling toward the set's interior point.

    Exact for convex sets: the returned point satisfies every halfspace.
    """
    if cset.contains(u, tol=0.0):
        return np.asarray(u, dtype=float)
    c = cset.interior_point()
    d = np.asarray(u, dtype=float) - c
    a, b = cset.halfspaces()
    ad = a @ d
    slack = b - a @ c
    alpha = 1.0
    for i in range(ad.size):
        if ad[i] > 1e-15:
            alpha = min(alpha, slack[i] / ad[i])
    return c + max(alpha, 0.0) * d


def diamond_wheel_set(r: float, d: float, omega_wheel_max: float) -> Polytope:
    """Differential-drive control polytope from per-wheel rate limits.

    Wheel radius r, wheel separation d, and symmetric wheel-rate limit give
    2*omega_min*r <= 2v +/- omega*d <= 2*omega_max*r, a diamond in (v, omega).
    """
    if min(r, d, omega_wheel_max) <= 0:
        raise ValueError("r, d and omega_wheel_max must be positive")
    lim = 2.0 * omega_wheel_max * r
    a = np.array([[2.0, d], [-2.0, -d], [2.0, -d], [-2.0, d]])
    b = np.full(4, lim)
    return Polytope(a, b)


@dataclass(frozen=True)
class Circle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")


@dataclass(frozen=True)
class ObstacleField:
    """Circular obstacles plus an optional axis-aligned position corridor.

    Clearance h_i(x) = ||pos - c_i||^2 - r_i^2 uses the position sub-vector
    (first two state components) only.
    """

    circles: tuple = ()
    corridor_lower: Optional[np.ndarray] = None
    corridor_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "circles", tuple(self.circles))
        for side in ("corridor_lower", "corridor_upper"):
            v = getattr(self, side)
            if v is not None:
                object.__setattr__(self, side, np.asarray(v, dtype=float))
        lo, hi = self.corridor_lower, self.corridor_upper
        if (lo is None) != (hi is None):
            raise ValueError("corridor needs both lower and upper bounds")
        if lo is not None and np.any(lo >= hi):
            raise ValueError("corridor lower bounds must be below upper bounds")

    @property
    def n_circles(self) -> int:
        return len(self.circles)

    def clearances(self, pos: np.ndarray) -> np.ndarray:
        """h_i >= 0 means clear of circle i."""
        return np.array([np.sum((pos[:2] - c.center) ** 2) - c.radius ** 2
                         for c in self.circles])

    def in_corridor(self, pos: np.ndarray, tol: float = 1e-9) -> bool:
        if self.corridor_lower is None:
            return True
        return bool(np.all(pos[:2] >= self.corridor_lower - tol)
                    and np.all(pos[:2] <= self.corridor_upper + tol))


def rk4_step(model: ControlAffineModel, x: np.ndarray,
             u_of_t: Callable[[float], np.ndarray],
             t: float, dt: float) -> np.ndarray:
    """Classical RK4 update sampling the control at t, t+dt/2 and t+dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u1 = u_of_t(t)
    u2 = u_of_t(t + 0.5 * dt)
    u4 = u_of_t(t + dt)
    k1 = model.deriv(x, u1)
    k2 = model.deriv(x + 0.5 * dt * k1, u2)
    k3 = model.deriv(x + 0.5 * dt * k2, u2)
    k4 = model.deriv(x + dt * k3, u4)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def lifted_gain(model: ControlAffineModel, basis: SplineBasis,
                x: np.ndarray, t: float) -> np.ndarray:
    """Input gain acting on the active segment's vectorized control points.

    Returns (GammaM) kron g(x) for the span containing t, shape
    dim_x x ((p+1) * dim_u), so that

        xdot = f(x) + lifted_gain(...) @ vec(Q_block^T)

    equals f(x) + g(x) u(t) for the spline through Q.
    """
    _, w = basis.segment_weights(t)
    return kron(w, model.g(x))
