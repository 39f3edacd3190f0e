"""Direct-transcription NLP container and a dense SQP solver.

The solver is sequential quadratic programming with an l1 merit line search:
each iteration solves a strictly convex QP (damped-BFGS Hessian model, kept
positive definite) over the linearized constraints, via a Mehrotra
predictor-corrector interior-point method. When the linearized inequalities
are inconsistent the QP is retried in elastic mode (l1-penalized slacks); a
restoration phase that stalls above the feasibility tolerance ends in the
"infeasible" status. Statuses are returned, never raised.

Problems here are small (at most a few hundred variables), so every matrix is
dense and every linear solve is a direct factorization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from threadpoolctl import threadpool_limits

__all__ = [
    "CONVERGED",
    "MAX_ITERATIONS",
    "INFEASIBLE",
    "SolverOptions",
    "NlpSolution",
    "NlpProblem",
    "count_variables",
    "solve",
    "finite_difference_check",
]

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible"

_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-6
    tol_eq: float = 1e-6
    tol_ineq: float = 1e-6
    max_iter: int = 200
    qp_max_iter: int = 60
    line_search_max: int = 40
    stall_limit: int = 5


@dataclass
class NlpSolution:
    status: str
    z: np.ndarray
    objective: float
    iterations: int
    solve_time: float
    kkt_residual: float
    max_eq_violation: float
    max_ineq_violation: float


class NlpProblem:
    """Decision vector split into named blocks, a smooth objective with
    analytic gradient, and optional equality / inequality constraint
    functions with analytic Jacobians.

    objective(z) -> (value, gradient)
    eq_fn(z)     -> (residual, jacobian)   target residual = 0
    ineq_fn(z)   -> (residual, jacobian)   target residual <= 0

    Shapes are validated once at construction against the initial guess;
    malformed problems raise ValueError immediately.
    """

    def __init__(self, blocks, objective, eq_fn=None, ineq_fn=None,
                 lower=None, upper=None, z0=None,
                 objective_hessian: Optional[np.ndarray] = None,
                 info: Optional[dict] = None):
        self.blocks = [(str(name), int(size)) for name, size in blocks]
        if any(size <= 0 for _, size in self.blocks):
            raise ValueError("block sizes must be positive")
        self.n_vars = sum(size for _, size in self.blocks)
        self.objective = objective
        self.eq_fn = eq_fn
        self.ineq_fn = ineq_fn
        self.lower = np.full(self.n_vars, -np.inf) if lower is None \
            else np.asarray(lower, dtype=float).copy()
        self.upper = np.full(self.n_vars, np.inf) if upper is None \
            else np.asarray(upper, dtype=float).copy()
        if self.lower.size != self.n_vars or self.upper.size != self.n_vars:
            raise ValueError("bound arrays must match the decision dimension")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds above upper bounds")
        self.z0 = np.zeros(self.n_vars) if z0 is None \
            else np.asarray(z0, dtype=float).copy()
        if self.z0.size != self.n_vars:
            raise ValueError("initial guess has the wrong dimension")
        self.objective_hessian = objective_hessian
        if objective_hessian is not None and \
                objective_hessian.shape != (self.n_vars, self.n_vars):
            raise ValueError("objective Hessian has the wrong shape")
        self.info = dict(info or {})

        f, grad = self.objective(self.z0)
        if np.ndim(f) != 0 or np.shape(grad) != (self.n_vars,):
            raise ValueError("objective must return (scalar, gradient)")
        self.n_eq = 0
        if eq_fn is not None:
            c, jac = eq_fn(self.z0)
            if jac.shape != (c.size, self.n_vars):
                raise ValueError("equality Jacobian shape mismatch")
            self.n_eq = c.size
        self.n_ineq = 0
        if ineq_fn is not None:
            c, jac = ineq_fn(self.z0)
            if jac.shape != (c.size, self.n_vars):
                raise ValueError("inequality Jacobian shape mismatch")
            self.n_ineq = c.size

    def block_slice(self, name: str) -> slice:
        start = 0
        for bname, size in self.blocks:
            if bname == name:
                return slice(start, start + size)
            start += size
        raise KeyError(name)

    def block_size(self, name: str) -> int:
        s = self.block_slice(name)
        return s.stop - s.start


def count_variables(problem: NlpProblem) -> tuple[int, int]:
    """(control decision variables, total decision variables).

    Both transcriptions name their control block "controls"; a problem
    without one counts zero control variables.
    """
    try:
        ctrl = problem.block_size("controls")
    except KeyError:
        ctrl = 0
    return ctrl, problem.n_vars


class _SchurSolver:
    """One factorization of the condensed KKT system, reused for the
    predictor and corrector solves: Cholesky of Hbar = H + C' W C, then a
    Schur complement over the equality rows."""

    def __init__(self, hbar, a_eq):
        self.a_eq = a_eq
        self.me = a_eq.shape[0]
        self.chol = cho_factor(hbar, lower=True)
        if self.me:
            hinv_at = cho_solve(self.chol, a_eq.T)
            schur = a_eq @ hinv_at + 1e-12 * np.eye(self.me)
            self.schur_chol = cho_factor(schur, lower=True)

    def solve(self, rhs_x, rhs_e):
        if not self.me:
            return cho_solve(self.chol, rhs_x), _EMPTY
        t = cho_solve(self.chol, rhs_x)
        dy = cho_solve(self.schur_chol, self.a_eq @ t - rhs_e)
        dx = cho_solve(self.chol, rhs_x - self.a_eq.T @ dy)
        return dx, dy


def _qp_solve(h, g, a_eq, b_eq, c_in, d_in, max_iter=60):
    """min 1/2 x'Hx + g'x  s.t.  A x = b, C x <= d  with H positive definite.

    Dense Mehrotra predictor-corrector interior point. Returns
    (x, y, lam, ok) where y are equality and lam >= 0 inequality multipliers.
    Divergence (an infeasible or unbounded subproblem) returns ok=False
    instead of warning or raising.
    """
    n = g.size
    me = a_eq.shape[0]
    mi = c_in.shape[0]

    if mi == 0:
        try:
            fact = _SchurSolver(h, a_eq)
            x, y = fact.solve(-g, b_eq)
        except (LinAlgError, np.linalg.LinAlgError):
            return np.zeros(n), np.zeros(me), _EMPTY, False
        ok = np.all(np.isfinite(x)) and \
            (me == 0 or np.max(np.abs(a_eq @ x - b_eq)) <=
             1e-7 * (1 + np.abs(b_eq).max()))
        return x, y, _EMPTY, bool(ok)

    x = np.zeros(n)
    y = np.zeros(me)
    s = np.maximum(d_in - c_in @ x, 1.0)
    lam = np.ones(mi)
    scale = 1.0 + max(np.abs(g).max(initial=0.0), np.abs(d_in).max(initial=0.0),
                      np.abs(b_eq).max(initial=0.0) if me else 0.0)

    for _ in range(max_iter):
        if s.min() < 1e-250 or lam.max() > 1e250:
            return x, y, lam, False
        r_d = h @ x + g + c_in.T @ lam + (a_eq.T @ y if me else 0.0)
        r_p = a_eq @ x - b_eq if me else _EMPTY
        r_c = c_in @ x + s - d_in
        mu = float(s @ lam) / mi
        if (np.abs(r_d).max() <= 1e-9 * scale
                and (me == 0 or np.abs(r_p).max() <= 1e-9 * scale)
                and np.abs(r_c).max() <= 1e-9 * scale
                and mu <= 1e-10 * scale):
            return x, y, lam, True

        w = lam / s
        hbar = h + c_in.T @ (w[:, None] * c_in)
        try:
            fact = _SchurSolver(hbar, a_eq)
        except (LinAlgError, np.linalg.LinAlgError):
            try:
                fact = _SchurSolver(hbar + 1e-8 * scale * np.eye(n), a_eq)
            except (LinAlgError, np.linalg.LinAlgError):
                return x, y, lam, False

        def newton(r_sz):
            rhs_x = -r_d - c_in.T @ ((lam * r_c - r_sz) / s)
            dx, dy = fact.solve(rhs_x, -r_p if me else _EMPTY)
            ds = -r_c - c_in @ dx
            dlam = (lam * (r_c + c_in @ dx) - r_sz) / s
            return dx, dy, ds, dlam

        # affine predictor
        dx_a, dy_a, ds_a, dlam_a = newton(s * lam)
        alpha_p = _max_step(s, ds_a)
        alpha_d = _max_step(lam, dlam_a)
        mu_aff = float((s + alpha_p * ds_a) @ (lam + alpha_d * dlam_a)) / mi
        sigma = min(max((mu_aff / mu) ** 3 if mu > 0 else 0.0, 0.0), 1.0)

        # corrector
        dx, dy, ds, dlam = newton(s * lam - sigma * mu + ds_a * dlam_a)
        alpha = 0.995 * min(_max_step(s, ds), _max_step(lam, dlam))
        alpha = min(alpha, 1.0)
        x = x + alpha * dx
        if me:
            y = y + alpha * dy
        s = s + alpha * ds
        lam = lam + alpha * dlam
        if not (np.all(np.isfinite(x)) and np.all(s > 0) and np.all(lam > 0)):
            return x, y, lam, False

    r_p_norm = np.abs(a_eq @ x - b_eq).max() if me else 0.0
    r_c_norm = np.max(c_in @ x - d_in, initial=0.0)
    ok = r_p_norm <= 1e-7 * scale and r_c_norm <= 1e-7 * scale
    return x, y, lam, bool(ok)


def _max_step(v, dv):
    """Largest alpha in (0, 1] with v + alpha dv >= 0."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _qp_elastic(h, g, a_eq, b_eq, c_in, d_in, rho, max_iter=60):
    """Inequality-elastic QP: slacks e >= 0 relax C x - e <= d with an
    l1 penalty rho. The equality rows stay exact (they are always
    consistent for the transcriptions used here)."""
    n = g.size
    mi = c_in.shape[0]
    h2 = np.zeros((n + mi, n + mi))
    h2[:n, :n] = h
    h2[n:, n:] = 1e-8 * np.eye(mi)
    g2 = np.concatenate([g, np.full(mi, rho)])
    a2 = np.hstack([a_eq, np.zeros((a_eq.shape[0], mi))]) if a_eq.shape[0] \
        else np.zeros((0, n + mi))
    c2 = np.vstack([
        np.hstack([c_in, -np.eye(mi)]),
        np.hstack([np.zeros((mi, n)), -np.eye(mi)]),
    ])
    d2 = np.concatenate([d_in, np.zeros(mi)])
    w, y, lam, ok = _qp_solve(h2, g2, a2, b_eq, c2, d2, max_iter)
    return w[:n], y, lam[:mi] if lam.size else _EMPTY, ok


def solve(problem: NlpProblem, warm_start: Optional[np.ndarray] = None,
          opts: Optional[SolverOptions] = None) -> NlpSolution:
    """Run the SQP loop. Returns a status, never raises on numerical failure.

    BLAS threading is capped at one thread for the duration of the solve;
    the matrices here are far too small to gain from threaded kernels, and
    oversubscription against process-level parallelism hurts badly.
    """
    with threadpool_limits(limits=1):
        return _solve_sqp(problem, warm_start, opts)


def _solve_sqp(problem: NlpProblem, warm_start: Optional[np.ndarray],
               opts: Optional[SolverOptions]) -> NlpSolution:
    opts = opts or SolverOptions()
    t_start = time.perf_counter()

    n = problem.n_vars
    z = problem.z0.copy() if warm_start is None \
        else np.asarray(warm_start, dtype=float).copy()
    z = np.clip(z, problem.lower, problem.upper)

    # finite variable bounds become constant inequality rows
    idx_lo = np.where(np.isfinite(problem.lower))[0]
    idx_hi = np.where(np.isfinite(problem.upper))[0]
    nb = idx_lo.size + idx_hi.size
    j_bounds = np.zeros((nb, n))
    for r, i in enumerate(idx_hi):
        j_bounds[r, i] = 1.0
    for r, i in enumerate(idx_lo):
        j_bounds[idx_hi.size + r, i] = -1.0
    rhs_bounds = np.concatenate([problem.upper[idx_hi], -problem.lower[idx_lo]])

    def eval_all(zv):
        f, grad = problem.objective(zv)
        ce, je = (problem.eq_fn(zv) if problem.eq_fn is not None
                  else (_EMPTY, np.zeros((0, n))))
        ci, ji = (problem.ineq_fn(zv) if problem.ineq_fn is not None
                  else (_EMPTY, np.zeros((0, n))))
        if nb:
            cb = np.concatenate([zv[idx_hi], -zv[idx_lo]]) - rhs_bounds
            ci = np.concatenate([ci, cb])
            ji = np.vstack([ji, j_bounds])
        return float(f), grad, ce, je, ci, ji

    def violation(ce, ci):
        v_eq = float(np.abs(ce).max()) if ce.size else 0.0
        v_in = float(np.max(ci, initial=0.0))
        return v_eq, v_in

    if problem.objective_hessian is not None:
        b_mat = problem.objective_hessian + 1e-6 * np.eye(n)
    else:
        b_mat = np.eye(n)

    f, grad, ce, je, ci, ji = eval_all(z)
    mu_pen = 1.0
    stall = 0
    status = MAX_ITERATIONS
    kkt_res = np.inf
    iterations = 0

    for iterations in range(1, opts.max_iter + 1):
        d, y, lam, ok = _qp_solve(b_mat, grad, je, -ce, ji, -ci,
                                  opts.qp_max_iter)
        if not ok:
            rho = 1e3 * (1.0 + mu_pen + float(np.abs(grad).max(initial=0.0)))
            d, y, lam, ok = _qp_elastic(b_mat, grad, je, -ce, ji, -ci, rho,
                                        opts.qp_max_iter)
            if not ok:
                v_eq, v_in = violation(ce, ci)
                status = INFEASIBLE if max(v_eq, v_in) > \
                    max(opts.tol_eq, opts.tol_ineq) else MAX_ITERATIONS
                break

        stat = grad.copy()
        if je.shape[0]:
            stat += je.T @ y
        if lam.size:
            stat += ji.T @ lam
        comp = float(np.abs(lam * ci).max()) if lam.size else 0.0
        v_eq, v_in = violation(ce, ci)
        kkt_res = max(float(np.abs(stat).max()), comp)
        # stationarity scales with the multipliers (feasibility stays absolute)
        kkt_scale = 1.0 + max(np.abs(y).max(initial=0.0),
                              np.abs(lam).max(initial=0.0))
        if kkt_res <= opts.tol_kkt * kkt_scale and v_eq <= opts.tol_eq \
                and v_in <= opts.tol_ineq:
            status = CONVERGED
            break

        mults = max(np.abs(y).max(initial=0.0), np.abs(lam).max(initial=0.0))
        mu_pen = max(mu_pen, 1.1 * mults + 1e-2)

        v0 = (np.abs(ce).sum() if ce.size else 0.0) + \
            np.maximum(ci, 0.0).sum()
        phi0 = f + mu_pen * v0
        descent = float(grad @ d) - mu_pen * v0

        alpha = 1.0
        accepted = False
        best = None
        for _ in range(opts.line_search_max):
            z_t = z + alpha * d
            f_t, grad_t, ce_t, je_t, ci_t, ji_t = eval_all(z_t)
            v_t = (np.abs(ce_t).sum() if ce_t.size else 0.0) + \
                np.maximum(ci_t, 0.0).sum()
            phi_t = f_t + mu_pen * v_t
            if phi_t <= phi0 + 1e-4 * alpha * min(descent, 0.0):
                accepted = True
                break
            if best is None or phi_t < best[0]:
                best = (phi_t, z_t, f_t, grad_t, ce_t, je_t, ci_t, ji_t)
            alpha *= 0.5
        if not accepted and best is not None \
                and best[0] < phi0 - 1e-10 * (1.0 + abs(phi0)):
            accepted = True
            _, z_t, f_t, grad_t, ce_t, je_t, ci_t, ji_t = best

        if not accepted:
            stall += 1
            if stall >= opts.stall_limit:
                status = INFEASIBLE if max(v_eq, v_in) > \
                    max(opts.tol_eq, opts.tol_ineq) else MAX_ITERATIONS
                break
            # shrink the Hessian model toward identity and retry
            b_mat = 0.5 * (b_mat + np.eye(n))
            continue
        stall = 0

        # damped BFGS on the Lagrangian gradient
        s_vec = z_t - z
        grad_l_new = grad_t.copy()
        grad_l_old = grad.copy()
        if je.shape[0]:
            grad_l_new += je_t.T @ y
            grad_l_old += je.T @ y
        if lam.size:
            grad_l_new += ji_t.T @ lam
            grad_l_old += ji.T @ lam
        y_vec = grad_l_new - grad_l_old
        sbs = float(s_vec @ b_mat @ s_vec)
        if sbs > 1e-16:
            sy = float(s_vec @ y_vec)
            if sy < 0.2 * sbs:
                theta = 0.8 * sbs / (sbs - sy)
                y_vec = theta * y_vec + (1 - theta) * (b_mat @ s_vec)
                sy = float(s_vec @ y_vec)
            if sy > 1e-12:
                bs = b_mat @ s_vec
                b_mat = b_mat - np.outer(bs, bs) / sbs + \
                    np.outer(y_vec, y_vec) / sy

        z, f, grad, ce, je, ci, ji = z_t, f_t, grad_t, ce_t, je_t, ci_t, ji_t

    v_eq, v_in = violation(ce, ci)
    return NlpSolution(
        status=status,
        z=z,
        objective=f,
        iterations=iterations,
        solve_time=time.perf_counter() - t_start,
        kkt_residual=float(kkt_res),
        max_eq_violation=v_eq,
        max_ineq_violation=v_in,
    )


def finite_difference_check(problem: NlpProblem, z: np.ndarray) -> float:
    """Max relative discrepancy between analytic and central-difference
    derivatives of the objective and all constraint functions."""
    z = np.asarray(z, dtype=float)
    n = z.size
    worst = 0.0

    def vec_views(zv):
        out = [np.atleast_1d(problem.objective(zv)[0])]
        if problem.eq_fn is not None:
            out.append(problem.eq_fn(zv)[0])
        if problem.ineq_fn is not None:
            out.append(problem.ineq_fn(zv)[0])
        return np.concatenate(out)

    analytic = [problem.objective(z)[1][None, :]]
    if problem.eq_fn is not None:
        analytic.append(problem.eq_fn(z)[1])
    if problem.ineq_fn is not None:
        analytic.append(problem.ineq_fn(z)[1])
    jac = np.vstack(analytic)

    for i in range(n):
        h = 1e-6 * max(1.0, abs(z[i]))
        zp = z.copy(); zp[i] += h
        zm = z.copy(); zm[i] -= h
        fd = (vec_views(zp) - vec_views(zm)) / (2 * h)
        col = jac[:, i]
        denom = np.maximum(1.0, np.maximum(np.abs(col), np.abs(fd)))
        worst = max(worst, float(np.max(np.abs(col - fd) / denom)))
    return worst
