"""Reference optimisers for the method comparison.

quasi_newton_unconstrained is a BFGS iteration with Armijo backtracking for
the analytically reduced problems; augmented_lagrangian_constrained solves
the equality-constrained formulation with a multiplier/penalty outer loop
around the same BFGS inner solver.
"""

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

ARMIJO_C = 1e-4
MAX_HALVINGS = 50
RHO_INIT = 10.0
RHO_GROWTH = 10.0
VIOLATION_SHRINK = 4.0


@dataclass
class BaselineResult:
    theta: np.ndarray
    states: Optional[list]
    objective: float
    constraint_violation: float
    iterations: int
    converged: bool
    wall_time: float
    n_evals: int = 0
    outer_iterations: int = 0


def quasi_newton_unconstrained(fun_grad, theta0, tol=1e-6, max_iter=1000):
    """BFGS with backtracking line search (Armijo c = 1e-4, halving).

    fun_grad maps theta to (value, gradient). Converged when the gradient
    inf-norm drops below tol.
    """
    t0 = time.perf_counter()
    x = np.asarray(theta0, dtype=float).copy()
    n = x.size
    n_evals = 0

    def fg(z):
        nonlocal n_evals
        n_evals += 1
        v, g = fun_grad(z)
        return float(v), np.asarray(g, dtype=float)

    def backtrack(p, slope, alpha=1.0):
        for _ in range(MAX_HALVINGS):
            f_try, g_try = fg(x + alpha * p)
            if np.isfinite(f_try) and f_try <= f + ARMIJO_C * alpha * slope:
                return alpha, f_try, g_try
            alpha *= 0.5
        return None, None, None

    f, g = fg(x)
    h_inv = np.eye(n)
    first_update = True
    converged = False
    k = 0
    while k < max_iter:
        if not np.all(np.isfinite(g)):
            break
        if np.abs(g).max() < tol:
            converged = True
            break
        p = -h_inv @ g
        slope = float(p @ g)
        if not np.isfinite(slope) or slope >= 0:
            h_inv = np.eye(n)
            first_update = True
            p = -g
            slope = float(p @ g)
        # before any curvature is known the direction is raw steepest
        # descent; start the search at a gradient-scaled step
        alpha0 = min(1.0, 1.0 / (1.0 + float(np.abs(g).sum()))) if first_update else 1.0
        alpha, f_new, g_new = backtrack(p, slope, alpha0)
        if alpha is None and not first_update:
            # stale curvature; retry once along steepest descent
            h_inv = np.eye(n)
            first_update = True
            p = -g
            slope = float(p @ g)
            alpha, f_new, g_new = backtrack(p, slope)
        if alpha is None:
            break
        s = alpha * p
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y) + 1e-300):
            if first_update:
                # scale the initial inverse Hessian to the observed curvature
                h_inv = (sy / float(y @ y)) * np.eye(n)
                first_update = False
            rho = 1.0 / sy
            hy = h_inv @ y
            h_inv = (
                h_inv
                - rho * (np.outer(s, hy) + np.outer(hy, s))
                + rho * (1.0 + rho * float(y @ hy)) * np.outer(s, s)
            )
        k += 1
    return BaselineResult(
        theta=x,
        states=None,
        objective=f,
        constraint_violation=0.0,
        iterations=k,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        n_evals=n_evals,
    )


def augmented_lagrangian_constrained(problem, init, tol=1e-6, max_outer=20):
    """Equality-constrained solver over the full (theta, states) vector.

    Outer loop: multiplier update mu += rho * f; penalty rho starts at 10
    and grows tenfold whenever the constraint violation fails to shrink by
    a factor of 4. Inner loop: BFGS on the augmented Lagrangian. Converged
    when the violation and the inner gradient are both below tol.
    """
    t0 = time.perf_counter()
    model = problem.model
    objective = problem.objective
    conditions = problem.conditions
    n_theta = model.n_theta
    n_x = model.n_x
    m = len(conditions)

    def unpack(z):
        theta = z[:n_theta]
        states = [z[n_theta + i * n_x : n_theta + (i + 1) * n_x] for i in range(m)]
        return theta, states

    def constraints(z):
        theta, states = unpack(z)
        return np.concatenate(
            [
                np.asarray(model.f(theta, x, c.u), dtype=float)
                for x, c in zip(states, conditions)
            ]
        )

    def make_auglag(mu, rho):
        def fun_grad(z):
            # extreme iterates can overflow the model rates; the resulting
            # non-finite value is rejected by the line search, so silence
            # the intermediate warnings
            with np.errstate(all="ignore"):
                return _eval(z)

        def _eval(z):
            theta, states = unpack(z)
            fvals = [
                np.asarray(model.f(theta, x, c.u), dtype=float)
                for x, c in zip(states, conditions)
            ]
            cvec = np.concatenate(fvals)
            if not np.all(np.isfinite(cvec)):
                return float("inf"), np.full(z.size, np.nan)
            value = (
                float(objective.eval(theta, states))
                + float(mu @ cvec)
                + 0.5 * rho * float(cvec @ cvec)
            )
            g_theta = np.asarray(objective.grad_theta(theta, states), dtype=float).copy()
            grads_x = objective.grad_x(theta, states)
            g_blocks = []
            for i, (x, c) in enumerate(zip(states, conditions)):
                w = mu[i * n_x : (i + 1) * n_x] + rho * fvals[i]
                jt = np.asarray(model.jac_theta(theta, x, c.u), dtype=float)
                jx = np.asarray(model.jac_x(theta, x, c.u), dtype=float)
                g_theta += jt.T @ w
                g_blocks.append(np.asarray(grads_x[i], dtype=float) + jx.T @ w)
            return value, np.concatenate([g_theta] + g_blocks)

        return fun_grad

    z = init.pack()
    mu = np.zeros(m * n_x)
    rho = RHO_INIT
    prev_violation = np.inf
    total_iters = 0
    total_evals = 0
    n_outer = 0
    converged = False
    for _ in range(max_outer):
        n_outer += 1
        inner = quasi_newton_unconstrained(
            make_auglag(mu, rho), z, tol=tol, max_iter=300
        )
        z = inner.theta
        total_iters += inner.iterations
        total_evals += inner.n_evals
        cvec = constraints(z)
        violation = float(np.abs(cvec).max()) if np.all(np.isfinite(cvec)) else np.inf
        if violation < tol and inner.converged:
            converged = True
            break
        mu = mu + rho * cvec
        if not (violation < prev_violation / VIOLATION_SHRINK):
            rho *= RHO_GROWTH
        prev_violation = violation

    theta, states = unpack(z)
    cvec = constraints(z)
    violation = float(np.abs(cvec).max()) if np.all(np.isfinite(cvec)) else np.inf
    return BaselineResult(
        theta=theta,
        states=[x.copy() for x in states],
        objective=float(objective.eval(theta, states)),
        constraint_violation=violation,
        iterations=total_iters,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        n_evals=total_evals,
        outer_iterations=n_outer,
    )
