"""Steady-state parameter sensitivities and the objective gradient along the manifold."""

import numpy as np

from . import numerics


def sensitivity_exact(model, theta, x, u):
    """Steady-state sensitivity S solving (d f/d x) S = -(d f/d theta).

    Intended for on-manifold points where the state Jacobian is invertible;
    raises SingularMatrixError otherwise (use sensitivity_hat then).
    """
    a = np.asarray(model.jac_x(theta, x, u), dtype=float)
    b = np.asarray(model.jac_theta(theta, x, u), dtype=float)
    return numerics.solve(a, -b)


def sensitivity_hat(model, theta, x, u):
    """Pseudoinverse sensitivity, valid off-manifold by construction.

    Coincides with sensitivity_exact wherever the state Jacobian is
    invertible.
    """
    a = np.asarray(model.jac_x(theta, x, u), dtype=float)
    b = np.asarray(model.jac_theta(theta, x, u), dtype=float)
    return -numerics.pinv(a) @ b


def manifold_gradient(model, objective, theta, states, conditions):
    """Total objective gradient d J/d theta along the steady-state manifold.

    Chain rule: explicit parameter gradient plus, per condition, the state
    gradient pulled back through the pseudoinverse sensitivity.
    """
    grad = np.asarray(objective.grad_theta(theta, states), dtype=float).copy()
    grads_x = objective.grad_x(theta, states)
    for x, cond, gx in zip(states, conditions, grads_x):
        s_hat = sensitivity_hat(model, theta, x, cond.u)
        grad += s_hat.T @ np.asarray(gx, dtype=float)
    return grad
