"""Benchmark problems: a conversion reaction and NGF-induced Erk activation.

Both come as ModelSpec/ObjectiveSpec bundles with analytic steady states,
analytically reduced unconstrained objectives, and (for the Erk problem)
seeded synthetic data generation.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import numerics
from .core import Condition, FlowConfig, ModelSpec, ObjectiveSpec
from .flow import FlowProblem
from .sensitivity import sensitivity_exact

_LN10 = math.log(10.0)


# --------------------------------------------------------------------------
# Example 1: conversion reaction A <-> B
# --------------------------------------------------------------------------

def conversion_reaction_model(xi=1.0):
    """dx/dt = theta_2 * xi - (theta_1 + theta_2) * x, steady state
    x_s = theta_2 * xi / (theta_1 + theta_2)."""

    def f(theta, x, u):
        return np.array([theta[1] * xi - (theta[0] + theta[1]) * x[0]])

    def jac_x(theta, x, u):
        return np.array([[-(theta[0] + theta[1])]])

    def jac_theta(theta, x, u):
        return np.array([[-x[0], xi - x[0]]])

    def steady_state(theta, u):
        return np.array([theta[1] * xi / (theta[0] + theta[1])])

    def f_batch(theta, x_mat, u_mat):
        return theta[1] * xi - (theta[0] + theta[1]) * x_mat

    def jac_x_batch(theta, x_mat, u_mat):
        m = x_mat.shape[0]
        return np.full((m, 1, 1), -(theta[0] + theta[1]))

    def jac_theta_batch(theta, x_mat, u_mat):
        m = x_mat.shape[0]
        out = np.empty((m, 1, 2))
        out[:, 0, 0] = -x_mat[:, 0]
        out[:, 0, 1] = xi - x_mat[:, 0]
        return out

    return ModelSpec(
        n_x=1,
        n_theta=2,
        n_u=0,
        f=f,
        jac_x=jac_x,
        jac_theta=jac_theta,
        analytic_steady_state=steady_state,
        name="conversion_reaction",
        f_batch=f_batch,
        jac_x_batch=jac_x_batch,
        jac_theta_batch=jac_theta_batch,
    )


@dataclass(frozen=True)
class ConversionReactionProblem:
    """Weighted least squares fit of one observed steady state with a
    Gaussian prior on both rate parameters."""

    xi: float = 1.0
    x_bar: float = 0.2
    theta_bar: tuple = (3.9, 1.5)
    weight: float = 10.0

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError("total concentration xi must be positive")

    def model(self):
        return conversion_reaction_model(self.xi)

    def conditions(self):
        return [Condition(u=np.zeros(0), data=np.array([self.x_bar]), id="steady")]

    def objective(self):
        x_bar = self.x_bar
        theta_bar = np.asarray(self.theta_bar, dtype=float)
        w = self.weight

        def evaluate(theta, states):
            x = states[0][0]
            return 0.5 * w * (x - x_bar) ** 2 + 0.5 * float(
                np.sum((theta - theta_bar) ** 2)
            )

        def grad_theta(theta, states):
            return theta - theta_bar

        def grad_x(theta, states):
            return [np.array([w * (states[0][0] - x_bar)])]

        return ObjectiveSpec(eval=evaluate, grad_theta=grad_theta, grad_x=grad_x)

    def flow_problem(self, config: FlowConfig):
        return FlowProblem(
            model=self.model(),
            objective=self.objective(),
            conditions=self.conditions(),
            config=config,
        )


def reduced_objective_cr(theta, problem: ConversionReactionProblem):
    """Unconstrained objective through the analytic steady state; returns
    (value, gradient)."""
    theta = np.asarray(theta, dtype=float)
    theta_bar = np.asarray(problem.theta_bar, dtype=float)
    total = theta[0] + theta[1]
    x_s = theta[1] * problem.xi / total
    res = x_s - problem.x_bar
    # closed-form steady-state sensitivities
    s = np.array([-x_s / total, (problem.xi - x_s) / total])
    value = 0.5 * problem.weight * res**2 + 0.5 * float(
        np.sum((theta - theta_bar) ** 2)
    )
    grad = problem.weight * res * s + (theta - theta_bar)
    return value, grad


# --------------------------------------------------------------------------
# Example 2: NGF-induced Erk activation
# --------------------------------------------------------------------------

def ngf_erk_model():
    """Two-state dose-response model; parameters are base-10 exponents of
    the effective rates."""

    def f(theta, x, u):
        p = np.power(10.0, theta)
        return np.array(
            [
                p[0] * u[0] * (p[4] - x[0]) - p[1] * x[0],
                (x[0] + p[2]) * (p[5] - x[1]) - p[3] * x[1],
            ]
        )

    def jac_x(theta, x, u):
        p = np.power(10.0, theta)
        return np.array(
            [
                [-(p[0] * u[0] + p[1]), 0.0],
                [p[5] - x[1], -(x[0] + p[2] + p[3])],
            ]
        )

    def jac_theta(theta, x, u):
        p = np.power(10.0, theta)
        out = np.zeros((2, 6))
        out[0, 0] = _LN10 * p[0] * u[0] * (p[4] - x[0])
        out[0, 1] = -_LN10 * p[1] * x[0]
        out[0, 4] = _LN10 * p[0] * u[0] * p[4]
        out[1, 2] = _LN10 * p[2] * (p[5] - x[1])
        out[1, 3] = -_LN10 * p[3] * x[1]
        out[1, 5] = _LN10 * p[5] * (x[0] + p[2])
        return out

    def steady_state(theta, u):
        p = np.power(10.0, theta)
        x1 = p[0] * p[4] * u[0] / (p[0] * u[0] + p[1])
        x2 = p[5] * (x1 + p[2]) / (x1 + p[2] + p[3])
        return np.array([x1, x2])

    def f_batch(theta, x_mat, u_mat):
        p = np.power(10.0, theta)
        u = u_mat[:, 0]
        x1 = x_mat[:, 0]
        x2 = x_mat[:, 1]
        out = np.empty_like(x_mat)
        out[:, 0] = p[0] * u * (p[4] - x1) - p[1] * x1
        out[:, 1] = (x1 + p[2]) * (p[5] - x2) - p[3] * x2
        return out

    def jac_x_batch(theta, x_mat, u_mat):
        p = np.power(10.0, theta)
        m = x_mat.shape[0]
        out = np.zeros((m, 2, 2))
        out[:, 0, 0] = -(p[0] * u_mat[:, 0] + p[1])
        out[:, 1, 0] = p[5] - x_mat[:, 1]
        out[:, 1, 1] = -(x_mat[:, 0] + p[2] + p[3])
        return out

    def jac_theta_batch(theta, x_mat, u_mat):
        p = np.power(10.0, theta)
        m = x_mat.shape[0]
        u = u_mat[:, 0]
        x1 = x_mat[:, 0]
        x2 = x_mat[:, 1]
        out = np.zeros((m, 2, 6))
        out[:, 0, 0] = _LN10 * p[0] * u * (p[4] - x1)
        out[:, 0, 1] = -_LN10 * p[1] * x1
        out[:, 0, 4] = _LN10 * p[0] * u * p[4]
        out[:, 1, 2] = _LN10 * p[2] * (p[5] - x2)
        out[:, 1, 3] = -_LN10 * p[3] * x2
        out[:, 1, 5] = _LN10 * p[5] * (x1 + p[2])
        return out

    return ModelSpec(
        n_x=2,
        n_theta=6,
        n_u=1,
        f=f,
        jac_x=jac_x,
        jac_theta=jac_theta,
        analytic_steady_state=steady_state,
        name="ngf_erk",
        f_batch=f_batch,
        jac_x_batch=jac_x_batch,
        jac_theta_batch=jac_theta_batch,
    )


DEFAULT_NGF_INPUTS = (0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0)


@dataclass(frozen=True)
class NgfErkProblem:
    """Least squares fit of stationary Erk activity across ten NGF doses.

    ``data`` holds the observed second state per dose; ``theta_true`` is
    used only for synthetic data generation.
    """

    inputs: tuple = DEFAULT_NGF_INPUTS
    data: Optional[tuple] = None
    noise_var: float = 0.01
    theta_true: tuple = (0.0,) * 6
    data_seed: Optional[int] = None

    def __post_init__(self):
        if len(self.inputs) != 10:
            raise ValueError("the dose-response protocol uses 10 inputs")
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")
        if self.data is not None and len(self.data) != len(self.inputs):
            raise ValueError("one datum per input is required")

    def model(self):
        return ngf_erk_model()

    def with_generated_data(self, seed):
        return replace(
            self, data=tuple(generate_data(self, seed)), data_seed=seed
        )

    def conditions(self):
        if self.data is None:
            raise ValueError("data not set; call with_generated_data or supply data")
        model = self.model()
        conds = []
        for i, (u, d) in enumerate(zip(self.inputs, self.data)):
            conds.append(Condition(u=np.array([u]), data=np.array([d]), id=f"dose{i}"))
        return conds

    def objective(self):
        if self.data is None:
            raise ValueError("data not set; call with_generated_data or supply data")
        data = np.asarray(self.data, dtype=float)

        def evaluate(theta, states):
            res = np.array([x[1] for x in states]) - data
            return 0.5 * float(np.sum(res**2))

        def grad_theta(theta, states):
            return np.zeros(6)

        def grad_x(theta, states):
            return [
                np.array([0.0, states[i][1] - data[i]]) for i in range(len(states))
            ]

        return ObjectiveSpec(eval=evaluate, grad_theta=grad_theta, grad_x=grad_x)

    def flow_problem(self, config: FlowConfig):
        return FlowProblem(
            model=self.model(),
            objective=self.objective(),
            conditions=self.conditions(),
            config=config,
        )


def generate_data(problem: NgfErkProblem, seed):
    """Synthetic stationary Erk measurements: analytic steady state at
    theta_true plus Gaussian noise.

    The generator is numpy's PCG64 (default_rng), fixed so a seed
    reproduces the same data on any platform.
    """
    model = ngf_erk_model()
    theta = np.asarray(problem.theta_true, dtype=float)
    truth = np.array(
        [
            model.analytic_steady_state(theta, np.array([u]))[1]
            for u in problem.inputs
        ]
    )
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(problem.noise_var), len(problem.inputs))
    return truth + noise


def reduced_objective_ngf(theta, problem: NgfErkProblem):
    """Unconstrained objective through the analytic steady state; returns
    (value, gradient). The gradient is assembled from the exact steady-state
    sensitivities per dose."""
    if problem.data is None:
        raise ValueError("data not set; call with_generated_data or supply data")
    model = ngf_erk_model()
    theta = np.asarray(theta, dtype=float)
    data = np.asarray(problem.data, dtype=float)
    value = 0.0
    grad = np.zeros(6)
    # extreme theta (e.g. during a line search) can overflow 10**theta;
    # report +inf so callers treat the point as unacceptable
    with np.errstate(all="ignore"):
        for u_scalar, d in zip(problem.inputs, data):
            u = np.array([u_scalar])
            x_s = model.analytic_steady_state(theta, u)
            if not np.all(np.isfinite(x_s)):
                return float("inf"), np.zeros(6)
            try:
                s = sensitivity_exact(model, theta, x_s, u)
            except (numerics.SingularMatrixError, numerics.NumericalFailure):
                return float("inf"), np.zeros(6)
            res = x_s[1] - d
            value += 0.5 * res**2
            grad += res * s[1]
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        return float("inf"), np.zeros(6)
    return value, grad
