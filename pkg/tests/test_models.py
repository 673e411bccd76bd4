"""Benchmark problem tests: steady states, data generation, reduced objectives."""

import numpy as np
import pytest

from ssflow import numerics
from ssflow.core import validate_model
from ssflow.models import (
    ConversionReactionProblem,
    NgfErkProblem,
    conversion_reaction_model,
    generate_data,
    ngf_erk_model,
    reduced_objective_cr,
    reduced_objective_ngf,
)

NO_U = np.zeros(0)


class TestConversionReactionModel:
    def test_steady_state_at_prior_mean(self):
        model = conversion_reaction_model()
        x_s = model.analytic_steady_state(np.array([3.9, 1.5]), NO_U)
        assert abs(x_s[0] - 1.5 / 5.4) < 1e-14

    def test_no_forward_reaction(self):
        model = conversion_reaction_model(xi=1.0)
        x_s = model.analytic_steady_state(np.array([0.0, 2.0]), NO_U)
        assert x_s[0] == 1.0

    def test_equal_rates_half_conversion(self):
        model = conversion_reaction_model(xi=1.0)
        x_s = model.analytic_steady_state(np.array([1.7, 1.7]), NO_U)
        assert abs(x_s[0] - 0.5) < 1e-14

    def test_batch_matches_scalar(self):
        model = conversion_reaction_model()
        theta = np.array([2.5, 0.7])
        x_mat = np.array([[0.1], [0.6], [0.9]])
        u_mat = np.zeros((3, 0))
        f_b = model.f_batch(theta, x_mat, u_mat)
        jx_b = model.jac_x_batch(theta, x_mat, u_mat)
        jt_b = model.jac_theta_batch(theta, x_mat, u_mat)
        for i in range(3):
            assert np.allclose(f_b[i], model.f(theta, x_mat[i], NO_U))
            assert np.allclose(jx_b[i], model.jac_x(theta, x_mat[i], NO_U))
            assert np.allclose(jt_b[i], model.jac_theta(theta, x_mat[i], NO_U))

    def test_invalid_xi_rejected(self):
        with pytest.raises(ValueError):
            ConversionReactionProblem(xi=0.0)


class TestNgfErkModel:
    def test_steady_state_at_origin(self):
        model = ngf_erk_model()
        x_s = model.analytic_steady_state(np.zeros(6), np.array([1.0]))
        assert np.abs(x_s - np.array([0.5, 0.6])).max() < 1e-14

    def test_zero_dose_first_state_vanishes(self):
        model = ngf_erk_model()
        rng = np.random.default_rng(1)
        for _ in range(20):
            theta = rng.uniform(-3.0, 1.0, 6)
            x_s = model.analytic_steady_state(theta, np.array([0.0]))
            assert x_s[0] == 0.0

    def test_jac_x_lower_left_entry(self):
        model = ngf_erk_model()
        rng = np.random.default_rng(2)
        for _ in range(20):
            theta = rng.uniform(-2.0, 1.0, 6)
            x = rng.uniform(0.0, 3.0, 2)
            jx = model.jac_x(theta, x, np.array([1.0]))
            assert abs(jx[1, 0] - (10.0 ** theta[5] - x[1])) < 1e-12

    def test_batch_matches_scalar(self):
        model = ngf_erk_model()
        theta = np.array([-0.5, 0.2, -1.0, 0.3, -0.1, 0.4])
        x_mat = np.array([[0.1, 0.5], [1.2, 0.3], [2.0, 2.5]])
        u_mat = np.array([[0.0], [1.0], [50.0]])
        f_b = model.f_batch(theta, x_mat, u_mat)
        jx_b = model.jac_x_batch(theta, x_mat, u_mat)
        jt_b = model.jac_theta_batch(theta, x_mat, u_mat)
        for i in range(3):
            assert np.allclose(f_b[i], model.f(theta, x_mat[i], u_mat[i]))
            assert np.allclose(jx_b[i], model.jac_x(theta, x_mat[i], u_mat[i]))
            assert np.allclose(jt_b[i], model.jac_theta(theta, x_mat[i], u_mat[i]))

    def test_state_jacobian_stable_on_manifold(self):
        # both triangular Jacobians have strictly negative diagonals at any
        # analytic steady state, the stability premise of the method
        model = ngf_erk_model()
        cr = conversion_reaction_model()
        rng = np.random.default_rng(3)
        for _ in range(1000):
            theta = rng.uniform(-3.0, 1.0, 6)
            u = rng.uniform(0.0, 100.0, 1)
            x_s = model.analytic_steady_state(theta, u)
            assert np.all(np.diag(model.jac_x(theta, x_s, u)) < 0.0)
            theta_cr = rng.uniform(0.1, 8.0, 2)
            x_cr = cr.analytic_steady_state(theta_cr, NO_U)
            assert cr.jac_x(theta_cr, x_cr, NO_U)[0, 0] < 0.0

    @pytest.mark.parametrize("make_model", [conversion_reaction_model, ngf_erk_model])
    def test_validate_model_passes(self, make_model):
        assert validate_model(make_model(), n_samples=100, seed=0).ok(1e-6)

    def test_long_run_simulation_reaches_steady_state(self):
        # integrating dx/dt = f itself must reproduce the analytic map
        from ssflow.integrator import integrate_adaptive

        model = ngf_erk_model()
        rng = np.random.default_rng(4)
        for _ in range(5):
            theta = rng.uniform(-1.0, 1.0, 6)
            u = rng.uniform(0.1, 10.0, 1)
            x0 = rng.uniform(0.0, 3.0, 2)
            _, x_end, _, _ = integrate_adaptive(
                lambda t, x: model.f(theta, x, u),
                x0,
                1e4,
                rel_tol=1e-9,
                abs_tol=1e-12,
                stop=lambda x, dx: np.abs(dx).max() < 1e-10,
            )
            x_s = model.analytic_steady_state(theta, u)
            assert np.abs(x_end - x_s).max() < 1e-6


class TestNgfErkProblem:
    def test_requires_ten_inputs(self):
        with pytest.raises(ValueError):
            NgfErkProblem(inputs=(0.0, 1.0))

    def test_conditions_require_data(self):
        with pytest.raises(ValueError, match="data not set"):
            NgfErkProblem().conditions()

    def test_default_inputs(self):
        assert NgfErkProblem().inputs == (
            0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0,
        )


class TestGenerateData:
    def test_zero_noise_is_exact(self):
        prob = NgfErkProblem(noise_var=0.0)
        model = ngf_erk_model()
        data = generate_data(prob, seed=0)
        truth = [
            model.analytic_steady_state(np.zeros(6), np.array([u]))[1]
            for u in prob.inputs
        ]
        assert np.abs(np.asarray(data) - np.asarray(truth)).max() < 1e-15

    def test_same_seed_identical(self):
        prob = NgfErkProblem()
        a = generate_data(prob, seed=123)
        b = generate_data(prob, seed=123)
        assert np.array_equal(a, b)

    def test_noise_mean(self):
        # mean of (data - truth) over many regenerations: sd of the mean is
        # 0.1/sqrt(10*n); allow 3 sigma
        prob = NgfErkProblem()
        truth = np.asarray(generate_data(NgfErkProblem(noise_var=0.0), 0))
        n = 10_000
        total = 0.0
        for seed in range(n):
            total += float(np.sum(np.asarray(generate_data(prob, seed)) - truth))
        mean = total / (10 * n)
        assert abs(mean) < 3.0 * 0.1 / np.sqrt(10 * n)


class TestReducedObjectiveCr:
    def test_value_at_prior_mean(self):
        prob = ConversionReactionProblem()
        value, _ = reduced_objective_cr(np.array([3.9, 1.5]), prob)
        x_s = 1.5 / 5.4
        assert abs(value - 0.5 * 10.0 * (x_s - 0.2) ** 2) < 1e-14

    def test_consistent_data_optimum_at_prior_mean(self):
        theta_bar = np.array([3.9, 1.5])
        x_bar = 1.5 / 5.4
        prob = ConversionReactionProblem(x_bar=x_bar)
        value, grad = reduced_objective_cr(theta_bar, prob)
        assert abs(value) < 1e-14
        assert np.abs(grad).max() < 1e-14

    def test_non_negative(self):
        prob = ConversionReactionProblem()
        rng = np.random.default_rng(6)
        for _ in range(100):
            theta = rng.uniform(0.1, 8.0, 2)
            assert reduced_objective_cr(theta, prob)[0] >= 0.0

    def test_gradient_matches_finite_differences(self):
        prob = ConversionReactionProblem()
        rng = np.random.default_rng(7)
        for _ in range(20):
            theta = rng.uniform(0.1, 8.0, 2)
            _, grad = reduced_objective_cr(theta, prob)
            fd = numerics.finite_diff_jacobian(
                lambda t: np.array([reduced_objective_cr(t, prob)[0]]), theta
            )[0]
            assert np.abs(grad - fd).max() < 1e-6 * (1.0 + np.abs(fd).max())


class TestReducedObjectiveNgf:
    def test_zero_at_truth_with_zero_noise(self):
        prob = NgfErkProblem(noise_var=0.0).with_generated_data(0)
        value, grad = reduced_objective_ngf(np.zeros(6), prob)
        assert value < 1e-20
        assert np.abs(grad).max() < 1e-10

    def test_gradient_matches_finite_differences(self):
        prob = NgfErkProblem().with_generated_data(0)
        rng = np.random.default_rng(8)
        for _ in range(20):
            theta = rng.uniform(-3.0, 1.0, 6)
            _, grad = reduced_objective_ngf(theta, prob)
            fd = numerics.finite_diff_jacobian(
                lambda t: np.array([reduced_objective_ngf(t, prob)[0]]), theta
            )[0]
            assert np.abs(grad - fd).max() < 1e-6 * (1.0 + np.abs(fd).max())

    def test_non_negative(self):
        prob = NgfErkProblem().with_generated_data(0)
        rng = np.random.default_rng(9)
        for _ in range(100):
            theta = rng.uniform(-3.0, 1.0, 6)
            assert reduced_objective_ngf(theta, prob)[0] >= 0.0

    def test_overflowing_theta_reports_inf(self):
        prob = NgfErkProblem().with_generated_data(0)
        value, grad = reduced_objective_ngf(np.full(6, 400.0), prob)
        assert value == float("inf")
        assert np.all(grad == 0.0)
