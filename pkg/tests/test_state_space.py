"""Kalman filter / RTS smoother against dense GP formulas."""

import time

import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm, solve_continuous_lyapunov

from utils.benchmark_functions import oscillating_1d
from utils.dense_gp import GpModel, gp_log_likelihood, gp_predict
from utils.errors import DomainError, PreconditionError
from utils.kernels import build_correlation
from utils.schemas import KernelSpec
from utils.state_space import (
    StateSpaceGP, build_state_space, fit_parameters, joint_precision, kalman_filter, kalman_log_likelihood,
    profile_log_likelihood, rate, rts_smoother, stationary_covariance, transition_matrices,
)


def _drift_and_diffusion(gamma, variance, nu):
    """Companion-form SDE matrices and the white-noise spectral density."""
    lam = rate(gamma, nu)
    if nu == 0.5:
        return np.array([[-lam]]), np.array([[1.0]]), 2.0 * variance * lam
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-lam ** 3, -3 * lam ** 2, -3 * lam]])
    return A, np.array([[0.0], [0.0], [1.0]]), 16.0 / 3.0 * variance * lam ** 5


def _data(n=40, seed=0, noise_sd=0.1):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.5, 2.5, n))
    return x, oscillating_1d(x) + noise_sd * rng.standard_normal(n)


def _dense(x, y, gamma, variance, nu, nugget):
    spec = KernelSpec(nu=nu, gamma=(gamma,), variance=variance, nugget=nugget)
    return GpModel(spec, x, y, zero_mean=True, estimate_variance=False)


class TestTransitionMatrices:

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    @pytest.mark.parametrize("gamma", [0.3, 1.0, 4.0])
    def test_transition_matches_matrix_exponential(self, nu, gamma):
        A, _, _ = _drift_and_diffusion(gamma, 1.0, nu)
        gaps = np.array([0.0, 1e-3, 0.07, 0.5, 2.0])
        G, _ = transition_matrices(gaps, gamma, 1.0, nu)
        for t, d in enumerate(gaps):
            np.testing.assert_allclose(G[t], expm(A * d), rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    @pytest.mark.parametrize("seed", range(100))
    def test_innovation_matches_quadrature(self, nu, seed):
        rng = np.random.default_rng(seed)
        gamma, variance, d = np.exp(rng.uniform(np.log([0.2, 0.2, 1e-2]), np.log([5.0, 5.0, 3.0])))
        A, Lc, q = _drift_and_diffusion(gamma, variance, nu)
        integral, _ = quad_vec(lambda s: expm(A * s) @ (q * Lc @ Lc.T) @ expm(A * s).T, 0.0, d,
                               epsabs=1e-13, epsrel=1e-11)
        _, W = transition_matrices([d], gamma, variance, nu)
        scale = np.max(np.abs(integral))
        np.testing.assert_allclose(W[0], integral, rtol=1e-7, atol=1e-9 * scale)

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    def test_stationary_covariance_solves_lyapunov(self, nu):
        A, Lc, q = _drift_and_diffusion(0.8, 2.0, nu)
        W1 = solve_continuous_lyapunov(A, -q * Lc @ Lc.T)
        np.testing.assert_allclose(stationary_covariance(0.8, 2.0, nu), W1, rtol=1e-10, atol=1e-12)

    def test_innovation_identity(self):
        W1 = stationary_covariance(0.6, 1.3, 2.5)
        G, W = transition_matrices([0.05, 0.4, 3.0], 0.6, 1.3, 2.5)
        for t in range(3):
            np.testing.assert_allclose(W[t], W1 - G[t] @ W1 @ G[t].T, atol=1e-12 * np.abs(W1).max())

    def test_innovation_is_symmetric_psd(self):
        _, W = transition_matrices(np.linspace(1e-3, 3.0, 25), 0.5, 1.0, 2.5)
        np.testing.assert_array_equal(W, W.transpose(0, 2, 1))
        for block in W:
            assert np.linalg.eigvalsh(block).min() > -1e-12 * np.abs(block).max()

    def test_unsupported_roughness(self):
        with pytest.raises(DomainError):
            build_state_space(np.array([0.0, 1.0]), 1.0, 1.0, 1.5)


class TestFilterAgainstDense:

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    def test_log_likelihood(self, nu):
        x, y = _data()
        dense = gp_log_likelihood(_dense(x, y, 0.5, 1.0, nu, 1e-2), variance=1.0)
        fast = kalman_log_likelihood(build_state_space(x, 0.5, 1.0, nu), y, 1e-2)
        assert fast == pytest.approx(dense, rel=1e-9, abs=1e-8)

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    def test_predictions_between_and_beyond_inputs(self, nu):
        x, y = _data()
        x_star = np.concatenate([np.linspace(0.0, 3.0, 61), x[::7]])
        gp = StateSpaceGP(x, y, 0.5, 1.3, nu, 1.3e-2)
        fast = gp.predict(x_star)
        dense = gp_predict(_dense(x, y, 0.5, 1.3, nu, 1e-2), x_star)
        np.testing.assert_allclose(fast.mean, dense.mean, atol=1e-8)
        np.testing.assert_allclose(fast.variance, dense.variance, atol=1e-8)
        assert fast.df is None

    def test_noisy_predictive_adds_noise_variance(self):
        x, y = _data()
        gp = StateSpaceGP(x, y, 0.5, 1.0, 2.5, 1e-2)
        latent = gp.predict(np.array([1.234]))
        noisy = gp.predict(np.array([1.234]), noisy=True)
        assert noisy.variance[0] - latent.variance[0] == pytest.approx(1e-2, rel=1e-10)

    def test_unsorted_inputs_are_sorted_by_the_wrapper(self):
        x, y = _data()
        perm = np.random.default_rng(5).permutation(x.size)
        a = StateSpaceGP(x, y, 0.5, 1.0, 2.5, 1e-2).predict(np.array([0.9, 1.7]))
        b = StateSpaceGP(x[perm], y[perm], 0.5, 1.0, 2.5, 1e-2).predict(np.array([0.9, 1.7]))
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)

    def test_repeated_inputs_match_dense(self):
        x = np.array([0.1, 0.4, 0.4, 0.4, 0.9, 1.3, 1.3])
        y = np.array([0.2, 1.0, 0.8, 1.1, -0.3, 0.5, 0.4])
        gp = StateSpaceGP(x, y, 0.7, 1.0, 2.5, 0.05)
        dense_model = _dense(x, y, 0.7, 1.0, 2.5, 0.05)
        x_star = np.array([0.0, 0.4, 0.6, 1.3, 2.0])
        np.testing.assert_allclose(gp.predict(x_star).mean, gp_predict(dense_model, x_star).mean, atol=1e-9)
        assert gp.log_likelihood() == pytest.approx(gp_log_likelihood(dense_model, variance=1.0), rel=1e-9)

    def test_single_observation(self):
        gp = StateSpaceGP(np.array([0.3]), np.array([0.8]), 1.0, 2.0, 2.5, 0.5)
        assert gp.log_likelihood() == pytest.approx(-0.5 * np.log(2 * np.pi * 2.5) - 0.5 * 0.64 / 2.5, rel=1e-12)
        pred = gp.predict(np.array([0.3]))
        assert pred.mean[0] == pytest.approx(2.0 / 2.5 * 0.8, rel=1e-12)

    def test_translation_invariance(self):
        x, y = _data()
        a = StateSpaceGP(x, y, 0.5, 1.0, 2.5, 1e-2)
        b = StateSpaceGP(x + 10.0, y, 0.5, 1.0, 2.5, 1e-2)
        assert a.log_likelihood() == pytest.approx(b.log_likelihood(), rel=1e-10)
        np.testing.assert_allclose(a.predict(np.array([1.1])).mean, b.predict(np.array([11.1])).mean, atol=1e-9)


class TestRecursionStructure:

    def test_rejects_unsorted_inputs(self):
        with pytest.raises(PreconditionError):
            build_state_space(np.array([0.0, 2.0, 1.0]), 1.0, 1.0, 2.5)

    def test_observation_count_mismatch(self):
        model = build_state_space(np.array([0.0, 1.0]), 1.0, 1.0, 2.5)
        with pytest.raises(PreconditionError):
            kalman_filter(model, np.zeros(3), 0.1)

    def test_uninformative_observations(self):
        x, y = _data(10)
        model = build_state_space(x, 0.5, 1.0, 2.5)
        state = kalman_filter(model, y, 1e12)
        np.testing.assert_allclose(state.m, state.b, atol=1e-6)
        np.testing.assert_allclose(state.C, state.B, atol=1e-6)

    def test_variance_ordering(self):
        """Smoothed <= filtered <= prior variance of the latent value."""
        x, y = _data()
        model = build_state_space(x, 0.5, 1.0, 2.5)
        state = kalman_filter(model, y, 1e-2)
        smoothed = rts_smoother(model, state)
        assert np.all(smoothed.S[:, 0, 0] <= state.C[:, 0, 0] + 1e-12)
        assert np.all(state.C[:, 0, 0] <= 1.0 + 1e-12)
        assert np.all(state.Q > 0)

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    def test_covariances_are_loewner_ordered(self, nu):
        """S_t <= C_t <= B_t as matrices, not just on the diagonal."""
        x, y = _data()
        model = build_state_space(x, 0.5, 1.0, nu)
        state = kalman_filter(model, y, 1e-2)
        smoothed = rts_smoother(model, state)
        for t in range(model.locations.size):
            tol = 1e-9 * np.abs(state.B[t]).max()
            assert np.linalg.eigvalsh(state.C[t] - smoothed.S[t]).min() >= -tol
            assert np.linalg.eigvalsh(state.B[t] - state.C[t]).min() >= -tol

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    def test_filtered_mean_is_sequential_conditioning(self, nu):
        x, y = _data(15, seed=4)
        gamma, variance, nugget = 0.6, 1.4, 2e-2
        model = build_state_space(x, gamma, variance, nu)
        state = kalman_filter(model, y, nugget)
        K = variance * build_correlation(KernelSpec(nu=nu, gamma=(gamma,)), x)
        for t in range(x.size):
            past = slice(0, t + 1)
            weights = np.linalg.solve(K[past, past] + nugget * np.eye(t + 1), K[past, t])
            assert state.m[t, 0] == pytest.approx(weights @ y[past], abs=1e-9)
            assert state.C[t, 0, 0] == pytest.approx(variance - weights @ K[past, t], abs=1e-9)

    def test_two_point_smoother_matches_joint_posterior(self):
        x, y, nugget = np.array([0.2, 0.9]), np.array([0.7, -0.4]), 0.05
        model = build_state_space(x, 0.8, 1.3, 2.5)
        smoothed = rts_smoother(model, kalman_filter(model, y, nugget))

        W1, G = model.W1, model.G[1]
        prior = np.block([[W1, W1 @ G.T], [G @ W1, W1]])
        H = np.zeros((2, 6))
        H[0, 0] = H[1, 3] = 1.0
        gain = np.linalg.solve(H @ prior @ H.T + nugget * np.eye(2), H @ prior).T
        mean = gain @ y
        cov = prior - gain @ H @ prior

        np.testing.assert_allclose(np.concatenate(smoothed.s), mean, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(smoothed.S[0], cov[:3, :3], rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(smoothed.S[1], cov[3:, 3:], rtol=1e-9, atol=1e-9)

    def test_joint_precision_inverts_to_prior_covariance(self):
        x = np.array([0.0, 0.3, 0.5, 0.9, 1.6])
        model = build_state_space(x, 0.8, 1.5, 2.5)
        cov = np.linalg.inv(joint_precision(model))
        expected = 1.5 * build_correlation(KernelSpec(gamma=(0.8,)), x)
        np.testing.assert_allclose(cov[::3, ::3], expected, rtol=1e-6, atol=1e-8)

    def test_joint_precision_is_block_tridiagonal(self):
        model = build_state_space(np.linspace(0, 1, 5), 0.5, 1.0, 2.5)
        Lam = joint_precision(model)
        assert np.all(Lam[:3, 6:] == 0)
        assert np.all(Lam[6:, :3] == 0)


class TestParameterEstimation:

    def test_profile_likelihood_matches_dense(self):
        x, y = _data(30)
        value, sigma2 = profile_log_likelihood(x, y, 0.4, 1e-2, 2.5)
        model = GpModel(KernelSpec(gamma=(0.4,), nugget=1e-2), x, y, zero_mean=True)
        assert value == pytest.approx(gp_log_likelihood(model), rel=1e-9)
        R = build_correlation(model.kernel, x) + 1e-2 * np.eye(x.size)
        assert sigma2 == pytest.approx(y @ np.linalg.solve(R, y) / x.size, rel=1e-9)

    def test_fit_improves_on_the_start(self):
        x, y = _data(60, seed=2)
        fitted = fit_parameters(x, y, 2.5, gamma_bounds=(0.05, 2.0), nugget_bounds=(1e-6, 1.0), grid_size=6)
        assert 0.05 <= fitted["gamma"] <= 2.0
        assert 1e-6 <= fitted["nugget"] <= 1.0
        assert fitted["variance"] > 0
        assert fitted["log_likelihood"] >= profile_log_likelihood(x, y, 1.0, 0.1, 2.5)[0]

    def test_fit_without_nugget(self):
        x, y = _data(25, seed=3, noise_sd=0.0)
        fitted = fit_parameters(x, y, 2.5, gamma_bounds=(0.05, 1.0), nugget_bounds=None, grid_size=5, sweeps=1)
        assert fitted["nugget"] == 0.0


def _best_time(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


@pytest.mark.slow
class TestLinearRuntime:

    def test_filter_and_smoother_scale_linearly(self):
        def run(N):
            x = np.linspace(0.0, 1.0, N)
            y = np.sin(20.0 * x)
            model = build_state_space(x, 0.05, 1.0, 2.5)
            return lambda: rts_smoother(model, kalman_filter(model, y, 1e-2))

        small = _best_time(run(10_000))
        large = _best_time(run(100_000))
        assert large <= 15.0 * small
