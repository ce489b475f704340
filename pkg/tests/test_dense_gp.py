import numpy as np
import pytest
from scipy.stats import multivariate_normal

from utils.dense_gp import GpModel, gp_log_likelihood, gp_predict
from utils.errors import NumericalError, PreconditionError
from utils.kernels import build_correlation
from utils.schemas import KernelSpec


def _training(n=12, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 1, n))
    return x, np.sin(6 * x) + 0.3 * x


def _brute_force(spec, x, y, x_star):
    """Student-t predictive from explicit inverses, constant mean basis."""
    R = build_correlation(spec, x) + spec.nugget * np.eye(x.size)
    Ri = np.linalg.inv(R)
    H = np.ones((x.size, 1))
    beta = np.linalg.solve(H.T @ Ri @ H, H.T @ Ri @ y)
    r = build_correlation(spec, x, x_star)
    resid = y - H @ beta
    mean = beta[0] + r.T @ Ri @ resid
    sigma2 = resid @ Ri @ resid / (x.size - 1)
    corr = 1.0 - H.T @ Ri @ r
    k_star = 1.0 - np.einsum("iq,ij,jq->q", r, Ri, r) + corr.ravel() ** 2 / (H.T @ Ri @ H).item()
    return mean, sigma2 * k_star


class TestPrediction:

    @pytest.mark.parametrize("nu", [0.5, 2.5])
    def test_matches_brute_force(self, nu):
        x, y = _training()
        spec = KernelSpec(nu=nu, gamma=(0.3,), nugget=1e-6)
        x_star = np.linspace(-0.1, 1.1, 25)
        pred = gp_predict(GpModel(spec, x, y), x_star)
        mean, var = _brute_force(spec, x, y, x_star)
        np.testing.assert_allclose(pred.mean, mean, rtol=1e-6, atol=1e-7)
        np.testing.assert_allclose(pred.variance, var, rtol=1e-6, atol=1e-7)
        assert pred.df == x.size - 1

    def test_interpolates_without_nugget(self):
        x, y = _training()
        pred = gp_predict(GpModel(KernelSpec(gamma=(0.15,)), x, y), x)
        np.testing.assert_allclose(pred.mean, y, atol=1e-6)
        assert np.all(pred.variance < 1e-6)
        assert np.all(pred.variance >= 0)

    def test_noisy_prediction_adds_nugget(self):
        x, y = _training()
        model = GpModel(KernelSpec(gamma=(0.3,), nugget=1e-2), x, y)
        latent = gp_predict(model, np.array([0.37, 0.81]))
        noisy = gp_predict(model, np.array([0.37, 0.81]), noisy=True)
        np.testing.assert_allclose(noisy.mean, latent.mean)
        sigma2 = (noisy.variance - latent.variance) / 1e-2
        assert sigma2[0] == pytest.approx(sigma2[1], rel=1e-10)
        assert sigma2[0] > 0

    def test_fixed_variance_is_gaussian(self):
        x, y = _training()
        spec = KernelSpec(gamma=(0.3,), variance=2.0, nugget=1e-4)
        model = GpModel(spec, x, y, zero_mean=True, estimate_variance=False)
        pred = gp_predict(model, np.array([0.5]))
        R = build_correlation(spec, x) + 1e-4 * np.eye(x.size)
        r = build_correlation(spec, x, np.array([0.5]))[:, 0]
        assert pred.df is None
        assert pred.mean[0] == pytest.approx(r @ np.linalg.solve(R, y), rel=1e-9)
        assert pred.variance[0] == pytest.approx(2.0 * (1 - r @ np.linalg.solve(R, r)), rel=1e-8)

    def test_far_prediction_reverts_to_mean(self):
        x, y = _training()
        model = GpModel(KernelSpec(gamma=(0.1,)), x, y, zero_mean=True, estimate_variance=False)
        pred = gp_predict(model, np.array([50.0]))
        assert pred.mean[0] == pytest.approx(0.0, abs=1e-12)
        assert pred.variance[0] == pytest.approx(1.0, rel=1e-12)

    def test_multivariate_inputs(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, size=(20, 2))
        y = X[:, 0] - 2 * X[:, 1] ** 2
        pred = gp_predict(GpModel(KernelSpec(gamma=(0.5, 0.8)), X, y), np.array([0.3, 0.4]))
        assert pred.mean.shape == (1,)
        assert np.isfinite(pred.mean[0])


class TestPreconditions:

    def test_needs_more_points_than_basis(self):
        with pytest.raises(PreconditionError):
            GpModel(KernelSpec(), np.array([0.5]), np.array([1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(PreconditionError):
            GpModel(KernelSpec(), np.zeros(3), np.zeros(4))

    def test_duplicate_inputs_without_nugget(self):
        x = np.array([0.0, 0.5, 0.5, 1.0])
        model = GpModel(KernelSpec(gamma=(0.4,)), x, np.array([0.0, 1.0, 1.1, 0.0]))
        with pytest.raises(NumericalError):
            gp_predict(model, np.array([0.25]))

    def test_duplicate_inputs_with_nugget(self):
        x = np.array([0.0, 0.5, 0.5, 1.0])
        model = GpModel(KernelSpec(gamma=(0.4,), nugget=1e-3), x, np.array([0.0, 1.0, 1.1, 0.0]))
        assert np.isfinite(gp_predict(model, np.array([0.25])).mean[0])


class TestLogLikelihood:

    def test_single_observation(self):
        model = GpModel(KernelSpec(variance=2.0, nugget=0.5), np.array([0.3]), np.array([1.2]),
                        zero_mean=True, estimate_variance=False)
        expected = -0.5 * np.log(2 * np.pi * 3.0) - 0.5 * 1.2 ** 2 / 3.0
        assert gp_log_likelihood(model, variance=2.0) == pytest.approx(expected, rel=1e-12)

    def test_matches_multivariate_normal(self):
        x, y = _training(15)
        spec = KernelSpec(gamma=(0.25,), nugget=1e-3)
        model = GpModel(spec, x, y, zero_mean=True, estimate_variance=False)
        cov = 1.7 * (build_correlation(spec, x) + 1e-3 * np.eye(x.size))
        expected = multivariate_normal(np.zeros(x.size), cov).logpdf(y)
        assert gp_log_likelihood(model, variance=1.7) == pytest.approx(expected, rel=1e-9)

    def test_profiled_variance_is_the_maximizer(self):
        x, y = _training(15)
        model = GpModel(KernelSpec(gamma=(0.25,), nugget=1e-3), x, y, zero_mean=True)
        profiled = gp_log_likelihood(model)
        for variance in (0.05, 0.5, 5.0):
            assert profiled >= gp_log_likelihood(model, variance=variance)

    def test_parameter_overrides(self):
        x, y = _training(15)
        base = GpModel(KernelSpec(gamma=(0.25,), nugget=1e-3), x, y)
        other = GpModel(KernelSpec(gamma=(0.6,), nugget=1e-2), x, y)
        assert gp_log_likelihood(base, gamma=0.6, nugget=1e-2) == pytest.approx(gp_log_likelihood(other), rel=1e-12)
