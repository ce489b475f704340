"""Generalized probabilistic PCA with a shared factor covariance.

Model: Y = A Z + E with Y of shape (n1, n2), orthonormal loadings A
(n1 × d), each row of Z a zero-mean GP with covariance Sigma over the n2
inputs, and E i.i.d. N(0, sigma0^2).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, null_space, subspace_angles

from .errors import DomainError, NumericalError, PreconditionError
from .kernels import build_correlation
from .schemas import KernelSpec
from .state_space import StateSpaceGP


@dataclass(frozen=True)
class FactorModel:
    Y: np.ndarray
    d: int
    Sigma: np.ndarray
    sigma0sq: float

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2:
            raise PreconditionError("Y must be a matrix")
        if self.Sigma.shape != (Y.shape[1], Y.shape[1]):
            raise PreconditionError(f"Sigma must be {Y.shape[1]}x{Y.shape[1]}, got {self.Sigma.shape}")
        if not 1 <= self.d <= min(Y.shape):
            raise PreconditionError(f"need 1 <= d <= min(n1, n2) = {min(Y.shape)}, got d={self.d}")
        if self.sigma0sq < 0:
            raise DomainError("noise variance must be nonnegative")
        object.__setattr__(self, "Y", Y)

    def loadings(self) -> np.ndarray:
        return gppca_shared(self.Y, self.Sigma, self.sigma0sq, self.d)


def factor_covariance(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """sigma^2 R(x) for 1-D factor inputs (nugget excluded)."""
    return spec.variance * build_correlation(spec, np.asarray(x, dtype=float).ravel())


def _noisy_cholesky(Sigma: np.ndarray, sigma0sq: float) -> tuple:
    S = Sigma + sigma0sq * np.eye(Sigma.shape[0])
    try:
        return cho_factor(S, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"Sigma + sigma0^2 I is not positive definite: {e}") from e


def gppca_shared(Y: np.ndarray, Sigma: np.ndarray, sigma0sq: float, d: int) -> np.ndarray:
    """Loadings maximizing the marginal likelihood: top-d eigenvectors of
    G = Y (sigma0^2 Sigma^{-1} + I)^{-1} Y^T = Y Sigma~^{-1} Sigma Y^T.

    Each column is signed so that its largest-magnitude entry is positive.
    """
    Y = np.asarray(Y, dtype=float)
    n1, n2 = Y.shape
    if not 1 <= d <= min(n1, n2):
        raise PreconditionError(f"need 1 <= d <= min(n1, n2) = {min(n1, n2)}, got d={d}")
    if Sigma.shape != (n2, n2):
        raise PreconditionError(f"Sigma must be {n2}x{n2}, got {Sigma.shape}")

    shrink = cho_solve(_noisy_cholesky(Sigma, sigma0sq), Sigma)
    shrink = 0.5 * (shrink + shrink.T)
    G = Y @ shrink @ Y.T
    G = 0.5 * (G + G.T)
    try:
        _, vectors = eigh(G, subset_by_index=[n1 - d, n1 - 1])
    except LinAlgError as e:
        raise NumericalError(f"eigendecomposition failed: {e}") from e

    A = vectors[:, ::-1]
    signs = np.sign(A[np.argmax(np.abs(A), axis=0), np.arange(d)])
    signs[signs == 0] = 1.0
    return A * signs


def factor_posterior(
    Y: np.ndarray, A: np.ndarray, Sigma: np.ndarray, sigma0sq: float, l: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of factor ``l`` (0-based).

    mu = Sigma Sigma~^{-1} y~, cov = Sigma - Sigma Sigma~^{-1} Sigma with
    y~ = Y^T a_l and Sigma~ = Sigma + sigma0^2 I.
    """
    if not 0 <= l < A.shape[1]:
        raise PreconditionError(f"factor index {l} outside 0..{A.shape[1] - 1}")
    chol = _noisy_cholesky(Sigma, sigma0sq)
    projected = np.asarray(Y, dtype=float).T @ A[:, l]
    mean = Sigma @ cho_solve(chol, projected)
    cov = Sigma - Sigma @ cho_solve(chol, Sigma)
    return mean, 0.5 * (cov + cov.T)


def _gaussian_logpdf(values: np.ndarray, chol: tuple) -> float:
    """Sum of log N(v; 0, S) over the columns of ``values`` for one Cholesky factor of S."""
    n = values.shape[0]
    log_det = 2.0 * np.sum(np.log(np.diag(chol[0])))
    quad = np.sum(values * cho_solve(chol, values))
    return float(-0.5 * values.shape[1] * (n * np.log(2.0 * np.pi) + log_det) - 0.5 * quad)


def marginal_likelihood_shared(Y: np.ndarray, A: np.ndarray, Sigma: np.ndarray, sigma0sq: float) -> float:
    """log p(Y | A) as a product over factor and complement projections."""
    Y = np.asarray(Y, dtype=float)
    n1, n2 = Y.shape
    d = A.shape[1]
    if not np.allclose(A.T @ A, np.eye(d), atol=1e-8):
        raise PreconditionError("loading matrix must have orthonormal columns")

    value = _gaussian_logpdf(Y.T @ A, _noisy_cholesky(Sigma, sigma0sq))
    if d < n1:
        if sigma0sq <= 0:
            raise NumericalError("complement projections have a degenerate density when sigma0^2 = 0")
        complement = Y.T @ null_space(A.T)
        value += float(
            -0.5 * complement.size * np.log(2.0 * np.pi * sigma0sq)
            - 0.5 * np.sum(complement * complement) / sigma0sq
        )
    return value


def factor_posterior_means_state_space(
    Y: np.ndarray,
    A: np.ndarray,
    x: np.ndarray,
    gamma: float,
    variance: float,
    nu: float,
    sigma0sq: float,
) -> np.ndarray:
    """Posterior means of all factors at the inputs ``x`` in O(n2) each.

    Equivalent to ``factor_posterior`` with Sigma the Matérn covariance on
    ``x``; requires sigma0^2 > 0 when inputs repeat.

    Returns:
        Array (d, n2) in the order of ``x``
    """
    x = np.asarray(x, dtype=float).ravel()
    projected = np.asarray(Y, dtype=float).T @ A  # n2 x d
    means = np.empty((A.shape[1], x.size))
    for l in range(A.shape[1]):
        gp = StateSpaceGP(x, projected[:, l], gamma, variance, nu, sigma0sq)
        means[l] = gp.predict(x).mean
    return means


def principal_angle(A: np.ndarray, B: np.ndarray) -> float:
    """Largest principal angle (radians) between span(A) and span(B)."""
    return float(np.max(subspace_angles(A, B)))


def random_orthonormal(n1: int, d: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng()
    Q, _ = np.linalg.qr(rng.standard_normal((n1, d)))
    return Q
