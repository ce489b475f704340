"""Dense (cubic-cost) Gaussian process emulator.

Used directly for small emulation problems and as the reference that the
state-space and sparse estimators are checked against.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import NumericalError, PreconditionError
from .kernels import as_inputs, build_correlation
from .schemas import KernelSpec

Basis = Callable[[np.ndarray], np.ndarray]


def constant_basis(X: np.ndarray) -> np.ndarray:
    return np.ones((X.shape[0], 1))


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray
    variance: np.ndarray
    df: Optional[int] = None


@dataclass(frozen=True)
class GpModel:
    """Training data plus kernel and mean structure.

    ``zero_mean`` drops the mean basis entirely (q = 0). ``estimate_variance``
    selects the Student-t predictive with sigma^2 estimated by GLS; otherwise
    ``kernel.variance`` is used and predictions are Gaussian.
    """

    kernel: KernelSpec
    X: np.ndarray
    y: np.ndarray
    basis: Basis = constant_basis
    zero_mean: bool = False
    estimate_variance: bool = True
    H: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = as_inputs(self.X)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise PreconditionError(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
        if not np.all(np.isfinite(y)):
            raise PreconditionError("training outputs must be finite")
        H = np.zeros((X.shape[0], 0)) if self.zero_mean else np.asarray(self.basis(X), dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "H", H)
        if self.N <= self.q:
            raise PreconditionError(f"need N > q observations, got N={self.N}, q={self.q}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.H.shape[1]


@dataclass
class _Factorization:
    chol: tuple
    log_det: float
    beta: np.ndarray
    resid_solve: np.ndarray   # R~^{-1} (y - H beta)
    Rinv_H: np.ndarray
    gls_chol: Optional[tuple]
    sigma2: float
    quad: float               # (y - H beta)^T R~^{-1} (y - H beta)


def _factorize(model: GpModel, kernel: Optional[KernelSpec] = None) -> _Factorization:
    kernel = kernel or model.kernel
    if kernel.nugget == 0 and np.unique(model.X, axis=0).shape[0] < model.N:
        raise NumericalError("correlation matrix is singular: duplicate inputs with zero nugget")

    R = build_correlation(kernel, model.X)
    R[np.diag_indices_from(R)] += kernel.nugget
    try:
        chol = cho_factor(R, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"R + eta*I is not positive definite: {e}") from e
    log_det = 2.0 * np.sum(np.log(np.diag(chol[0])))

    beta = np.zeros(model.q)
    Rinv_H = cho_solve(chol, model.H) if model.q else np.zeros((model.N, 0))
    gls_chol = None
    if model.q:
        gls = model.H.T @ Rinv_H
        cond = np.linalg.cond(gls)
        if not np.isfinite(cond) or cond > 1e12:
            raise NumericalError("H^T R~^{-1} H is singular", condition=cond)
        gls_chol = cho_factor(gls, lower=True)
        beta = cho_solve(gls_chol, Rinv_H.T @ model.y)

    resid = model.y - model.H @ beta
    resid_solve = cho_solve(chol, resid)
    quad = float(resid @ resid_solve)
    sigma2 = quad / (model.N - model.q) if model.estimate_variance else kernel.variance
    return _Factorization(chol, log_det, beta, resid_solve, Rinv_H, gls_chol, sigma2, quad)


def gp_predict(model: GpModel, x_star: np.ndarray, noisy: bool = False) -> PredictiveDistribution:
    """Predictive distribution at one or more test inputs.

    Args:
        model: Trained GpModel
        x_star: Test inputs, (Q, p) or a single p-vector / scalar for p = 1
        noisy: Predict a new noisy observation (adds eta to the scale)

    Returns:
        PredictiveDistribution with the Student-t location and scale
        sigma_hat^2 K** (df = N - q), or Gaussian moments when the variance
        is fixed (df = None)
    """
    x_star = np.asarray(x_star, dtype=float)
    if x_star.ndim == 1 and model.X.shape[1] > 1:
        x_star = x_star[None, :]
    Xs = as_inputs(x_star)
    fac = _factorize(model)

    r = build_correlation(model.kernel, model.X, Xs)  # N x Q
    Rinv_r = cho_solve(fac.chol, r)
    mean = r.T @ fac.resid_solve
    k_star = 1.0 - np.sum(r * Rinv_r, axis=0)
    if model.q:
        h_star = np.asarray(model.basis(Xs), dtype=float)
        mean = mean + h_star @ fac.beta
        correction = h_star.T - model.H.T @ Rinv_r  # q x Q
        k_star = k_star + np.sum(correction * cho_solve(fac.gls_chol, correction), axis=0)
    if noisy:
        k_star = k_star + model.kernel.nugget
    variance = np.maximum(fac.sigma2 * k_star, 0.0)
    df = model.N - model.q if model.estimate_variance else None
    return PredictiveDistribution(mean=mean, variance=variance, df=df)


def gp_log_likelihood(
    model: GpModel,
    gamma: Optional[float] = None,
    nugget: Optional[float] = None,
    variance: Optional[float] = None,
) -> float:
    """Gaussian log-likelihood of the training outputs.

    The density is that of y under N(H beta, sigma^2 (R + eta I)); with
    ``zero_mean`` the mean is 0. ``variance=None`` profiles sigma^2 out at
    its maximizer, otherwise the given value is used. ``gamma`` and
    ``nugget`` override the model's kernel for this evaluation (``gamma``
    is applied to every input dimension).
    """
    updates = {}
    if gamma is not None:
        updates["gamma"] = (float(gamma),) * len(model.kernel.gamma)
    if nugget is not None:
        updates["nugget"] = float(nugget)
    kernel = KernelSpec(**{**model.kernel.model_dump(), **updates})
    fac = _factorize(model, kernel)

    n = model.N
    sigma2 = fac.quad / n if variance is None else float(variance)
    return float(-0.5 * n * np.log(2.0 * np.pi * sigma2) - 0.5 * fac.log_det - 0.5 * fac.quad / sigma2)
