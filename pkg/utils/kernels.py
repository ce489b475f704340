"""Correlation functions and correlation-matrix assembly."""

from typing import Optional, Union

import numpy as np

from .errors import DomainError, PreconditionError
from .schemas import KernelSpec

ArrayLike = Union[float, np.ndarray]

SQRT5 = np.sqrt(5.0)


def correlation(d: ArrayLike, gamma: float, family: str = "matern", nu: float = 2.5) -> np.ndarray:
    """Evaluate a unit-variance stationary correlation at distances ``d``.

    Args:
        d: Nonnegative distance(s)
        gamma: Range parameter
        family: ``"matern"`` or ``"squared_exponential"``
        nu: Roughness for the Matérn family (1/2 or 5/2)

    Returns:
        Array of correlations with the shape of ``d``
    """
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise DomainError("distances must be finite")
    if np.any(d < 0):
        raise DomainError(f"distances must be nonnegative, got min {d.min()}")

    if family == "squared_exponential":
        return np.exp(-0.5 * (d / gamma) ** 2)
    if nu == 0.5:
        return np.exp(-d / gamma)
    if nu == 2.5:
        a = SQRT5 * d / gamma
        return (1.0 + a + a * a / 3.0) * np.exp(-a)
    raise DomainError(f"unsupported roughness nu={nu}")


def kernel_eval(spec: KernelSpec, d: ArrayLike, dim: int = 0) -> ArrayLike:
    """K(d) for input dimension ``dim`` of ``spec``; scalar in, scalar out."""
    value = correlation(d, spec.gamma[dim], spec.family, spec.nu)
    return float(value) if value.ndim == 0 else value


def _ranges_for(spec: KernelSpec, p: int) -> np.ndarray:
    gammas = np.asarray(spec.gamma, dtype=float)
    if gammas.size == 1:
        return np.full(p, gammas[0])
    if gammas.size != p:
        raise PreconditionError(f"kernel has {gammas.size} range parameters but inputs have {p} columns")
    return gammas


def as_inputs(X: ArrayLike) -> np.ndarray:
    """Coerce inputs to an (N, p) float matrix; 1-D arrays are one column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise DomainError("inputs must be finite")
    return X


def build_correlation(spec: KernelSpec, X: ArrayLike, X2: Optional[ArrayLike] = None) -> np.ndarray:
    """Product-form correlation matrix between the rows of ``X`` and ``X2``.

    With ``X2`` omitted the result is the symmetric N×N matrix R with unit
    diagonal; the nugget is *not* added here.
    """
    X = as_inputs(X)
    Y = X if X2 is None else as_inputs(X2)
    if Y.shape[1] != X.shape[1]:
        raise PreconditionError(f"input column mismatch: {X.shape[1]} vs {Y.shape[1]}")

    gammas = _ranges_for(spec, X.shape[1])
    R = np.ones((X.shape[0], Y.shape[0]))
    for col, gamma in enumerate(gammas):
        dist = np.abs(X[:, col][:, None] - Y[:, col][None, :])
        R *= correlation(dist, gamma, spec.family, spec.nu)
    if X2 is None:
        R = 0.5 * (R + R.T)
        np.fill_diagonal(R, 1.0)
    return R
