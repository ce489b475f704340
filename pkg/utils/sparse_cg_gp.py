"""Matrix-free GP estimation of a particle interaction kernel.

The latent kernel values phi(d_s) at the sorted distances have an
exponential-correlation prior, whose Cholesky factor has a bidiagonal
inverse. Products with the velocity covariance U_s R_s U_s^T + eta I then
cost O(N) and the posterior is computed by conjugate gradient, preconditioned
with a pivoted-Cholesky factor of the same covariance.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_banded
from scipy.sparse import diags
from scipy.sparse.linalg import LinearOperator, cg

import config
from .distance_index import DistanceIndex
from .errors import ConvergenceError, DomainError, NumericalError, PreconditionError
from .particle_sim import InteractionKernel
from .schemas import EstimatorConfig


# ─── Operator Pieces ────────────────────────────────────────────────────────

def _velocity_rows(idx: DistanceIndex, particle_rows: np.ndarray) -> np.ndarray:
    """Velocity-vector positions f*nD + j*n + i for particle rows f*n + i, shape (P, D)."""
    frame, i = np.divmod(particle_rows, idx.n)
    offsets = np.arange(idx.D) * idx.n
    return (frame * idx.n * idx.D + i)[:, None] + offsets[None, :]


def apply_Ut(idx: DistanceIndex, z: np.ndarray) -> np.ndarray:
    """g1 = U_s^T z without forming U_s."""
    z = np.asarray(z, dtype=float)
    assert z.size == idx.N, f"expected a vector of length {idx.N}, got {z.size}"
    rows_b, rows_a = idx.P_r[:, 0], idx.P_r[:, 1]
    vel_a = _velocity_rows(idx, rows_a)
    vel_b = _velocity_rows(idx, rows_b)
    # U_re[(f,j,a), b] = x_b - x_a and U_re[(f,j,b), a] = x_a - x_b
    coef_a = idx.U_re[vel_a, (rows_b % idx.n)[:, None]]
    coef_b = idx.U_re[vel_b, (rows_a % idx.n)[:, None]]
    contrib = np.sum(coef_a * z[vel_a] + coef_b * z[vel_b], axis=1)
    return np.bincount(idx.pair_rank, weights=contrib, minlength=idx.n_unique)


def _diagonal(innovation: np.ndarray) -> np.ndarray:
    return np.concatenate(([1.0], 1.0 / innovation))


def _innovation_from(rho: np.ndarray, innovation: Optional[np.ndarray]) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho >= 1.0):
        raise PreconditionError("rho_k = 1 found: tied distances must be merged before factorization")
    if np.any(rho <= 0.0):
        raise PreconditionError("rho_k must lie in (0, 1)")
    return np.sqrt(1.0 - rho * rho) if innovation is None else np.asarray(innovation, dtype=float)


def solve_upper_bidiagonal(rho: np.ndarray, g1: np.ndarray, innovation: Optional[np.ndarray] = None) -> np.ndarray:
    """g2 = L_s^T g1 by back substitution with the upper-bidiagonal L_s^{-T}."""
    g1 = np.asarray(g1, dtype=float)
    s = _innovation_from(rho, innovation)
    if g1.size == 1:
        return g1.copy()
    ab = np.zeros((2, g1.size))
    ab[0, 1:] = -np.asarray(rho) / s
    ab[1] = _diagonal(s)
    return solve_banded((0, 1), ab, g1)


def solve_lower_bidiagonal(rho: np.ndarray, g2: np.ndarray, innovation: Optional[np.ndarray] = None) -> np.ndarray:
    """g3 = L_s g2 by forward substitution with the lower-bidiagonal L_s^{-1}."""
    g2 = np.asarray(g2, dtype=float)
    s = _innovation_from(rho, innovation)
    if g2.size == 1:
        return g2.copy()
    ab = np.zeros((2, g2.size))
    ab[0] = _diagonal(s)
    ab[1, :-1] = -np.asarray(rho) / s
    return solve_banded((1, 0), ab, g2)


def precision_factor(rho: np.ndarray, innovation: Optional[np.ndarray] = None):
    """Sparse upper-bidiagonal L~ with L~ L~^T = R_s^{-1}."""
    s = _innovation_from(rho, innovation)
    if s.size == 0:
        return diags([np.ones(1)], [0], format="csr")
    return diags([_diagonal(s), -np.asarray(rho) / s], [0, 1], format="csr")


def apply_Rs(idx: DistanceIndex, g1: np.ndarray) -> np.ndarray:
    g2 = solve_upper_bidiagonal(idx.rho, g1, idx.innovation)
    return solve_lower_bidiagonal(idx.rho, g2, idx.innovation)


def apply_U(idx: DistanceIndex, g3: np.ndarray) -> np.ndarray:
    """U_s g3 by gathering g3 through P_c and weighting with U_re."""
    g3 = np.asarray(g3, dtype=float)
    assert g3.size == idx.n_unique, f"expected a vector of length {idx.n_unique}, got {g3.size}"
    gathered = np.where(idx.P_c >= 0, g3[idx.P_c], 0.0)
    F, D, n = idx.n_frames, idx.D, idx.n
    out = np.sum(idx.U_re.reshape(F, D, n, n) * gathered.reshape(F, 1, n, n), axis=3)
    return out.ravel()


def apply_Rv(idx: DistanceIndex, cfg: EstimatorConfig, z: np.ndarray) -> np.ndarray:
    """(U_s R_s U_s^T + eta I) z."""
    z = np.asarray(z, dtype=float)
    return apply_U(idx, apply_Rs(idx, apply_Ut(idx, z))) + cfg.nugget * z


def rv_operator(idx: DistanceIndex, cfg: EstimatorConfig) -> LinearOperator:
    return LinearOperator((idx.N, idx.N), matvec=lambda z: apply_Rv(idx, cfg, np.ravel(z)), dtype=float)


# ─── Preconditioning ────────────────────────────────────────────────────────

def rv_diagonal(idx: DistanceIndex) -> np.ndarray:
    """diag(U_s R_s U_s^T) without forming any row of the covariance.

    Each velocity row touches the n - 1 distances of one particle in one
    frame; its quadratic form under the exponential kernel is one running
    scan over those distances in sorted order.
    """
    F, D, n = idx.n_frames, idx.D, idx.n
    ranks = np.broadcast_to(idx.P_c.reshape(F, 1, n, n), (F, D, n, n)).reshape(F * D * n, n)
    valid = ranks >= 0
    t = np.where(valid, idx.d_s[np.maximum(ranks, 0)], 0.0)
    u = np.where(valid, idx.U_re, 0.0)
    order = np.argsort(t, axis=1, kind="stable")
    t = np.take_along_axis(t, order, axis=1)
    u = np.take_along_axis(u, order, axis=1)

    total = np.sum(u * u, axis=1)
    carry = np.zeros(t.shape[0])
    for col in range(1, n):
        carry = np.exp(-(t[:, col] - t[:, col - 1]) / idx.gamma) * (carry + u[:, col - 1])
        total += 2.0 * u[:, col] * carry
    return total


def pivoted_cholesky(idx: DistanceIndex, rank: int, stop: float, diagonal: Optional[np.ndarray] = None) -> np.ndarray:
    """N×r factor W with W W^T ≈ U_s R_s U_s^T, greedy on the largest remaining diagonal.

    Stops after ``rank`` columns or once every remaining diagonal entry is
    at most ``stop``. Each column costs one matrix-free product.
    """
    d = (rv_diagonal(idx) if diagonal is None else np.asarray(diagonal, dtype=float)).copy()
    rank = min(rank, d.size)
    W = np.zeros((d.size, rank))
    e = np.zeros(d.size)
    used = 0
    for m in range(rank):
        i = int(np.argmax(d))
        if d[i] <= stop:
            break
        e[i] = 1.0
        column = apply_U(idx, apply_Rs(idx, apply_Ut(idx, e)))
        e[i] = 0.0
        w = (column - W[:, :m] @ W[i, :m]) / np.sqrt(d[i])
        W[:, m] = w
        d -= w * w
        d[i] = 0.0
        used = m + 1
    return W[:, :used]


@dataclass(frozen=True)
class LowRankPreconditioner:
    """Exact inverse of W W^T + eta I through the thin SVD of W."""

    basis: np.ndarray
    scales: np.ndarray
    nugget: float

    @classmethod
    def from_factor(cls, W: np.ndarray, nugget: float) -> "LowRankPreconditioner":
        if not nugget > 0:
            raise PreconditionError("a low-rank preconditioner needs a positive nugget")
        if W.shape[1] == 0:
            return cls(np.zeros((W.shape[0], 0)), np.zeros(0), float(nugget))
        Q, s, _ = np.linalg.svd(W, full_matrices=False)
        return cls(Q, s * s, float(nugget))

    @property
    def rank(self) -> int:
        return self.scales.size

    def solve(self, z: np.ndarray) -> np.ndarray:
        z = np.ravel(z)
        coef = self.basis.T @ z
        return self.basis @ (coef / (self.scales + self.nugget)) + (z - self.basis @ coef) / self.nugget


def build_preconditioner(idx: DistanceIndex, cfg: EstimatorConfig) -> Optional[LinearOperator]:
    """Approximate inverse of R_v for CG, or None when preconditioning is off.

    With a zero nugget the low-rank form is singular, so diagonal scaling
    is used instead.
    """
    if cfg.preconditioner == "none":
        return None
    diagonal = rv_diagonal(idx)
    if cfg.preconditioner == "jacobi" or cfg.nugget == 0:
        scale = diagonal + cfg.nugget
        scale = np.where(scale > 0, scale, 1.0)
        return LinearOperator((idx.N, idx.N), matvec=lambda z: np.ravel(z) / scale, dtype=float)
    W = pivoted_cholesky(idx, cfg.preconditioner_rank, config.PRECONDITIONER_STOP * cfg.nugget, diagonal)
    low_rank = LowRankPreconditioner.from_factor(W, cfg.nugget)
    return LinearOperator((idx.N, idx.N), matvec=low_rank.solve, dtype=float)


# ─── Conjugate Gradient ─────────────────────────────────────────────────────

def cg_solve_with_info(
    idx: DistanceIndex,
    cfg: EstimatorConfig,
    rhs: np.ndarray,
    tolerance: Optional[float] = None,
    preconditioner: Optional[LinearOperator] = None,
) -> Tuple[np.ndarray, int, float]:
    """Preconditioned CG on the velocity covariance.

    Stops once ||R_v z - rhs|| <= tolerance * ||rhs||; the preconditioner
    changes the iterates, not the stopping rule.

    Returns:
        (solution, iterations, relative residual ||R_v z - rhs|| / ||rhs||)

    Raises:
        ConvergenceError: if max_iter iterations do not reach the tolerance
    """
    tol = cfg.tolerance if tolerance is None else tolerance
    rhs = np.asarray(rhs, dtype=float)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0:
        return np.zeros_like(rhs), 0, 0.0

    counter = {"iterations": 0}

    def count(_):
        counter["iterations"] += 1

    z, info = cg(rv_operator(idx, cfg), rhs, rtol=tol, atol=0.0, maxiter=cfg.max_iter,
                 M=preconditioner, callback=count)
    residual = float(np.linalg.norm(apply_Rv(idx, cfg, z) - rhs) / rhs_norm)
    if info > 0:
        raise ConvergenceError(counter["iterations"], residual, tol)
    if info < 0:
        raise NumericalError(f"CG breakdown (info={info})")
    return z, counter["iterations"], residual


def cg_solve(idx: DistanceIndex, cfg: EstimatorConfig, rhs: np.ndarray) -> np.ndarray:
    return cg_solve_with_info(idx, cfg, rhs, preconditioner=build_preconditioner(idx, cfg))[0]


# ─── Exponential Kernel Sums ────────────────────────────────────────────────

def exp_kernel_sum(d_s: np.ndarray, weights: np.ndarray, gamma: float, d_star) -> np.ndarray:
    """sum_k exp(-|d* - d_s[k]| / gamma) weights[k] for every d*.

    Two scaled prefix scans over the sorted d_s give O((Ñ + Q) log Ñ) cost.
    When the distance span is too wide for the scaling to stay in range the
    sum is formed densely in chunks.
    """
    q = np.asarray(d_star, dtype=float)
    shape = q.shape
    q = q.ravel()
    if d_s.size == 0 or q.size == 0:
        return np.zeros(shape)
    lo, hi = min(d_s[0], q.min()), max(d_s[-1], q.max())

    if (hi - lo) / gamma > config.PREFIX_SUM_MAX_SPAN:
        out = np.empty(q.size)
        chunk = max(1, int(4_000_000 // d_s.size))
        for start in range(0, q.size, chunk):
            block = q[start:start + chunk]
            out[start:start + chunk] = np.exp(-np.abs(block[:, None] - d_s[None, :]) / gamma) @ weights
        return out.reshape(shape)

    left_cum = np.cumsum(weights * np.exp((d_s - d_s[-1]) / gamma))
    right_cum = np.cumsum((weights * np.exp(-(d_s - d_s[0]) / gamma))[::-1])[::-1]
    pos = np.searchsorted(d_s, q, side="right")  # number of d_s <= d*

    left = np.zeros(q.size)
    has_left = pos > 0
    left[has_left] = np.exp((d_s[-1] - q[has_left]) / gamma) * left_cum[pos[has_left] - 1]
    right = np.zeros(q.size)
    has_right = pos < d_s.size
    right[has_right] = np.exp((q[has_right] - d_s[0]) / gamma) * right_cum[pos[has_right]]
    return (left + right).reshape(shape)


class EstimatedKernel:
    """Posterior-mean interaction kernel phi_hat(d) = r(d)^T U_s^T R_v^{-1} v."""

    def __init__(self, d_s: np.ndarray, weights: np.ndarray, gamma: float):
        self.d_s = d_s
        self.weights = weights
        self.gamma = gamma

    def __call__(self, d):
        out = exp_kernel_sum(self.d_s, self.weights, self.gamma, d)
        return float(out) if out.ndim == 0 else out


# ─── Prediction ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class KernelEstimate:
    d_star: np.ndarray
    mean: np.ndarray
    variance: Optional[np.ndarray]
    iterations: int
    residual: float
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def fit_kernel(
    idx: DistanceIndex,
    cfg: EstimatorConfig,
    velocities: np.ndarray,
    preconditioner: Optional[LinearOperator] = None,
) -> Tuple[EstimatedKernel, Dict[str, Any]]:
    """One CG solve z = R_v^{-1} v shared by every test distance.

    The preconditioner is built here unless one is passed in; the
    diagnostics time its setup and the solve separately.
    """
    started = time.perf_counter()
    if preconditioner is None:
        preconditioner = build_preconditioner(idx, cfg)
    setup_seconds = time.perf_counter() - started
    z, iterations, residual = cg_solve_with_info(idx, cfg, velocities, preconditioner=preconditioner)
    kernel = EstimatedKernel(idx.d_s, apply_Ut(idx, z), idx.gamma)
    return kernel, {
        "iterations": iterations,
        "residual": residual,
        "preconditioner": cfg.preconditioner,
        "preconditioner_seconds": setup_seconds,
        "solve_seconds": time.perf_counter() - started - setup_seconds,
        "n_unique": idx.n_unique,
        "N": idx.N,
    }


def _clamp_variance(variance: np.ndarray, prior_variance: float) -> np.ndarray:
    tol = config.VARIANCE_CLAMP_TOLERANCE * prior_variance
    if np.any(variance < -tol):
        worst = float(variance.min())
        raise NumericalError(
            f"predictive variance {worst:.3e} is below -{tol:.1e}; tighten the CG variance tolerance"
        )
    negative = variance < 0
    if np.any(negative):
        print(f"⚠️ Clamped {int(negative.sum())} slightly negative predictive variances to 0")
        variance = np.where(negative, 0.0, variance)
    return variance


def predict_phi(
    idx: DistanceIndex,
    cfg: EstimatorConfig,
    velocities: np.ndarray,
    d_star: np.ndarray,
    with_variance: bool = False,
    threads: int = 1,
) -> KernelEstimate:
    """Posterior mean (and optionally variance) of phi at test distances.

    Args:
        idx: Distance index built with ``cfg.gamma``
        cfg: Estimator configuration
        velocities: Recorded velocities in the index's vector layout
        d_star: Test distances
        with_variance: Run one extra CG solve per test distance
        threads: Worker threads for the per-distance variance solves

    Returns:
        KernelEstimate with CG diagnostics
    """
    if abs(idx.gamma - cfg.gamma) > 1e-12 * cfg.gamma:
        raise PreconditionError(f"index was built for gamma={idx.gamma}, config has gamma={cfg.gamma}")
    d_star = np.asarray(d_star, dtype=float).ravel()
    if np.any(d_star < 0):
        raise DomainError("test distances must be nonnegative")
    velocities = np.asarray(velocities, dtype=float).ravel()
    if velocities.size != idx.N:
        raise PreconditionError(f"expected {idx.N} velocities, got {velocities.size}")

    preconditioner = build_preconditioner(idx, cfg)
    kernel, diagnostics = fit_kernel(idx, cfg, velocities, preconditioner)
    mean = kernel(d_star)

    variance = None
    if with_variance:
        started = time.perf_counter()

        def solve_one(d: float) -> Tuple[float, int]:
            u = apply_U(idx, np.exp(-np.abs(d - idx.d_s) / cfg.gamma))
            w, iterations, _ = cg_solve_with_info(idx, cfg, u, cfg.variance_tolerance, preconditioner)
            return 1.0 - float(u @ w), iterations

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            results = list(pool.map(solve_one, d_star))
        variance = _clamp_variance(cfg.variance * np.array([r[0] for r in results]), cfg.variance)
        diagnostics["variance_iterations"] = [r[1] for r in results]
        diagnostics["variance_seconds"] = time.perf_counter() - started

    return KernelEstimate(d_star, mean, variance, diagnostics["iterations"], diagnostics["residual"], diagnostics)


def nrmse(
    estimate: Union[KernelEstimate, Sequence[KernelEstimate], np.ndarray],
    truth: Union[InteractionKernel, np.ndarray],
    d_star: Optional[np.ndarray] = None,
) -> float:
    """RMSE over all test points of all replicates over the sd of the truth on the grid.

    Args:
        estimate: One estimate, a list of replicate estimates on the same
            grid, or an array of predicted means (replicates × grid)
        truth: The true kernel, or its values on the grid
        d_star: Grid, needed only when ``estimate`` is a bare array and
            ``truth`` is callable
    """
    if isinstance(estimate, KernelEstimate):
        estimate = [estimate]
    if isinstance(estimate, np.ndarray):
        predicted = np.atleast_2d(estimate)
    else:
        estimate = list(estimate)
        d_star = estimate[0].d_star
        predicted = np.vstack([e.mean for e in estimate])

    truth_values = np.asarray(truth(d_star) if callable(truth) else truth, dtype=float).ravel()
    sigma_phi = float(np.std(truth_values))
    if sigma_phi == 0:
        raise DomainError("the true kernel is constant on the test grid; NRMSE is undefined")
    rmse = float(np.sqrt(np.mean((predicted - truth_values[None, :]) ** 2)))
    return rmse / sigma_phi


# ─── Dense Reference ────────────────────────────────────────────────────────

def dense_design_matrix(idx: DistanceIndex) -> np.ndarray:
    """U_s as an N×Ñ array (small systems only)."""
    U = np.zeros((idx.N, idx.n_unique))
    rows_b, rows_a = idx.P_r[:, 0], idx.P_r[:, 1]
    vel_a = _velocity_rows(idx, rows_a)
    vel_b = _velocity_rows(idx, rows_b)
    coef_a = idx.U_re[vel_a, (rows_b % idx.n)[:, None]]
    coef_b = idx.U_re[vel_b, (rows_a % idx.n)[:, None]]
    ranks = np.repeat(idx.pair_rank[:, None], idx.D, axis=1)
    np.add.at(U, (vel_a, ranks), coef_a)
    np.add.at(U, (vel_b, ranks), coef_b)
    return U


def dense_prior_correlation(idx: DistanceIndex) -> np.ndarray:
    return np.exp(-np.abs(idx.d_s[:, None] - idx.d_s[None, :]) / idx.gamma)


def dense_velocity_covariance(idx: DistanceIndex, cfg: EstimatorConfig) -> np.ndarray:
    """U_s R_s U_s^T + eta I assembled explicitly."""
    U = dense_design_matrix(idx)
    Rv = U @ dense_prior_correlation(idx) @ U.T
    Rv[np.diag_indices_from(Rv)] += cfg.nugget
    return Rv


def predict_phi_dense(
    idx: DistanceIndex,
    cfg: EstimatorConfig,
    velocities: np.ndarray,
    d_star: np.ndarray,
) -> KernelEstimate:
    """Full-GP posterior of phi by Cholesky; the reference for predict_phi."""
    d_star = np.asarray(d_star, dtype=float).ravel()
    U = dense_design_matrix(idx)
    Rv = dense_velocity_covariance(idx, cfg)
    try:
        chol = cho_factor(Rv, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"velocity covariance is not positive definite: {e}") from e
    cross = U @ np.exp(-np.abs(idx.d_s[:, None] - d_star[None, :]) / cfg.gamma)  # N x Q
    mean = cross.T @ cho_solve(chol, np.asarray(velocities, dtype=float).ravel())
    variance = cfg.variance * (1.0 - np.sum(cross * cho_solve(chol, cross), axis=0))
    return KernelEstimate(d_star, mean, variance, 0, 0.0, {"dense": True})

