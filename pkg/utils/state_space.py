"""Linear-time GP inference on 1-D inputs via the Matérn state-space form.

A zero-mean GP with Matérn covariance (nu = 1/2 or 5/2) on sorted inputs is a
linear Gaussian dynamic model over the state (z, z', z'') (or just z for
nu = 1/2). The Kalman filter and RTS smoother then give the exact likelihood
and posterior in O(N).
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .dense_gp import PredictiveDistribution
from .errors import DomainError, NumericalError, PreconditionError


# ─── Closed-Form Transition and Innovation Matrices ─────────────────────────

def state_dimension(nu: float) -> int:
    if nu == 0.5:
        return 1
    if nu == 2.5:
        return 3
    raise DomainError(f"state-space form is available for nu in {{1/2, 5/2}}, got {nu}")


def rate(gamma: float, nu: float) -> float:
    """lambda = sqrt(2 nu) / gamma."""
    return np.sqrt(2.0 * nu) / gamma


def stationary_covariance(gamma: float, variance: float, nu: float) -> np.ndarray:
    if nu == 0.5:
        return np.array([[variance]])
    lam = rate(gamma, nu)
    l2 = lam * lam
    return variance * np.array([
        [1.0, 0.0, -l2 / 3.0],
        [0.0, l2 / 3.0, 0.0],
        [-l2 / 3.0, 0.0, l2 * l2],
    ])


def transition_matrices(d: np.ndarray, gamma: float, variance: float, nu: float) -> Tuple[np.ndarray, np.ndarray]:
    """G(d) and W(d) for a vector of gaps ``d``.

    Returns:
        Tuple of arrays with shapes (len(d), k, k)
    """
    d = np.asarray(d, dtype=float).ravel()
    if np.any(d < 0):
        raise DomainError("gaps must be nonnegative")

    if nu == 0.5:
        G = np.exp(-d / gamma)[:, None, None]
        W = (-variance * np.expm1(-2.0 * d / gamma))[:, None, None]
        return G, W

    state_dimension(nu)
    lam = rate(gamma, nu)
    a = lam * d
    e = np.exp(-a)
    E = e * e
    l2, l3, l4 = lam ** 2, lam ** 3, lam ** 4

    G = np.empty((d.size, 3, 3))
    G[:, 0, 0] = a * a + 2 * a + 2
    G[:, 0, 1] = 2 * d * (a + 1)
    G[:, 0, 2] = d * d
    G[:, 1, 0] = -l3 * d * d
    G[:, 1, 1] = 2 + 2 * a - 2 * a * a
    G[:, 1, 2] = 2 * d - lam * d * d
    G[:, 2, 0] = l4 * d * d - 2 * l3 * d
    G[:, 2, 1] = 2 * l3 * d * d - 6 * l2 * d
    G[:, 2, 2] = a * a - 4 * a + 2
    G *= (0.5 * e)[:, None, None]

    a2, a3, a4 = a ** 2, a ** 3, a ** 4
    W = np.empty((d.size, 3, 3))
    W[:, 0, 0] = 1 - E * (3 + 6 * a + 6 * a2 + 4 * a3 + 2 * a4) / 3
    W[:, 0, 1] = 2.0 / 3.0 * lam * E * a4
    W[:, 0, 2] = l2 / 3 * (E * (1 + 2 * a + 2 * a2 + 4 * a3 - 2 * a4) - 1)
    W[:, 1, 1] = l2 / 3 * (1 - E * (1 + 2 * a + 2 * a2 - 4 * a3 + 2 * a4))
    W[:, 1, 2] = 2.0 / 3.0 * l3 * E * a2 * (a - 2) ** 2
    W[:, 2, 2] = l4 / 3 * (3 - E * (3 - 10 * a + 22 * a2 - 12 * a3 + 2 * a4))
    W[:, 1, 0] = W[:, 0, 1]
    W[:, 2, 0] = W[:, 0, 2]
    W[:, 2, 1] = W[:, 1, 2]
    W *= variance
    return G, W


# ─── Model and Recursion Outputs ────────────────────────────────────────────

@dataclass(frozen=True)
class StateSpaceModel:
    """State-space GP on the distinct sorted locations of the training inputs.

    ``G[t]`` and ``W[t]`` map the state at ``locations[t-1]`` to the one at
    ``locations[t]``; index 0 holds the identity and the stationary covariance.
    ``group[i]`` is the location index of observation ``i``.
    """

    locations: np.ndarray
    group: np.ndarray
    G: np.ndarray
    W: np.ndarray
    W1: np.ndarray
    gamma: float
    variance: float
    nu: float

    @property
    def k(self) -> int:
        return self.W1.shape[0]

    @property
    def n_obs(self) -> int:
        return self.group.size

    @property
    def F(self) -> np.ndarray:
        F = np.zeros(self.k)
        F[0] = 1.0
        return F


@dataclass(frozen=True)
class FilterState:
    b: np.ndarray  # one-step-ahead means per location (n_loc, k)
    B: np.ndarray  # one-step-ahead covariances (n_loc, k, k)
    m: np.ndarray  # filtered means after all observations at the location
    C: np.ndarray
    f: np.ndarray  # innovation means per observation (N,)
    Q: np.ndarray  # innovation variances per observation (N,)
    sigma0sq: float


@dataclass(frozen=True)
class SmootherState:
    s: np.ndarray
    S: np.ndarray
    filtered: FilterState


def build_state_space(x: np.ndarray, gamma: float, variance: float, nu: float) -> StateSpaceModel:
    """Build the state-space model for sorted 1-D inputs.

    Repeated inputs share one latent state; their observations are absorbed
    by successive measurement updates in the filter.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise PreconditionError("at least one input is required")
    if not np.all(np.isfinite(x)):
        raise DomainError("inputs must be finite")
    if np.any(np.diff(x) < 0):
        raise PreconditionError("inputs must be sorted in nondecreasing order")
    if not gamma > 0 or not variance > 0:
        raise DomainError(f"gamma and variance must be > 0, got {gamma}, {variance}")
    state_dimension(nu)

    locations, group = np.unique(x, return_inverse=True)
    G, W = transition_matrices(np.diff(locations, prepend=locations[0]), gamma, variance, nu)
    W1 = stationary_covariance(gamma, variance, nu)
    G[0] = np.eye(W1.shape[0])
    W[0] = W1
    return StateSpaceModel(locations, group.ravel(), G, W, W1, float(gamma), float(variance), float(nu))


def kalman_filter(model: StateSpaceModel, y: np.ndarray, sigma0sq: float) -> FilterState:
    """Forward recursion started from the stationary distribution N(0, W1)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != model.n_obs:
        raise PreconditionError(f"model has {model.n_obs} observations but y has {y.size}")
    if sigma0sq < 0:
        raise DomainError("noise variance must be nonnegative")

    n_loc, k = model.locations.size, model.k
    b = np.zeros((n_loc, k))
    B = np.zeros((n_loc, k, k))
    m = np.zeros((n_loc, k))
    C = np.zeros((n_loc, k, k))
    f = np.zeros(model.n_obs)
    Q = np.zeros(model.n_obs)

    obs = 0
    m_prev = np.zeros(k)
    C_prev = model.W1
    for t in range(n_loc):
        if t == 0:
            b_t, B_t = np.zeros(k), model.W1.copy()
        else:
            Gt = model.G[t]
            b_t = Gt @ m_prev
            B_t = Gt @ C_prev @ Gt.T + model.W[t]
        b[t], B[t] = b_t, B_t

        m_t, C_t = b_t, B_t
        while obs < model.n_obs and model.group[obs] == t:
            f_i = m_t[0]
            Q_i = C_t[0, 0] + sigma0sq
            if not Q_i > 0:
                raise NumericalError(f"innovation variance Q={Q_i:.3e} is not positive at observation {obs}")
            gain = C_t[:, 0] / Q_i
            m_t = m_t + gain * (y[obs] - f_i)
            C_t = C_t - np.outer(gain, gain) * Q_i
            C_t = 0.5 * (C_t + C_t.T)
            f[obs], Q[obs] = f_i, Q_i
            obs += 1
        m[t], C[t] = m_t, C_t
        m_prev, C_prev = m_t, C_t

    return FilterState(b, B, m, C, f, Q, float(sigma0sq))


def kalman_log_likelihood(model: StateSpaceModel, y: np.ndarray, sigma0sq: float) -> float:
    state = kalman_filter(model, y, sigma0sq)
    return log_likelihood_from_filter(state, y)


def log_likelihood_from_filter(state: FilterState, y: np.ndarray) -> float:
    resid = np.asarray(y, dtype=float).ravel() - state.f
    return float(np.sum(-0.5 * np.log(2.0 * np.pi * state.Q) - 0.5 * resid * resid / state.Q))


def _smoother_gain(C: np.ndarray, G_next: np.ndarray, B_next: np.ndarray) -> np.ndarray:
    """J = C G^T B^{-1}."""
    try:
        return np.linalg.solve(B_next, G_next @ C).T
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"one-step-ahead covariance is singular: {e}") from e


def rts_smoother(model: StateSpaceModel, state: FilterState) -> SmootherState:
    n_loc = model.locations.size
    s = np.empty_like(state.m)
    S = np.empty_like(state.C)
    s[-1], S[-1] = state.m[-1], state.C[-1]
    for t in range(n_loc - 2, -1, -1):
        J = _smoother_gain(state.C[t], model.G[t + 1], state.B[t + 1])
        s[t] = state.m[t] + J @ (s[t + 1] - state.b[t + 1])
        S_t = state.C[t] - J @ (state.B[t + 1] - S[t + 1]) @ J.T
        S[t] = 0.5 * (S_t + S_t.T)
    return SmootherState(s, S, state)


def predict_between(model: StateSpaceModel, smoother: SmootherState, x_star: float) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of the latent state at ``x_star``.

    Inside the training range the point is inserted as an unobserved state
    between its neighbours: filter prediction from the left neighbour, then
    one RTS step against the smoothed right neighbour. Outside it, the
    state is propagated forward from the last smoothed state or conditioned
    backward through the first one.
    """
    x_star = float(x_star)
    locs = model.locations
    pos = int(np.searchsorted(locs, x_star, side="left"))
    if pos < locs.size and locs[pos] == x_star:
        return smoother.s[pos].copy(), smoother.S[pos].copy()

    args = (model.gamma, model.variance, model.nu)
    if pos == locs.size:
        G, W = transition_matrices([x_star - locs[-1]], *args)
        mean = G[0] @ smoother.s[-1]
        cov = G[0] @ smoother.S[-1] @ G[0].T + W[0]
        return mean, 0.5 * (cov + cov.T)

    if pos == 0:
        G, _ = transition_matrices([locs[0] - x_star], *args)
        J = _smoother_gain(model.W1, G[0], model.W1)
        mean = J @ smoother.s[0]
        cov = model.W1 - J @ (model.W1 - smoother.S[0]) @ J.T
        return mean, 0.5 * (cov + cov.T)

    filt = smoother.filtered
    left = pos - 1
    G_in, W_in = transition_matrices([x_star - locs[left]], *args)
    G_out, W_out = transition_matrices([locs[pos] - x_star], *args)
    b_star = G_in[0] @ filt.m[left]
    B_star = G_in[0] @ filt.C[left] @ G_in[0].T + W_in[0]
    b_next = G_out[0] @ b_star
    B_next = G_out[0] @ B_star @ G_out[0].T + W_out[0]
    J = _smoother_gain(B_star, G_out[0], B_next)
    mean = b_star + J @ (smoother.s[pos] - b_next)
    cov = B_star - J @ (B_next - smoother.S[pos]) @ J.T
    return mean, 0.5 * (cov + cov.T)


# ─── Convenience Layer ──────────────────────────────────────────────────────

class StateSpaceGP:
    """Filter and smoother bundled for one data set and one parameter setting.

    Inputs need not be sorted; they are sorted once here and the outputs
    permuted along with them.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, gamma: float, variance: float = 1.0,
                 nu: float = 2.5, sigma0sq: float = 0.0):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.size != y.size:
            raise PreconditionError(f"{x.size} inputs but {y.size} outputs")
        order = np.argsort(x, kind="stable")
        self.x, self.y = x[order], y[order]
        self.sigma0sq = float(sigma0sq)
        self.model = build_state_space(self.x, gamma, variance, nu)
        self.filter_state = kalman_filter(self.model, self.y, self.sigma0sq)
        self.smoother_state = rts_smoother(self.model, self.filter_state)

    def log_likelihood(self) -> float:
        return log_likelihood_from_filter(self.filter_state, self.y)

    def predict(self, x_star: np.ndarray, noisy: bool = False) -> PredictiveDistribution:
        x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
        mean = np.empty(x_star.size)
        var = np.empty(x_star.size)
        for q, xs in enumerate(x_star):
            theta, cov = predict_between(self.model, self.smoother_state, xs)
            mean[q], var[q] = theta[0], cov[0, 0]
        if noisy:
            var = var + self.sigma0sq
        return PredictiveDistribution(mean=mean, variance=np.maximum(var, 0.0), df=None)


def profile_log_likelihood(x: np.ndarray, y: np.ndarray, gamma: float, nugget: float, nu: float = 2.5) -> Tuple[float, float]:
    """Log-likelihood with sigma^2 profiled out, for sigma0^2 = nugget * sigma^2.

    The innovation means do not depend on sigma^2 and the innovation
    variances scale with it, so one filter pass at sigma^2 = 1 suffices.

    Returns:
        (profile log-likelihood, sigma^2 estimate)
    """
    x = np.asarray(x, dtype=float).ravel()
    order = np.argsort(x, kind="stable")
    y = np.asarray(y, dtype=float).ravel()[order]
    state = kalman_filter(build_state_space(x[order], gamma, 1.0, nu), y, nugget)
    resid = y - state.f
    n = resid.size
    sigma2 = float(np.sum(resid * resid / state.Q) / n)
    if not sigma2 > 0:
        raise NumericalError("profiled variance is zero; outputs are identically predicted")
    value = -0.5 * n * np.log(2.0 * np.pi * sigma2) - 0.5 * np.sum(np.log(state.Q)) - 0.5 * n
    return float(value), sigma2


def fit_parameters(
    x: np.ndarray,
    y: np.ndarray,
    nu: float = 2.5,
    gamma_bounds: Tuple[float, float] = (1e-2, 1e2),
    nugget_bounds: Optional[Tuple[float, float]] = (1e-8, 1.0),
    grid_size: int = 12,
    sweeps: int = 2,
) -> Dict[str, float]:
    """Maximize the profile likelihood over (gamma, nugget) on the log scale.

    A coarse grid picks the start; bounded Brent searches then alternate
    over log gamma and log nugget. ``nugget_bounds=None`` fits gamma alone
    with a zero nugget.
    """
    def objective(log_gamma: float, log_nugget: Optional[float]) -> float:
        nugget = 0.0 if log_nugget is None else float(np.exp(log_nugget))
        try:
            return -profile_log_likelihood(x, y, float(np.exp(log_gamma)), nugget, nu)[0]
        except NumericalError:
            return np.inf

    lg_lo, lg_hi = np.log(gamma_bounds[0]), np.log(gamma_bounds[1])
    gamma_grid = np.linspace(lg_lo, lg_hi, grid_size)
    if nugget_bounds is None:
        nugget_grid = [None]
        ln_lo = ln_hi = None
    else:
        ln_lo, ln_hi = np.log(nugget_bounds[0]), np.log(nugget_bounds[1])
        nugget_grid = list(np.linspace(ln_lo, ln_hi, grid_size))

    best = min(((objective(lg, ln), lg, ln) for lg in gamma_grid for ln in nugget_grid), key=lambda t: t[0])
    if not np.isfinite(best[0]):
        raise NumericalError("profile likelihood is not finite anywhere on the search grid")
    _, log_gamma, log_nugget = best

    for _ in range(sweeps):
        res = minimize_scalar(lambda lg: objective(lg, log_nugget), bounds=(lg_lo, lg_hi), method="bounded")
        log_gamma = float(res.x)
        if log_nugget is not None:
            res = minimize_scalar(lambda ln: objective(log_gamma, ln), bounds=(ln_lo, ln_hi), method="bounded")
            log_nugget = float(res.x)

    gamma = float(np.exp(log_gamma))
    nugget = 0.0 if log_nugget is None else float(np.exp(log_nugget))
    value, sigma2 = profile_log_likelihood(x, y, gamma, nugget, nu)
    return {"gamma": gamma, "nugget": nugget, "variance": sigma2, "log_likelihood": value}


def joint_precision(model: StateSpaceModel) -> np.ndarray:
    """Precision of the stacked latent states, A^T D^{-1} A (dense, small N only).

    A is block lower-bidiagonal with identity blocks and -G_t below the
    diagonal; D is block-diagonal in W1, W_2, ..., so the result is block
    tri-diagonal.
    """
    n_loc, k = model.locations.size, model.k
    A = np.eye(n_loc * k)
    D_inv = np.zeros((n_loc * k, n_loc * k))
    for t in range(n_loc):
        sl = slice(t * k, (t + 1) * k)
        if t > 0:
            A[sl, (t - 1) * k:t * k] = -model.G[t]
        try:
            D_inv[sl, sl] = np.linalg.inv(model.W[t])
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"innovation covariance {t} is singular: {e}") from e
    Lam = A.T @ D_inv @ A
    return 0.5 * (Lam + Lam.T)
