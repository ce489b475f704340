"""First-order interacting particle system: kernels, initial designs, Euler rollouts."""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from scipy.stats import loguniform

import config
from .errors import DomainError, PreconditionError, SimulationError
from .schemas import InitialDesign

InteractionKernel = Callable[[np.ndarray], np.ndarray]

# ─── Benchmark Interaction Kernels ──────────────────────────────────────────

LJ_CUTOFF = 0.95
LJ_C3 = 8.0 / 3.0 * (LJ_CUTOFF ** -4 - LJ_CUTOFF ** -10)
LJ_C4 = 8.0 / 3.0 * (10.0 * LJ_CUTOFF ** -11 - 4.0 * LJ_CUTOFF ** -5)
LJ_C1 = -LJ_C4 / (12.0 * LJ_C3 * LJ_CUTOFF ** 11)
LJ_C2 = LJ_C3 * np.exp(LJ_C1 * LJ_CUTOFF ** 12)

OD_C5 = 1.0 / np.sqrt(2.0) - 0.05
OD_C6 = 1.0 / np.sqrt(2.0) + 0.05


def _as_distances(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("distances must be nonnegative")
    return d


def phi_truncated_lj(d):
    """Lennard-Jones interaction with the singular core replaced by c2 exp(-c1 d^12)."""
    d = _as_distances(d)
    out = np.piecewise(
        d,
        [d <= LJ_CUTOFF, d > LJ_CUTOFF],
        [lambda t: LJ_C2 * np.exp(-LJ_C1 * t ** 12),
         lambda t: 8.0 / 3.0 * (t ** -4 - t ** -10)],
    )
    return float(out) if out.ndim == 0 else out


def phi_od(d):
    """Opinion-dynamics interaction; zero beyond 1.05."""
    d = _as_distances(d)
    out = np.piecewise(
        d,
        [d < OD_C5,
         (d >= OD_C5) & (d < OD_C6),
         (d >= OD_C6) & (d < 0.95),
         (d >= 0.95) & (d < 1.05)],
        [0.4,
         lambda t: -0.3 * np.cos(10.0 * np.pi * (t - OD_C5)) + 0.7,
         1.0,
         lambda t: 0.5 * np.cos(10.0 * np.pi * (t - 0.95)) + 0.5,
         0.0],
    )
    return float(out) if out.ndim == 0 else out


KERNELS: Dict[str, InteractionKernel] = {"lj": phi_truncated_lj, "od": phi_od}
KERNEL_GRIDS = {"lj": config.LJ_GRID, "od": config.OD_GRID}


def get_kernel(name: str) -> InteractionKernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise DomainError(f"unknown interaction kernel '{name}', expected one of {sorted(KERNELS)}") from None


def zero_kernel(d):
    return np.zeros_like(np.asarray(d, dtype=float))


# ─── Trajectories ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Positions and recorded velocities, both shaped (M, L, n, D)."""

    positions: np.ndarray
    velocities: np.ndarray
    dt: float
    noise_variance: float = 0.0
    record_every: int = 1

    def __post_init__(self):
        if self.positions.ndim != 4 or self.positions.shape != self.velocities.shape:
            raise PreconditionError(
                f"positions {self.positions.shape} and velocities {self.velocities.shape} must both be (M, L, n, D)"
            )
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise PreconditionError("trajectory entries must be finite")

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    @property
    def L(self) -> int:
        return self.positions.shape[1]

    @property
    def n(self) -> int:
        return self.positions.shape[2]

    @property
    def D(self) -> int:
        return self.positions.shape[3]

    @property
    def N(self) -> int:
        """Number of scalar velocity observations, n D M L."""
        return self.velocities.size

    def frames(self) -> np.ndarray:
        """Positions as (M*L, n, D), frame index m*L + l."""
        return self.positions.reshape(self.M * self.L, self.n, self.D)

    def velocity_vector(self) -> np.ndarray:
        """Velocities flattened as k = m*LnD + l*nD + j*n + i."""
        return np.ascontiguousarray(self.velocities.transpose(0, 1, 3, 2)).ravel()

    @staticmethod
    def concatenate(runs) -> "TrajectoryEnsemble":
        runs = list(runs)
        return TrajectoryEnsemble(
            positions=np.concatenate([r.positions for r in runs], axis=0),
            velocities=np.concatenate([r.velocities for r in runs], axis=0),
            dt=runs[0].dt,
            noise_variance=runs[0].noise_variance,
            record_every=runs[0].record_every,
        )


def sample_initial(design: InitialDesign, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Draw an n×D matrix of i.i.d. initial coordinates from the design.

    The normal design's second parameter is a variance.
    """
    rng = rng if rng is not None else np.random.default_rng(design.seed)
    size = (design.n, design.D)
    if design.family == "uniform":
        return rng.uniform(design.a, design.b, size=size)
    if design.family == "normal":
        return rng.normal(design.a, np.sqrt(design.b), size=size)
    if design.family == "log-uniform":
        if design.a <= 0:
            raise DomainError(f"log-uniform design requires a > 0, got {design.a}")
        return loguniform(design.a, design.b).rvs(size=size, random_state=rng)
    raise DomainError(f"unknown design family '{design.family}'")


def pairwise_weights(positions: np.ndarray, phi: InteractionKernel) -> np.ndarray:
    """Symmetric n×n matrix phi(||x_j - x_i||) with a zero diagonal."""
    n = positions.shape[0]
    ia, ib = np.triu_indices(n, 1)
    dist = np.linalg.norm(positions[ib] - positions[ia], axis=1)
    weights = np.zeros((n, n))
    if ia.size:
        w = np.asarray(phi(dist), dtype=float)
        weights[ia, ib] = w
        weights[ib, ia] = w
    return weights


def velocity_field(positions: np.ndarray, phi: InteractionKernel) -> np.ndarray:
    """v_i = sum_{j != i} phi(||x_j - x_i||) (x_j - x_i)."""
    positions = np.asarray(positions, dtype=float)
    weights = pairwise_weights(positions, phi)
    return weights @ positions - weights.sum(axis=1)[:, None] * positions


def simulate(
    init: np.ndarray,
    phi: InteractionKernel,
    L: int,
    dt: float = config.SIM_DT,
    noise_variance: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    record_every: int = 1,
    seed: Optional[int] = None,
) -> TrajectoryEnsemble:
    """Forward-Euler rollout recording L frames, ``record_every`` steps apart.

    Noise N(0, noise_variance) is added to the recorded velocities only;
    the integration uses the exact velocity field. Without ``rng`` the noise
    comes from ``seed``, or the configured default seed.
    """
    if L < 1 or not dt > 0 or record_every < 1:
        raise PreconditionError(
            f"need L >= 1, dt > 0 and record_every >= 1, got L={L}, dt={dt}, record_every={record_every}"
        )
    x = np.array(init, dtype=float)
    n, D = x.shape
    positions = np.empty((L, n, D))
    velocities = np.empty((L, n, D))
    total_steps = (L - 1) * record_every
    for step in range(total_steps + 1):
        if not np.all(np.isfinite(x)):
            raise SimulationError(step)
        v = velocity_field(x, phi)
        if not np.all(np.isfinite(v)):
            raise SimulationError(step, "non-finite velocities")
        if step % record_every == 0:
            positions[step // record_every] = x
            velocities[step // record_every] = v
        if step < total_steps:
            x = x + dt * v

    if noise_variance > 0:
        if rng is None:
            rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
        velocities = velocities + rng.normal(0.0, np.sqrt(noise_variance), size=velocities.shape)
    return TrajectoryEnsemble(positions[None], velocities[None], float(dt), float(noise_variance), record_every)


def simulate_ensemble(
    design: InitialDesign,
    phi: InteractionKernel,
    M: int,
    L: int,
    dt: float = config.SIM_DT,
    noise_variance: float = 0.0,
    seed: Optional[int] = None,
    record_every: int = 1,
) -> TrajectoryEnsemble:
    """M independent runs; run m draws its start and noise from its own child seed."""
    seed = design.seed if seed is None else seed
    seed = config.DEFAULT_SEED if seed is None else seed
    runs = []
    for child in np.random.SeedSequence(seed).spawn(M):
        rng = np.random.default_rng(child)
        runs.append(simulate(sample_initial(design, rng), phi, L, dt, noise_variance, rng, record_every))
    return TrajectoryEnsemble.concatenate(runs)


def forecast(init: np.ndarray, phi_hat: InteractionKernel, steps: int, dt: float = config.SIM_DT) -> np.ndarray:
    """Noise-free rollout under an (estimated) kernel; returns positions (steps, n, D)."""
    return simulate(init, phi_hat, steps, dt, 0.0).positions[0]


def spread(positions: np.ndarray) -> float:
    """Root-mean-square distance of the particles to their centroid."""
    positions = np.asarray(positions, dtype=float)
    centered = positions - positions.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(centered * centered, axis=1))))
