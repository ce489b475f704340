"""Sorted pairwise-distance index for the sparse interaction-kernel estimator.

Every frame (simulation m, time step l) contributes n(n-1)/2 particle pairs.
All positive pair distances across frames are sorted; distances equal to
within a relative 1e-12 are merged into one entry so consecutive sorted
distances are strictly increasing. The velocity vector uses the layout
k = f*nD + j*n + i with frame f = m*L + l.
"""

from dataclasses import dataclass

import numpy as np

import config
from .errors import PreconditionError
from .particle_sim import TrajectoryEnsemble


@dataclass(frozen=True)
class DistanceIndex:
    """Index structures for matrix-free products with U_s and U_s^T.

    Attributes:
        d_s: Sorted unique positive distances (Ñ,)
        multiplicity: Number of pairs merged into each entry of d_s
        rho: exp(-(d_s[k+1] - d_s[k]) / gamma), shape (Ñ-1,)
        innovation: sqrt(1 - rho^2) computed without cancellation
        U_re: (F*D*n, n) differences x_{i',j} - x_{i,j} per (frame, j, i) row
        P_c: (F*n, n) rank of the pair (i, i') in d_s; -1 on the diagonal and
            for coincident particles
        P_r: (n_pairs, 2) particle rows f*n + b and f*n + a of each pair a < b,
            ordered by distance
        pair_rank: rank in d_s of each row of P_r
    """

    d_s: np.ndarray
    multiplicity: np.ndarray
    rho: np.ndarray
    innovation: np.ndarray
    U_re: np.ndarray
    P_c: np.ndarray
    P_r: np.ndarray
    pair_rank: np.ndarray
    gamma: float
    n_frames: int
    n: int
    D: int

    @property
    def n_unique(self) -> int:
        return self.d_s.size

    @property
    def N(self) -> int:
        return self.n_frames * self.D * self.n

    @property
    def pair_frame(self) -> np.ndarray:
        return self.P_r[:, 0] // self.n

    @property
    def pair_a(self) -> np.ndarray:
        return self.P_r[:, 1] % self.n

    @property
    def pair_b(self) -> np.ndarray:
        return self.P_r[:, 0] % self.n


def merge_ties(sorted_d: np.ndarray, gamma: float, rtol: float = config.TIE_RELATIVE_TOLERANCE) -> np.ndarray:
    """Group index of each sorted distance after merging near-equal neighbours.

    Neighbours closer than ``rtol`` relative, or close enough that
    exp(-gap/gamma) rounds to 1, share a group.
    """
    if sorted_d.size == 0:
        return np.zeros(0, dtype=np.int64)
    gaps = np.diff(sorted_d)
    tol = np.maximum(rtol * sorted_d[1:], gamma * np.finfo(float).eps)
    new_group = gaps > tol
    return np.concatenate(([0], np.cumsum(new_group))).astype(np.int64)


def build_distance_index(traj: TrajectoryEnsemble, gamma: float) -> DistanceIndex:
    if traj.n < 2:
        raise PreconditionError("at least two particles are required")
    if not gamma > 0:
        raise PreconditionError(f"gamma must be > 0, got {gamma}")

    X = traj.frames()  # (F, n, D)
    F, n, D = X.shape
    ia, ib = np.triu_indices(n, 1)
    diff = X[:, ib, :] - X[:, ia, :]                   # (F, P, D)
    dist = np.sqrt(np.sum(diff * diff, axis=2))        # (F, P)

    positive = dist > 0
    empty = ~positive.any(axis=1)
    if np.any(empty):
        raise PreconditionError(f"all particles coincide in frame {int(np.argmax(empty))}; no positive distances")

    frame_of = np.broadcast_to(np.arange(F)[:, None], dist.shape)[positive]
    a_of = np.broadcast_to(ia[None, :], dist.shape)[positive]
    b_of = np.broadcast_to(ib[None, :], dist.shape)[positive]
    d_all = dist[positive]

    order = np.argsort(d_all, kind="stable")
    d_sorted = d_all[order]
    groups = merge_ties(d_sorted, gamma)
    n_unique = int(groups[-1]) + 1
    starts = np.concatenate(([0], np.flatnonzero(np.diff(groups)) + 1))
    d_s = d_sorted[starts]
    multiplicity = np.bincount(groups, minlength=n_unique)

    gaps = np.diff(d_s)
    rho = np.exp(-gaps / gamma)
    innovation = np.sqrt(-np.expm1(-2.0 * gaps / gamma))

    frame_s, a_s, b_s = frame_of[order], a_of[order], b_of[order]
    P_r = np.stack([frame_s * n + b_s, frame_s * n + a_s], axis=1).astype(np.int64)

    P_c = np.full((F, n, n), -1, dtype=np.int64)
    P_c[frame_s, a_s, b_s] = groups
    P_c[frame_s, b_s, a_s] = groups

    # U_re[(f, j, i), i'] = x_{f,i',j} - x_{f,i,j}
    Xt = X.transpose(0, 2, 1)                          # (F, D, n)
    U_re = Xt[:, :, None, :] - Xt[:, :, :, None]       # (F, D, n, n)

    return DistanceIndex(
        d_s=d_s,
        multiplicity=multiplicity,
        rho=rho,
        innovation=innovation,
        U_re=U_re.reshape(F * D * n, n),
        P_c=P_c.reshape(F * n, n),
        P_r=P_r,
        pair_rank=groups,
        gamma=float(gamma),
        n_frames=F,
        n=n,
        D=D,
    )
