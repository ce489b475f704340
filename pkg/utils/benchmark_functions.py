"""Deterministic test functions for the emulation and filter experiments."""

import numpy as np

BRANIN_BOUNDS = (np.array([-5.0, 0.0]), np.array([10.0, 15.0]))


def branin(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x1, x2 = X[:, 0], X[:, 1]
    a, b, c = 1.0, 5.1 / (4 * np.pi ** 2), 5.0 / np.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * np.pi)
    return a * (x2 - b * x1 ** 2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


def oscillating_1d(x: np.ndarray) -> np.ndarray:
    """sin(10 pi x) / (2x) + (x - 1)^4, used on [0.5, 2.5]."""
    x = np.asarray(x, dtype=float)
    return np.sin(10 * np.pi * x) / (2 * x) + (x - 1) ** 4
