"""Exception types raised by the numerical modules.

Library code raises these; the experiment runner catches them and turns them
into result dictionaries with ``success=False``.
"""

from typing import Optional


class MarginalError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MarginalError, ValueError):
    """An argument lies outside the domain of the operation (e.g. d < 0)."""


class PreconditionError(MarginalError, ValueError):
    """Inputs violate a structural requirement (unsorted, too few points, shape mismatch)."""


class ConfigError(MarginalError, ValueError):
    """An experiment configuration could not be parsed or validated."""


class NumericalError(MarginalError, ArithmeticError):
    """A factorization or recursion failed (non-PD matrix, Q_i <= 0, singular system)."""

    def __init__(self, message: str, condition: Optional[float] = None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class ConvergenceError(NumericalError):
    """Conjugate gradient stopped at the iteration cap before reaching the tolerance."""

    def __init__(self, iterations: int, residual: float, tolerance: float):
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e} > tolerance {tolerance:.1e})"
        )
        self.iterations = iterations
        self.residual = residual
        self.tolerance = tolerance


class SimulationError(NumericalError):
    """A particle rollout produced non-finite values."""

    def __init__(self, step: int, detail: str = "non-finite positions"):
        super().__init__(f"Simulation blew up at step {step}: {detail}")
        self.step = step
