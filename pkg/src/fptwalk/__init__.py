"""Exponential moments of random-walk first passage, visit, and last
exit functionals: finiteness classification, exact lattice series,
tilted Monte Carlo, and growth-rate asymptotics."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, DomainError, InconsistentTiltError,
                     InfiniteMomentError, SpecError)

__all__ = [
    "__version__",
    "ConvergenceError", "DomainError", "InconsistentTiltError",
    "InfiniteMomentError", "SpecError",
]
