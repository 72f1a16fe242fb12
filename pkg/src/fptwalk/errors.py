"""Exception taxonomy shared across the library.

The CLI maps these onto exit codes: bad input -> 1, a mathematically
infinite quantity that was refused -> 2.
"""


class SpecError(ValueError):
    """Malformed or unsupported increment specification."""


class DomainError(ValueError):
    """Argument outside the domain of a transform or operation."""


class InconsistentTiltError(ValueError):
    """Tilt parameters that do not satisfy phi(gamma) = exp(-a)."""


class InfiniteMomentError(RuntimeError):
    """The requested exponential moment is infinite; computation refused.

    Carries the criterion that fired so callers can report why.
    """

    def __init__(self, message, reason=None):
        super().__init__(message)
        self.reason = reason


class ConvergenceError(RuntimeError):
    """A numerical routine failed to reach its requested tolerance."""
