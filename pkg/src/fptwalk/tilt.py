"""Exponential change of measure on increment specs.

Under the tilted measure the walk gains weight exp(an - gamma * S_n), so
the increment law transforms as dP_gamma/dP (x) = exp(a - gamma * x).
LatticePmf and ExpDifference are closed under this transformation; the
heavy-exponential family tilts into the dedicated TiltedHeavyExp wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dist
from .errors import DomainError, InconsistentTiltError, SpecError

_WITNESS_TOL = 1e-9


@dataclass(frozen=True)
class TiltParams:
    """Tilt exponent a, root gamma with phi(gamma) = exp(-a), and the
    normalization witness |exp(a) * phi(gamma) - 1| recorded at creation."""

    a: float
    gamma: float
    witness: float

    def __post_init__(self):
        if self.a <= 0 or self.gamma <= 0:
            raise DomainError("tilt requires a > 0 and gamma > 0")


def _check_consistent(spec, params):
    w = abs(math.exp(params.a) * dist.laplace(spec, params.gamma) - 1.0)
    if w > _WITNESS_TOL:
        raise InconsistentTiltError(
            f"phi(gamma) != exp(-a): witness {w:.3e} exceeds {_WITNESS_TOL:.0e}")


def tilt_spec(spec: dist.IncrementSpec, params: TiltParams) -> dist.IncrementSpec:
    """Law of the increment under the tilted measure."""
    _check_consistent(spec, params)
    a, g = params.a, params.gamma
    if isinstance(spec, dist.LatticePmf):
        w = np.exp(a - g * spec.values) * spec.probs
        # renormalize away the residual witness so downstream invariants
        # (mass = 1 within 1e-12) hold exactly
        w = w / w.sum()
        return dist.LatticePmf(tuple(zip(spec.values.tolist(), w.tolist())))
    if isinstance(spec, dist.ExpDifference):
        if g >= spec.kappa:
            raise DomainError(
                f"gamma={g} >= kappa={spec.kappa}: tilt leaves the family")
        return dist.ExpDifference(spec.alpha + g, spec.kappa - g)
    if isinstance(spec, dist.ShiftedHeavyExp):
        return dist.TiltedHeavyExp(base=spec, a=a, gamma=g)
    raise SpecError(f"cannot tilt spec of type {type(spec)!r}")


def tilted_mean(spec: dist.IncrementSpec, params: TiltParams) -> float:
    """E_gamma X = -exp(a) * phi'(gamma); nonnegative whenever a <= R."""
    _check_consistent(spec, params)
    m = -math.exp(params.a) * dist.laplace_left_derivative(spec, params.gamma)
    if m < -1e-9:
        raise InconsistentTiltError(
            f"tilted mean {m} is negative: gamma={params.gamma} is not the "
            "minimal root for this a")
    return m
