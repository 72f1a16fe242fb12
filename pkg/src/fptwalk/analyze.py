"""Critical exponent, tilt root, and finiteness classification.

For walks with a negative part, the critical exponent is
R = -log inf_{t>=0} phi(t); the infimum is attained either at an interior
minimizer of the convex transform (the typical case, zero derivative) or
at the right endpoint of the transform's domain with strictly negative
left derivative (the boundary case, which is the only way the last exit
time keeps a finite exponential moment at a = R).

Nonnegative walks are routed to the simpler criterion a < -log P{X = 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy.optimize import brentq, minimize_scalar

from . import dist
from .errors import DomainError, InfiniteMomentError

# |phi'(gamma0)| below this counts as an interior (flat) minimum; above it,
# a minimizer at the domain endpoint is classified as a boundary case.
FLATNESS_TOL = 1e-7
_REL_TOL = 1e-10


@dataclass(frozen=True)
class CriticalData:
    R: float                     # -log inf phi; may be inf (nonneg, beta = 0)
    gamma0: Optional[float]      # argmin of phi; None when R = inf or R = 0
    boundary: bool               # inf attained at t_max with phi' < 0 there
    t_max: float
    phi_prime_at_gamma0: Optional[float]
    nonnegative: bool            # P{X >= 0} = 1 branch
    beta: float                  # P{X = 0}


@dataclass(frozen=True)
class FinitenessVerdict:
    quantity: str                # tau | N | rho
    finite: bool
    reason: str


def critical_data(spec: dist.IncrementSpec) -> CriticalData:
    """Locate the infimum of phi and classify interior vs boundary."""
    tm = dist.t_max(spec)
    if not dist.has_negative_part(spec):
        beta = dist.prob_zero(spec)
        if beta >= 1.0:
            raise DomainError("degenerate law X = 0 a.s.")
        R = math.inf if beta == 0.0 else -math.log(beta)
        return CriticalData(R=R, gamma0=None, boundary=False, t_max=tm,
                            phi_prime_at_gamma0=None, nonnegative=True,
                            beta=beta)

    phi = lambda t: dist.laplace(spec, t)
    dphi = lambda t: dist.laplace_left_derivative(spec, t)

    if math.isinf(tm):
        # lattice law with a negative atom: phi -> inf, bracket by doubling
        hi = 1.0
        while phi(2 * hi) <= phi(hi):
            hi *= 2
            if hi > 1e12:
                raise DomainError("could not bracket the minimum of phi")
        hi *= 2
        lo_end, hi_end = 0.0, hi
        endpoint_open = True
    else:
        lo_end = 0.0
        if math.isinf(phi(tm)):
            # open domain endpoint (ExpDifference): interior minimum certain
            hi_end = tm * (1.0 - 1e-9)
            endpoint_open = True
        else:
            hi_end = tm
            endpoint_open = False

    res = minimize_scalar(phi, bounds=(lo_end, hi_end), method="bounded",
                          options={"xatol": 1e-12})
    t_star = float(res.x)

    # polish the minimizer with a derivative root when the sign changes
    boundary = False
    if not endpoint_open and hi_end - t_star < 1e-6 and dphi(hi_end) < 0:
        # derivative still negative at the closed endpoint: boundary minimum
        gamma0 = hi_end
        boundary = dphi(hi_end) < -FLATNESS_TOL
    else:
        eps = max(1e-9, 1e-9 * t_star)
        a, b = max(1e-14, t_star - 1e-3), min(hi_end, t_star + 1e-3)
        try:
            if dphi(a) < 0 < dphi(b):
                gamma0 = brentq(dphi, a, b, xtol=1e-14)
            else:
                gamma0 = t_star
        except (ValueError, DomainError):
            gamma0 = t_star

    phi_min = phi(gamma0)
    dphi_g0 = dphi(gamma0) if gamma0 > 0 else 0.0
    R = -math.log(phi_min)
    if R <= _REL_TOL:
        # inf phi = 1: no positive exponent exists (nonpositive drift)
        return CriticalData(R=0.0, gamma0=None, boundary=False, t_max=tm,
                            phi_prime_at_gamma0=None, nonnegative=False,
                            beta=dist.prob_zero(spec))
    return CriticalData(R=R, gamma0=float(gamma0), boundary=bool(boundary),
                        t_max=tm, phi_prime_at_gamma0=float(dphi_g0),
                        nonnegative=False, beta=dist.prob_zero(spec))


def gamma_of(spec: dist.IncrementSpec, a: float, crit: CriticalData = None):
    """Minimal gamma > 0 with phi(gamma) = exp(-a); see tilt.TiltParams.

    Raises InfiniteMomentError when no root exists (a beyond the critical
    exponent), naming the criterion that fired.
    """
    from .tilt import TiltParams  # deferred to avoid an import cycle

    if a <= 0:
        raise DomainError(f"a must be positive, got {a}")
    if crit is None:
        crit = critical_data(spec)
    target = math.exp(-a)
    phi = lambda t: dist.laplace(spec, t)

    if crit.nonnegative:
        if not (a < -math.log(crit.beta) if crit.beta > 0 else True):
            raise InfiniteMomentError(
                f"a={a} >= -log beta={-math.log(crit.beta)}: all exponential "
                "moments are infinite for a nonnegative walk",
                reason="a >= -log beta")
        hi = 1.0
        while phi(hi) > target:
            hi *= 2
            if hi > 1e12:
                raise DomainError("could not bracket the tilt root")
        gamma = brentq(lambda t: phi(t) - target, 0.0, hi, xtol=1e-15)
    else:
        if crit.R == 0.0:
            raise InfiniteMomentError(
                "no positive exponent exists: inf phi = 1 (nonpositive drift)",
                reason="R = 0")
        if a > crit.R * (1.0 + _REL_TOL) + 1e-14:
            raise InfiniteMomentError(
                f"a={a} exceeds the critical exponent R={crit.R}: "
                "no tilt root exists",
                reason="a > R")
        a_eff = min(a, crit.R)
        if a_eff == crit.R:
            gamma = crit.gamma0
        else:
            gamma = brentq(lambda t: phi(t) - math.exp(-a_eff),
                           0.0, crit.gamma0, xtol=1e-15)

    gamma = float(gamma)
    witness = abs(math.exp(a) * phi(gamma) - 1.0)
    if witness > 1e-9:
        raise DomainError(
            f"tilt root failed to converge: |e^a phi(gamma) - 1| = {witness:.2e}")
    return TiltParams(a=a, gamma=gamma, witness=witness)


def classify(spec: dist.IncrementSpec, a: float, crit: CriticalData = None):
    """Finiteness verdicts for (tau, N, rho) at exponent a > 0."""
    if a <= 0:
        raise DomainError(f"a must be positive, got {a}")
    if crit is None:
        crit = critical_data(spec)

    if crit.nonnegative:
        bound = math.inf if crit.beta == 0.0 else -math.log(crit.beta)
        fin = a < bound
        reason = ("a < -log beta" if fin else "a >= -log beta")
        return tuple(FinitenessVerdict(q, fin, reason)
                     for q in ("tau", "N", "rho"))

    if crit.R == 0.0:
        return tuple(FinitenessVerdict(q, False, "R = 0 (nonpositive drift)")
                     for q in ("tau", "N", "rho"))

    at_R = abs(a - crit.R) <= crit.R * _REL_TOL + 1e-14
    below_R = a < crit.R and not at_R
    tau_fin = below_R or at_R
    if below_R:
        reason_tn = "a < R"
        rho_fin, reason_rho = True, "a < R"
    elif at_R:
        reason_tn = "a = R"
        if crit.boundary:
            rho_fin, reason_rho = True, "a = R with E X exp(-gamma0 X) > 0"
        else:
            rho_fin, reason_rho = False, "a = R with interior minimum"
    else:
        reason_tn = "a > R"
        rho_fin, reason_rho = False, "a > R"
    return (FinitenessVerdict("tau", tau_fin, reason_tn),
            FinitenessVerdict("N", tau_fin, reason_tn),
            FinitenessVerdict("rho", rho_fin, reason_rho))
