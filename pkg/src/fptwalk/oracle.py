"""Closed-form reference values for three benchmark increment laws.

These serve as ground truth for the general-purpose pipeline: the simple
random walk (atoms +1/-1), the difference of two exponentials, and a
shifted heavy-tailed exponential law built so that the transform's
infimum sits at the domain endpoint with negative derivative (the
boundary case in which the last exit time keeps a finite exponential
moment at the critical exponent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import dist
from .dist import ExpDifference, LatticePmf, ShiftedHeavyExp
from .errors import DomainError


@dataclass
class OracleReport:
    example: str
    quantities: dict = field(default_factory=dict)
    assumptions: dict = field(default_factory=dict)


def _log_central_binom(n):
    """log C(2n, n), vectorized, stable for large n."""
    n = np.asarray(n, dtype=float)
    return gammaln(2 * n + 1) - 2 * gammaln(n + 1)


def srw_oracle(p, a, n_max=10_000):
    """Simple random walk P{X=1} = p in (1/2, 1).

    R = -log(2 sqrt(pq)), gamma0 = log(p/q)/2; tau is odd-valued with
    pmf (1/2q) C(2n,n) (2 sqrt(pq))^{2n} / (2^{2n}(2n-1)) at 2n-1, and
    rho is even-valued with pmf (p-q) C(2n,n) (pq)^n at 2n.
    """
    if not (0.5 < p < 1.0):
        raise DomainError(f"p must lie in (1/2, 1), got {p}")
    q = 1.0 - p
    R = -math.log(2.0 * math.sqrt(p * q))
    gamma0 = 0.5 * math.log(p / q)
    if a > R * (1 + 1e-12) + 1e-15:
        raise DomainError(f"a={a} exceeds R={R}")

    n = np.arange(1, n_max + 1)
    logc = _log_central_binom(n)
    log_tau_pmf = (-math.log(2 * q) + logc - 2 * n * math.log(2.0)
                   - np.log(2 * n - 1) + 2 * n * math.log(2 * math.sqrt(p * q)))
    tau_pmf = np.exp(log_tau_pmf)           # P{tau = 2n - 1}
    n0 = np.arange(0, n_max + 1)
    log_rho_pmf = (math.log(p - q) + _log_central_binom(n0)
                   + n0 * math.log(p * q))
    rho_pmf = np.exp(log_rho_pmf)           # P{rho = 2n}

    e_tau = float(np.sum(tau_pmf * np.exp(a * (2 * n - 1))))
    z = 4 * p * q * math.exp(2 * a)
    at_R = z >= 1.0 - 1e-12
    if at_R:
        e_rho = math.inf
        rho_term_exponent = _series_exponent(rho_pmf * np.exp(2 * a * n0))
    else:
        e_rho = float((p - q) / math.sqrt(1.0 - z))
        rho_term_exponent = None
    # closed forms via the binomial generating function
    e_tau_closed = (1.0 - math.sqrt(max(1.0 - z, 0.0))) / (2 * q * math.exp(a))

    return OracleReport(
        example="simple_random_walk",
        quantities={
            "R": R,
            "gamma0": gamma0,
            "tau_support": (2 * n - 1),
            "tau_pmf": tau_pmf,
            "rho_support": (2 * n0),
            "rho_pmf": rho_pmf,
            "E_e_a_tau": e_tau_closed,
            "E_e_a_tau_series": e_tau,
            "E_e_a_rho": e_rho,
            "rho_series_term_exponent": rho_term_exponent,
        },
        assumptions={"p": p, "a": a, "n_max": n_max},
    )


def _series_exponent(terms):
    """Fitted power of n of the trailing terms (divergence diagnostic)."""
    t = np.asarray(terms, dtype=float)
    n = len(t)
    lo = max(1, (n * 9) // 10)
    idx = np.arange(lo, n)
    sel = t[idx] > 0
    if sel.sum() < 10:
        return None
    return float(np.polyfit(np.log(idx[sel] + 1.0), np.log(t[idx][sel]), 1)[0])


def expdiff_oracle(alpha, kappa, a, n_max=10_000):
    """X = Y1 - Y2 with Y1 ~ Exp(alpha), Y2 ~ Exp(kappa), alpha < kappa.

    R = -log(4 alpha kappa / (alpha + kappa)^2), gamma0 = (kappa-alpha)/2;
    E e^{a tau} has a closed form, and rho has an explicit pmf whose
    critical series diverges like n^{-1/2}.
    """
    if not (0 < alpha < kappa):
        raise DomainError("requires 0 < alpha < kappa")
    R = -math.log(4 * alpha * kappa / (alpha + kappa) ** 2)
    gamma0 = (kappa - alpha) / 2.0
    if a > R * (1 + 1e-12) + 1e-15:
        raise DomainError(f"a={a} exceeds R={R}")

    disc = (alpha + kappa) ** 2 - 4 * alpha * kappa * math.exp(a)
    e_tau = (alpha + kappa - math.sqrt(max(disc, 0.0))) / (2 * alpha)

    n = np.arange(1, n_max + 1)
    # P{rho = n} = (kappa-alpha) alpha^n kappa^{n-1} C(2n-1, n) / (kappa+alpha)^{2n}
    logc = gammaln(2 * n) - gammaln(n + 1) - gammaln(n)
    log_pmf = (math.log(kappa - alpha) + n * math.log(alpha)
               + (n - 1) * math.log(kappa) + logc
               - 2 * n * math.log(alpha + kappa))
    rho_pmf = np.exp(log_pmf)
    rho_p0 = (kappa - alpha) / kappa

    at_R = abs(a - R) <= 1e-12 * max(1.0, R)
    weighted = rho_pmf * np.exp(a * n)
    if at_R:
        e_rho = math.inf
        exponent = _series_exponent(weighted)
    else:
        e_rho = float(rho_p0 + weighted.sum())
        exponent = None

    return OracleReport(
        example="exp_difference",
        quantities={
            "R": R,
            "gamma0": gamma0,
            "E_e_a_tau": e_tau,
            "rho_p0": rho_p0,
            "rho_support": n,
            "rho_pmf": rho_pmf,
            "E_e_a_rho": e_rho,
            "rho_series_term_exponent": exponent,
            "P_M_positive": 1.0 - alpha / kappa,
        },
        assumptions={"alpha": alpha, "kappa": kappa, "a": a, "n_max": n_max},
    )


def example3_construct(h, r, margin):
    """Boundary-case construction: shift the heavy-exponential density by
    s = psi'(h)/psi(h) + margin, forcing phi'(h) < 0 so that the
    infimum of phi sits at the endpoint h with R = -log phi(h)."""
    if margin <= 0:
        raise DomainError("margin must be positive")
    base = ShiftedHeavyExp(h=h, r=r, s=0.0)
    psi_h = dist.laplace(base, h)
    dpsi_h = dist.laplace_left_derivative(base, h)
    s = dpsi_h / psi_h + margin
    if s < 0:
        raise DomainError("construction needs a nonnegative shift; "
                          "increase margin")
    spec = ShiftedHeavyExp(h=h, r=r, s=s)
    phi_h = dist.laplace(spec, h)
    dphi_h = dist.laplace_left_derivative(spec, h)
    report = OracleReport(
        example="boundary_tilt",
        quantities={
            "psi_h": psi_h,
            "psi_prime_h": dpsi_h,
            "s": s,
            "phi_h": phi_h,
            "phi_prime_h": dphi_h,
            "R": -math.log(phi_h),
            "gamma0": h,
            "E_X_exp_neg_gamma0_X": -dphi_h,
        },
        assumptions={"h": h, "r": r, "margin": margin},
    )
    return spec, report
