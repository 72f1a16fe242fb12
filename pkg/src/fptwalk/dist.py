"""Increment distributions and their Laplace transforms.

Three user-facing families are supported:

* ``LatticePmf`` -- finitely supported law given by (value, prob) atoms;
* ``ExpDifference`` -- X = Y1 - Y2 with Y1 ~ Exp(alpha), Y2 ~ Exp(kappa);
* ``ShiftedHeavyExp`` -- a point shift s convolved with the density
  ``c * exp(-h|x|) / (1 + |x|^r)``, whose transform is finite on [0, h]
  with a finite one-sided derivative at the endpoint (requires r > 2).

A fourth internal family, ``TiltedHeavyExp``, represents the exponentially
tilted version of ``ShiftedHeavyExp`` (the other two families are closed
under tilting, so they never need it).

Each family provides the transform phi(t) = E exp(-tX) on [0, t_max],
its (left) derivative, lattice-structure detection, and i.i.d. sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.integrate import quad

from .errors import ConvergenceError, DomainError, SpecError

_ATOM_PROB_TOL = 1e-12
_MAX_DENOMINATOR = 10**6
_QUAD_REL_TOL = 1e-10


@dataclass(frozen=True)
class LatticePmf:
    """Finitely supported increment law; atoms are (value, prob) pairs."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise SpecError("LatticePmf needs at least one atom")
        vals = [v for v, _ in atoms]
        if len(set(vals)) != len(vals):
            raise SpecError("LatticePmf atom values must be pairwise distinct")
        for v, p in atoms:
            if not (0.0 < p <= 1.0):
                raise SpecError(f"atom probability {p} outside (0, 1]")
            if not math.isfinite(v):
                raise SpecError("atom values must be finite")
        total = math.fsum(p for _, p in atoms)
        if abs(total - 1.0) > _ATOM_PROB_TOL:
            raise SpecError(f"atom probabilities sum to {total}, not 1")

    @property
    def values(self):
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self):
        return np.array([p for _, p in self.atoms])


@dataclass(frozen=True)
class ExpDifference:
    """X = Y1 - Y2, Y1 ~ Exp(alpha), Y2 ~ Exp(kappa), 0 < alpha < kappa."""

    alpha: float
    kappa: float

    def __post_init__(self):
        if not (0.0 < self.alpha < self.kappa < math.inf):
            raise SpecError(
                "ExpDifference requires 0 < alpha < kappa < inf, got "
                f"alpha={self.alpha}, kappa={self.kappa}"
            )


@dataclass(frozen=True)
class ShiftedHeavyExp:
    """Shift s plus the density c * exp(-h|x|) / (1 + |x|^r)."""

    h: float
    r: float
    s: float = 0.0

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise SpecError(f"h must be positive and finite, got {self.h}")
        if not (self.r > 2):
            raise SpecError(f"r must exceed 2 (finite derivative at h), got {self.r}")
        if not (self.s >= 0):
            raise SpecError(f"shift s must be nonnegative, got {self.s}")


@dataclass(frozen=True)
class TiltedHeavyExp:
    """Exponential tilt of a ShiftedHeavyExp base by gamma, at exponent a.

    Density proportional to exp(-gamma * x) times the base density; the
    normalization is exp(a) because phi_base(gamma) = exp(-a).
    """

    base: ShiftedHeavyExp
    a: float
    gamma: float

    def __post_init__(self):
        if not (0.0 < self.gamma <= self.base.h):
            raise SpecError(
                f"tilt gamma={self.gamma} outside (0, h={self.base.h}]"
            )


IncrementSpec = Union[LatticePmf, ExpDifference, ShiftedHeavyExp, TiltedHeavyExp]


@dataclass(frozen=True)
class LatticeStructure:
    """Lattice classification of an increment law.

    kind is one of "non_lattice", "lattice" (span lam), or
    "offset_lattice" (support in offset + lam * Z with offset not in lam * Z).
    """

    kind: str
    span: float = 0.0
    offset: float = 0.0

    @property
    def is_lattice(self):
        return self.kind == "lattice"


# ---------------------------------------------------------------------------
# Heavy-exponential quadrature
# ---------------------------------------------------------------------------

def _half_line_integral(rate, r, power=0):
    """integral_0^inf u^power * exp(-rate*u) / (1 + u^r) du, rate >= 0.

    Finite for rate > 0 always, and for rate == 0 when r - power > 1.
    """
    if rate < 0:
        raise DomainError("negative decay rate in half-line integral")
    if rate == 0 and r - power <= 1:
        return math.inf

    def f(u):
        return u**power * math.exp(-rate * u) / (1.0 + u**r)

    val, err = quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    if val > 0 and err / val > _QUAD_REL_TOL:
        raise ConvergenceError(
            f"quadrature achieved relative error {err / val:.2e}, "
            f"requested {_QUAD_REL_TOL:.0e}"
        )
    return val


@lru_cache(maxsize=None)
def _heavy_norm_const(h, r):
    """Normalizer c of the density c * exp(-h|x|)/(1+|x|^r)."""
    return 1.0 / (2.0 * _half_line_integral(h, r))


@lru_cache(maxsize=None)
def _psi(h, r, t):
    """Transform of the unshifted density at t in [0, h]; inf beyond."""
    if t > h:
        return math.inf
    c = _heavy_norm_const(h, r)
    return c * (_half_line_integral(h + t, r) + _half_line_integral(h - t, r))


@lru_cache(maxsize=None)
def _psi_prime(h, r, t):
    """Left derivative of psi at t in (0, h]; finite at h because r > 2."""
    if t > h:
        raise DomainError(f"t={t} beyond transform domain endpoint h={h}")
    c = _heavy_norm_const(h, r)
    return c * (
        _half_line_integral(h - t, r, power=1)
        - _half_line_integral(h + t, r, power=1)
    )


# ---------------------------------------------------------------------------
# Transform evaluation
# ---------------------------------------------------------------------------

def t_max(spec: IncrementSpec) -> float:
    """Supremum of {t >= 0 : phi(t) < inf}. Closed endpoint only for the
    heavy-exponential families."""
    if isinstance(spec, LatticePmf):
        return math.inf
    if isinstance(spec, ExpDifference):
        return spec.kappa
    if isinstance(spec, ShiftedHeavyExp):
        return spec.h
    if isinstance(spec, TiltedHeavyExp):
        return spec.base.h - spec.gamma
    raise SpecError(f"unknown spec type {type(spec)!r}")


def laplace(spec: IncrementSpec, t: float) -> float:
    """phi(t) = E exp(-tX) as an extended real (math.inf off-domain)."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if isinstance(spec, LatticePmf):
        return float(np.exp(-t * spec.values) @ spec.probs)
    if isinstance(spec, ExpDifference):
        if t >= spec.kappa:
            return math.inf
        return spec.alpha * spec.kappa / ((spec.alpha + t) * (spec.kappa - t))
    if isinstance(spec, ShiftedHeavyExp):
        if t > spec.h:
            return math.inf
        return math.exp(-spec.s * t) * _psi(spec.h, spec.r, t)
    if isinstance(spec, TiltedHeavyExp):
        if t > spec.base.h - spec.gamma:
            return math.inf
        return math.exp(spec.a) * laplace(spec.base, t + spec.gamma)
    raise SpecError(f"unknown spec type {type(spec)!r}")


def laplace_left_derivative(spec: IncrementSpec, t: float) -> float:
    """Left derivative of phi at t in (0, t_max]."""
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}")
    if isinstance(spec, LatticePmf):
        return float(-(spec.values * np.exp(-t * spec.values)) @ spec.probs)
    if isinstance(spec, ExpDifference):
        if t >= spec.kappa:
            raise DomainError(f"t={t} outside transform domain [0, {spec.kappa})")
        phi = laplace(spec, t)
        return phi * (1.0 / (spec.kappa - t) - 1.0 / (spec.alpha + t))
    if isinstance(spec, ShiftedHeavyExp):
        if t > spec.h:
            raise DomainError(f"t={t} outside transform domain [0, {spec.h}]")
        psi = _psi(spec.h, spec.r, t)
        dpsi = _psi_prime(spec.h, spec.r, t)
        return math.exp(-spec.s * t) * (dpsi - spec.s * psi)
    if isinstance(spec, TiltedHeavyExp):
        if t > spec.base.h - spec.gamma:
            raise DomainError(f"t={t} outside tilted transform domain")
        return math.exp(spec.a) * laplace_left_derivative(spec.base, t + spec.gamma)
    raise SpecError(f"unknown spec type {type(spec)!r}")


def mean(spec: IncrementSpec) -> float:
    """E X; the drift of the walk."""
    if isinstance(spec, LatticePmf):
        return float(spec.values @ spec.probs)
    if isinstance(spec, ExpDifference):
        return 1.0 / spec.alpha - 1.0 / spec.kappa
    if isinstance(spec, ShiftedHeavyExp):
        return spec.s  # the unshifted density is symmetric
    if isinstance(spec, TiltedHeavyExp):
        return -math.exp(spec.a) * laplace_left_derivative(spec.base, spec.gamma)
    raise SpecError(f"unknown spec type {type(spec)!r}")


def has_negative_part(spec: IncrementSpec) -> bool:
    """Whether P{X < 0} > 0.  The continuous families all have full support."""
    if isinstance(spec, LatticePmf):
        return bool((spec.values < 0).any())
    return True


def prob_zero(spec: IncrementSpec) -> float:
    """beta = P{X = 0}."""
    if isinstance(spec, LatticePmf):
        sel = spec.values == 0.0
        return float(spec.probs[sel].sum()) if sel.any() else 0.0
    return 0.0


def is_nonnegative(spec: IncrementSpec) -> bool:
    if isinstance(spec, LatticePmf):
        return bool((spec.values >= 0).all())
    return False


# ---------------------------------------------------------------------------
# Lattice structure
# ---------------------------------------------------------------------------

def lattice_structure(spec: IncrementSpec) -> LatticeStructure:
    """Detect the lattice span of the law (continuous families: non-lattice).

    Atom values must be rationals with denominator <= 1e6; the span is the
    gcd of the values, or of the pairwise differences in the offset case.
    """
    if not isinstance(spec, LatticePmf):
        return LatticeStructure("non_lattice")
    fracs = _rationalize(spec.values)
    if fracs is not None:
        # on-axis lattice: span is the gcd of the atom values themselves
        g = Fraction(0)
        for f in fracs:
            g = _frac_gcd(g, abs(f))
        if g == 0:  # single atom at 0
            return LatticeStructure("lattice", span=1.0)
        return LatticeStructure("lattice", span=float(g))
    # values not rational; the differences may still be, in which case the
    # support lies on offset + span*Z with an irrational offset
    diffs = _rationalize(spec.values - spec.values[0])
    if diffs is not None:
        g = Fraction(0)
        for d in diffs:
            g = _frac_gcd(g, abs(d))
        if g > 0:
            off = float(spec.values[0]) % float(g)
            return LatticeStructure("offset_lattice", span=float(g), offset=off)
    raise SpecError(
        "atom values not representable as rationals with denominator "
        f"<= {_MAX_DENOMINATOR}"
    )


def _rationalize(values):
    fracs = []
    for v in values:
        f = Fraction(float(v)).limit_denominator(_MAX_DENOMINATOR)
        if abs(float(f) - float(v)) > 1e-9 * max(1.0, abs(float(v))):
            return None
        fracs.append(f)
    return fracs


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    if a == 0:
        return b
    if b == 0:
        return a
    num = math.gcd(a.numerator * b.denominator, b.numerator * a.denominator)
    den = a.denominator * b.denominator
    return Fraction(num, den)


def lattice_indices(spec: LatticePmf):
    """(span, integer atom positions, atom probs) for an on-axis lattice law."""
    struct = lattice_structure(spec)
    if struct.kind != "lattice":
        raise SpecError("spec is not an on-axis lattice law")
    lam = struct.span
    idx = np.rint(spec.values / lam).astype(np.int64)
    if np.max(np.abs(idx * lam - spec.values)) > 1e-9:
        raise SpecError("atom values are not multiples of the detected span")
    return lam, idx, spec.probs


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample(spec: IncrementSpec, gen: np.random.Generator, n: int) -> np.ndarray:
    """n i.i.d. draws from the law of X."""
    if isinstance(spec, LatticePmf):
        return gen.choice(spec.values, size=n, p=spec.probs)
    if isinstance(spec, ExpDifference):
        # asymmetric Laplace: positive branch Exp(alpha) w.p. kappa/(alpha+kappa)
        u = gen.random(n)
        e = gen.standard_exponential(n)
        pos = u < spec.kappa / (spec.alpha + spec.kappa)
        out = np.where(pos, e / spec.alpha, -e / spec.kappa)
        return out
    if isinstance(spec, ShiftedHeavyExp):
        return spec.s + _sample_heavy_symmetric(spec.h, spec.r, gen, n)
    if isinstance(spec, TiltedHeavyExp):
        return _sample_heavy_tilted(spec, gen, n)
    raise SpecError(f"unknown spec type {type(spec)!r}")


def _sample_heavy_symmetric(h, r, gen, n):
    """Rejection from the two-sided exponential envelope exp(-h|x|)."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(256, int(1.5 * (n - filled)))
        u = gen.standard_exponential(m) / h
        sign = np.where(gen.random(m) < 0.5, 1.0, -1.0)
        accept = gen.random(m) < 1.0 / (1.0 + u**r)
        vals = (sign * u)[accept]
        k = min(len(vals), n - filled)
        out[filled:filled + k] = vals[:k]
        filled += k
    return out


def _sample_heavy_tilted(spec, gen, n):
    """Sample the tilted heavy law by per-side rejection.

    Right half (z > 0): density prop to exp(-(h+gamma) z)/(1+z^r), envelope
    Exp(h+gamma).  Left half: density prop to exp(-(h-gamma) u)/(1+u^r) in
    u = -z >= 0, envelope prop to min(1, u^-r) which stays valid at
    gamma = h (zero residual decay), where only the polynomial tail remains.
    """
    h, r, g = spec.base.h, spec.base.r, spec.gamma
    w_right = _half_line_integral(h + g, r)
    w_left = _half_line_integral(h - g, r)
    p_right = w_right / (w_right + w_left)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(256, 2 * (n - filled))
        side_right = gen.random(m) < p_right
        z = np.empty(m)
        acc = np.empty(m, dtype=bool)
        nr = int(side_right.sum())
        if nr:
            u = gen.standard_exponential(nr) / (h + g)
            z[side_right] = u
            acc[side_right] = gen.random(nr) < 1.0 / (1.0 + u**r)
        nl = m - nr
        if nl:
            # mixture envelope: uniform on [0,1] mass 1, pareto tail mass 1/(r-1)
            tail_mass = 1.0 / (r - 1.0)
            pick_tail = gen.random(nl) < tail_mass / (1.0 + tail_mass)
            u = gen.random(nl)
            uu = np.where(pick_tail, (1.0 - u) ** (-1.0 / (r - 1.0)), u)
            envelope = np.minimum(1.0, uu ** (-r))
            target = np.exp(-(h - g) * uu) / (1.0 + uu**r)
            z[~side_right] = -uu
            acc[~side_right] = gen.random(nl) < target / envelope
        vals = z[acc]
        k = min(len(vals), n - filled)
        out[filled:filled + k] = vals[:k]
        filled += k
    return spec.base.s + out


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def spec_to_dict(spec: IncrementSpec) -> dict:
    if isinstance(spec, LatticePmf):
        return {"family": "lattice_pmf",
                "atoms": [[v, p] for v, p in spec.atoms]}
    if isinstance(spec, ExpDifference):
        return {"family": "exp_difference",
                "alpha": spec.alpha, "kappa": spec.kappa}
    if isinstance(spec, ShiftedHeavyExp):
        return {"family": "shifted_heavy_exp",
                "h": spec.h, "r": spec.r, "s": spec.s}
    if isinstance(spec, TiltedHeavyExp):
        return {"family": "tilted_heavy_exp",
                "base": spec_to_dict(spec.base),
                "a": spec.a, "gamma": spec.gamma}
    raise SpecError(f"unknown spec type {type(spec)!r}")


def spec_from_dict(d: dict) -> IncrementSpec:
    try:
        family = d["family"]
    except (TypeError, KeyError):
        raise SpecError("spec object must carry a 'family' key")
    if family == "lattice_pmf":
        return LatticePmf(tuple((v, p) for v, p in d["atoms"]))
    if family == "exp_difference":
        return ExpDifference(float(d["alpha"]), float(d["kappa"]))
    if family == "shifted_heavy_exp":
        return ShiftedHeavyExp(float(d["h"]), float(d["r"]), float(d.get("s", 0.0)))
    if family == "tilted_heavy_exp":
        base = spec_from_dict(d["base"])
        return TiltedHeavyExp(base, float(d["a"]), float(d["gamma"]))
    raise SpecError(f"unknown family {family!r}")


def load_spec(path) -> IncrementSpec:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON in {path}: {exc}")
    return spec_from_dict(d)
