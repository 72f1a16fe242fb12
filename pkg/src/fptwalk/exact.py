"""Exact lattice-walk computations by dynamic programming.

All series here run over convolution powers of a lattice increment law,
restricted to a fixed window of lattice sites.  Mass leaving the window
is tracked in two scalars; window margins are sized from the exponential
decay rate of the transform so the tracked leakage is negligible at the
requested tolerances.

Series tails are certified geometrically below the critical exponent via
the Chernoff bound e^{an} P{S_n <= x} <= e^{t*x} (e^a phi(t*))^n with a
tilt point t* strictly past gamma(a); at a = R only a heuristic
power-law tail fit is available and is labeled as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analyze, dist
from .errors import DomainError, SpecError

_LOG_MARGIN = 60.0          # window margin in units of gamma * lambda
_DIVERGENCE_FACTOR = 1e6
_DEFAULT_N_MAX = 100_000


@dataclass(frozen=True)
class SeriesResult:
    value: float
    n_terms: int
    tail_bound: float
    tail_kind: str            # "certified" | "heuristic"
    diverged: bool = False


# ---------------------------------------------------------------------------
# Windowed convolution state
# ---------------------------------------------------------------------------

class _LatticeWalk:
    """pmf of S_n over a fixed window of lattice sites.

    Mass below the window accumulates in ``below`` (it still counts as
    <= x in the series), mass above in ``above`` (it is dropped; returns
    below x from that height are exponentially unlikely).
    """

    def __init__(self, spec, lo, hi, absorb_above=None):
        lam, idx, probs = dist.lattice_indices(spec)
        self.lam = lam
        kmin, kmax = int(idx.min()), int(idx.max())
        kern = np.zeros(kmax - kmin + 1)
        for k, p in zip(idx, probs):
            kern[k - kmin] = p
        self.kern = kern
        self.kmin = kmin
        self.lo = lo
        self.hi = hi
        self.absorb_above = absorb_above
        self.p = np.zeros(hi - lo + 1)
        if not (lo <= 0 <= hi):
            raise DomainError("window must contain the origin")
        self.p[-lo] = 1.0
        self.below = 0.0
        self.above = 0.0

    def step(self):
        q = np.convolve(self.p, self.kern)
        # q index k corresponds to lattice site lo + kmin + k
        start = self.lo + self.kmin
        cut_lo = self.lo - start
        cut_hi = cut_lo + (self.hi - self.lo)
        self.below += q[:cut_lo].sum() if cut_lo > 0 else 0.0
        self.above += q[cut_hi + 1:].sum()
        self.p = q[max(cut_lo, 0):cut_hi + 1]
        if cut_lo < 0:  # kernel has no negative reach past lo
            self.p = np.concatenate([np.zeros(-cut_lo), self.p])
        if self.absorb_above is not None:
            k = self.absorb_above - self.lo
            self.above += self.p[k + 1:].sum()
            self.p[k + 1:] = 0.0

    def cdf_at(self, k):
        """P-mass at lattice sites <= k, including tracked below-mass."""
        return self.below + self.p[:k - self.lo + 1].sum()

    def total_inside(self):
        return self.below + self.p.sum()


def _window(spec, crit, kx, lam):
    """Window [lo, hi] in lattice units around the series level kx."""
    gam = crit.gamma0 if crit.gamma0 is not None else None
    if gam is None:
        # nonnegative walk: nothing ever goes below 0
        return min(kx, 0), None
    margin = int(math.ceil(_LOG_MARGIN / (gam * lam))) + 2
    return min(kx, 0) - margin, max(kx, 0) + margin


def _tail_rate(spec, a, crit):
    """(t_star, ratio) with e^{an} P{S_n <= x} <= e^{t_star x} ratio^n,
    ratio < 1, valid strictly below the critical exponent; None at a = R."""
    R_eff = crit.R if not crit.nonnegative else (
        math.inf if crit.beta == 0.0 else -math.log(crit.beta))
    if a >= R_eff * (1 - 1e-12):
        if math.isinf(R_eff):
            # deterministic-positive walks: P{S_n <= x} hits 0; any t works
            params = analyze.gamma_of(spec, a + 5.0, crit)
            return params.gamma, math.exp(-5.0)
        return None
    delta = min(5.0, (R_eff - a) / 2.0)
    params = analyze.gamma_of(spec, a + delta, crit)
    return params.gamma, math.exp(-delta)


def _fit_tail_exponent(terms):
    """Slope of log term vs log n over the last decade of positive terms."""
    n = len(terms)
    lo = max(1, n // 10 * 9)
    ns, ts = [], []
    for i in range(lo, n):
        if terms[i] > 0:
            ns.append(math.log(i + 1))
            ts.append(math.log(terms[i]))
    if len(ns) < 10:
        return None
    slope = np.polyfit(ns, ts, 1)[0]
    return float(slope)


def _heuristic_tail(terms, exponent):
    """Remainder of sum c * n^exponent past the last computed term."""
    n = len(terms)
    if n == 0 or terms[-1] <= 0 or exponent >= -1:
        return math.inf
    c = terms[-1] * (n ** -exponent)
    return c * (n ** (exponent + 1)) / (-(exponent + 1))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def pmf_power(spec, n, window):
    """Law of S_n restricted to lattice sites in [window[0], window[1]].

    Returns (sites, probs, below_mass, above_mass).
    """
    lam, _, _ = dist.lattice_indices(spec)
    lo = int(math.floor(window[0] / lam + 1e-9))
    hi = int(math.ceil(window[1] / lam - 1e-9))
    wk = _LatticeWalk(spec, min(lo, 0), max(hi, 0))
    for _ in range(n):
        wk.step()
    sel = slice(lo - wk.lo, hi - wk.lo + 1)
    sites = np.arange(lo, hi + 1) * lam
    return sites, wk.p[sel].copy(), wk.below, wk.above


def _series_common(spec, a, x, rel_tol, n_max, weight, crit=None,
                   absorb_at_x=False, collect_measure=False):
    """Shared driver for the K / V / first-passage series.

    weight(n) multiplies e^{an} P{... <= x} (1 for V, 1/n for K).
    With absorb_at_x the DP kills mass above x each step, so the summand
    is P{M_n <= x} instead of P{S_n <= x}.
    """
    if crit is None:
        crit = analyze.critical_data(spec)
    lam, _, _ = dist.lattice_indices(spec)
    kx = int(math.floor(x / lam + 1e-9))
    lo, hi = _window(spec, crit, kx, lam)
    if hi is None:
        hi = max(kx, 0) + 1  # nonneg walk: sites above x irrelevant beyond +1
    wk = _LatticeWalk(spec, lo, hi, absorb_above=kx if absorb_at_x else None)

    rate = _tail_rate(spec, a, crit)
    partial = 0.0
    terms = []
    first_term = None
    measure = np.zeros(hi - lo + 1) if collect_measure else None
    below_measure = 0.0
    diverged = False

    n = 0
    while n < n_max:
        n += 1
        wk.step()
        pn = wk.cdf_at(kx)
        t = math.exp(a * n) * weight(n) * pn
        terms.append(t)
        partial += t
        if collect_measure:
            w = math.exp(a * n) * weight(n)
            measure[:kx - lo + 1] += w * wk.p[:kx - lo + 1]
            below_measure += w * wk.below
        if first_term is None and t > 0:
            first_term = t
        if rate is not None:
            t_star, ratio = rate
            tail = math.exp(t_star * x) * ratio ** (n + 1) / (1.0 - ratio)
            if tail <= rel_tol * max(partial, 1e-300):
                return _SeriesState(SeriesResult(partial, n, tail,
                                                 "certified"),
                                    measure, below_measure, lo, kx, lam)
        if first_term is not None and partial > _DIVERGENCE_FACTOR * first_term:
            diverged = True
            break
        if rate is None and n >= 1024 and n & (n - 1) == 0:
            # no certified tail available (critical exponent): declare
            # divergence early once the terms show a power >= -1
            slope = _fit_tail_exponent(terms)
            if slope is not None and slope >= -0.95:
                diverged = True
                break

    slope = _fit_tail_exponent(terms)
    if not diverged:
        # no certified tail (a at the critical exponent); judge by the
        # fitted power of the terms
        if slope is None or slope >= -1.0:
            diverged = True
    if diverged:
        res = SeriesResult(math.inf, n, math.inf, "heuristic", diverged=True)
        return _SeriesState(res, measure, below_measure, lo, kx, lam,
                            slope=slope)
    tail = _heuristic_tail(terms, slope)
    res = SeriesResult(partial, n, tail, "heuristic")
    return _SeriesState(res, measure, below_measure, lo, kx, lam, slope=slope)


@dataclass
class _SeriesState:
    result: SeriesResult
    measure: object
    below_measure: float
    lo: int
    kx: int
    lam: float
    slope: float = None


def K_of(spec, a, rel_tol=1e-8, n_max=_DEFAULT_N_MAX, crit=None):
    """K(a) = sum_n e^{an} P{S_n <= 0} / n."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.nonnegative:
        # P{S_n <= 0} = beta^n exactly
        z = crit.beta * math.exp(a)
        if z >= 1.0:
            return SeriesResult(math.inf, 0, math.inf, "certified",
                                diverged=True)
        return SeriesResult(-math.log1p(-z), 0, 0.0, "certified")
    st = _series_common(spec, a, 0.0, rel_tol, n_max, lambda n: 1.0 / n,
                        crit=crit)
    return st.result


def V_of(spec, a, x, rel_tol=1e-8, n_max=_DEFAULT_N_MAX, crit=None,
         collect_measure=False):
    """V series sum_{n>=0} e^{an} P{S_n <= x}; the n = 0 term is 1 for
    x >= 0.  Divergence agrees with the last-exit finiteness verdict."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    if crit is None:
        crit = analyze.critical_data(spec)
    st = _series_common(spec, a, x, rel_tol, n_max, lambda n: 1.0,
                        crit=crit, collect_measure=collect_measure)
    if st.result.diverged:
        return st if collect_measure else st.result
    res = SeriesResult(st.result.value + 1.0, st.result.n_terms,
                       st.result.tail_bound, st.result.tail_kind)
    if collect_measure:
        st.measure[0 - st.lo] += 1.0  # n = 0 atom at the origin
        st.result = res
        return st
    return res


def exp_moment_tau_exact(spec, a, x, rel_tol=1e-9, n_max=_DEFAULT_N_MAX,
                         crit=None):
    """E e^{a tau(x)} = 1 + (e^a - 1) sum_{n>=0} e^{an} P{M_n <= x},
    with the running-maximum probabilities from an absorbing-barrier DP."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    if crit is None:
        crit = analyze.critical_data(spec)
    st = _series_common(spec, a, x, rel_tol, n_max, lambda n: 1.0,
                        crit=crit, absorb_at_x=True)
    if st.result.diverged:
        return st.result
    series = st.result.value + 1.0  # n = 0 term: P{M_0 <= x} = 1
    value = 1.0 + (math.exp(a) - 1.0) * series
    tail = (math.exp(a) - 1.0) * st.result.tail_bound
    return SeriesResult(value, st.result.n_terms, tail, st.result.tail_kind)


# ---------------------------------------------------------------------------
# Exact minimum law and the last-exit moment
# ---------------------------------------------------------------------------

def min_survival_table(spec, crit=None, tol=1e-15, max_iter=200_000):
    """m[w] = P{min_{n>=0} S_n > -w lambda} for w = 1..W, by value
    iteration on the harmonic recursion m(w) = sum_j p_j m(w + k_j)."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.R == 0.0:
        raise DomainError("non-positive drift: the walk has no finite minimum")
    lam, idx, probs = dist.lattice_indices(spec)
    gam = crit.gamma0 if crit.gamma0 is not None else 1.0
    W = int(math.ceil(_LOG_MARGIN / (gam * lam))) + int(idx.max()) + 2
    # mv[w] for w = 0..W; w > W pinned at 1, w <= 0 at 0
    mv = np.ones(W + 1)
    mv[0] = 0.0
    for _ in range(max_iter):
        new = np.empty(W + 1)
        new[0] = 0.0
        acc = np.zeros(W)
        ws = np.arange(1, W + 1)
        for k, p in zip(idx, probs):
            src = ws + int(k)
            vals = np.where(src <= 0, 0.0,
                            np.where(src > W, 1.0, mv[np.clip(src, 0, W)]))
            acc += p * vals
        new[1:] = acc
        if np.max(np.abs(new - mv)) < tol:
            mv = new
            break
        mv = new
    return lam, mv  # mv[w], w in 0..W (mv[0] = 0)


def min_exceeds_prob(spec, z_units, lam, mv, idx=None, probs=None):
    """r(z) = P{inf_{n>=1} S_n > z} for z = z_units * lambda >= 0."""
    if idx is None:
        _, idx, probs = dist.lattice_indices(spec)
    W = len(mv) - 1
    out = 0.0
    for k, p in zip(idx, probs):
        w = int(k) - z_units
        if w <= 0:
            continue
        out += p * (1.0 if w > W else mv[w])
    return out


def exp_moment_rho_exact(spec, a, x, rel_tol=1e-9, n_max=_DEFAULT_N_MAX,
                         crit=None):
    """E e^{a rho(x)} = sum_y P{inf_{n>=1} S_n > x - y} V({y}) over the
    lattice sites y <= x, using the exact V measure and minimum law."""
    if crit is None:
        crit = analyze.critical_data(spec)
    st = V_of(spec, a, x, rel_tol=rel_tol, n_max=n_max, crit=crit,
              collect_measure=True)
    if isinstance(st, SeriesResult) or st.result.diverged:
        res = st if isinstance(st, SeriesResult) else st.result
        return SeriesResult(math.inf, res.n_terms, math.inf, "heuristic",
                            diverged=True)
    lam, idx, probs = dist.lattice_indices(spec)
    lam2, mv = min_survival_table(spec, crit)
    total = 0.0
    for j in range(st.kx - st.lo + 1):
        vmass = st.measure[j]
        if vmass == 0.0:
            continue
        z_units = st.kx - (st.lo + j)
        total += vmass * min_exceeds_prob(spec, z_units, lam, mv, idx, probs)
    # below-window V mass meets r(z) at huge z, where r ~ 0
    return SeriesResult(total, st.result.n_terms, st.result.tail_bound,
                        st.result.tail_kind)


def ladder_height_exact(spec, tol=1e-13, max_steps=1_000_000):
    """Law of the first strict ascending ladder height S_tau(0) for a
    lattice walk, by absorbing everything above 0 step by step.

    Returns (heights, probs, residual) where residual is the survivor
    mass still at or below 0 when iteration stopped (nonzero only for
    walks without enough upward drift to drain within max_steps).
    """
    crit = analyze.critical_data(spec)
    lam, idx, probs = dist.lattice_indices(spec)
    kmax = int(idx.max())
    if kmax <= 0:
        raise DomainError("walk never increases: no ladder height exists")
    gam = crit.gamma0 if crit.gamma0 is not None else 1.0
    lo = -int(math.ceil(_LOG_MARGIN / (gam * lam))) - 2
    hi = kmax
    wk = _LatticeWalk(spec, lo, hi)
    absorbed = np.zeros(kmax)
    for _ in range(max_steps):
        wk.step()
        above0 = wk.p[-lo + 1:]
        absorbed += above0
        wk.p[-lo + 1:] = 0.0
        if wk.total_inside() < tol:
            break
    heights = np.arange(1, kmax + 1) * lam
    residual = wk.total_inside()
    return heights, absorbed, residual


def min_plus_transform(spec, gamma, crit=None):
    """E exp(-gamma M+) for M = inf_{n>=1} S_n of a lattice walk, from
    the exact minimum survival table."""
    if crit is None:
        crit = analyze.critical_data(spec)
    lam, idx, probs = dist.lattice_indices(spec)
    _, mv = min_survival_table(spec, crit)
    W = len(mv) - 1
    # r(z) = P{M > z lambda} for z = 0, 1, ...; M+ lives on {0, lambda, ...}
    r_prev = min_exceeds_prob(spec, 0, lam, mv, idx, probs)
    out = 1.0 - r_prev  # P{M+ = 0} = P{M <= 0}
    z = 1
    while r_prev > 1e-15 and z <= W + int(idx.max()) + 1:
        r_z = min_exceeds_prob(spec, z, lam, mv, idx, probs)
        out += math.exp(-gamma * z * lam) * (r_prev - r_z)
        r_prev = r_z
        z += 1
    return out


def tail_exponent(spec, a, x, n_terms=20_000, crit=None):
    """Fitted power-law exponent of the V-series terms (diagnostic for
    divergence at the critical exponent; ~ -1/2 there)."""
    if crit is None:
        crit = analyze.critical_data(spec)
    lam, _, _ = dist.lattice_indices(spec)
    kx = int(math.floor(x / lam + 1e-9))
    lo, hi = _window(spec, crit, kx, lam)
    if hi is None:
        hi = max(kx, 0) + 1
    wk = _LatticeWalk(spec, lo, hi)
    terms = []
    for n in range(1, n_terms + 1):
        wk.step()
        terms.append(math.exp(a * n) * wk.cdf_at(kx))
    return _fit_tail_exponent(terms)
