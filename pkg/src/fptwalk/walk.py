"""Path simulation and Monte Carlo estimators.

Paths are simulated in fixed-size chunks, each driven by its own
counter-based Philox substream derived from (seed, chunk index).  The
chunk layout depends only on n_paths, so estimates are bit-identical
regardless of how many workers process the chunks.

Within a chunk the walk advances in vectorized step blocks: increments
are drawn for all still-active paths at once, partial sums taken, and
the first-passage / visit / last-exit functionals read off the block.
A Lundberg barrier B with P{inf S_n <= -B} <= eps bounds the truncation
error of the last-exit and visit counts read from a finite horizon.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analyze, dist, tilt
from .errors import ConvergenceError, DomainError, InfiniteMomentError

_BLOCK_BUDGET = 1 << 22  # floats per (paths x steps) block
_MAX_BLOCK_LEN = 1 << 16


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    seed: int
    barrier_epsilon: float = 1e-6
    horizon_cap: int = 10_000_000
    workers: int = 1
    chunk_size: int = 4096  # part of the reproducibility contract

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if not (0.0 < self.barrier_epsilon < 1.0):
            raise DomainError("barrier_epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    truncated_fraction: float
    seed: int
    flags: tuple = ()


@dataclass
class PathSample:
    """Per-path functionals as parallel arrays (one entry per path)."""

    x: float
    tau: np.ndarray
    N: np.ndarray
    rho: np.ndarray
    S_tau: np.ndarray
    overshoot: np.ndarray
    min_after_1: np.ndarray
    truncated: np.ndarray
    y_grid: np.ndarray = None
    y_counts: np.ndarray = None


# ---------------------------------------------------------------------------
# Lundberg barrier
# ---------------------------------------------------------------------------

def lundberg_barrier(spec, epsilon, crit=None):
    """B with P{inf_{n>=1} S_n <= -B} <= epsilon, from the optimized
    exponential union bound e^{-tB} phi(t) / (1 - phi(t))."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.nonnegative:
        return 0.0
    if crit.R == 0.0:
        raise DomainError("non-positive drift: no Lundberg barrier exists")
    ts = crit.gamma0 * np.linspace(0.05, 1.0, 64)
    best = math.inf
    for t in ts:
        phi = dist.laplace(spec, float(t))
        if phi >= 1.0:
            continue
        b = (math.log(phi / (1.0 - phi)) - math.log(epsilon)) / t
        best = min(best, max(0.0, b))
    if math.isinf(best):
        raise DomainError("found no t with phi(t) < 1")
    return best


# ---------------------------------------------------------------------------
# Core engine
# ---------------------------------------------------------------------------

def _chunk_generator(seed, chunk_index):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    return np.random.Generator(np.random.Philox(ss))


def _run_chunk(spec, x, stop_level, horizon_cap, gen, n, y_grid=None):
    S = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    tau = np.full(n, -1, dtype=np.int64)
    S_tau = np.full(n, np.nan)
    Ncnt = np.zeros(n, dtype=np.int64)
    rho = np.zeros(n, dtype=np.int64)
    minv = np.full(n, np.inf)
    truncated = np.zeros(n, dtype=bool)
    ycnt = None
    if y_grid is not None:
        ycnt = np.zeros((n, len(y_grid)), dtype=np.int64)

    active = np.arange(n)
    while active.size:
        L = int(min(_MAX_BLOCK_LEN, max(64, _BLOCK_BUDGET // active.size)))
        m = active.size
        incs = dist.sample(spec, gen, m * L).reshape(m, L)
        cums = S[active, None] + np.cumsum(incs, axis=1)
        rem = horizon_cap - steps[active]

        crossed_stop = cums > stop_level
        has_stop = crossed_stop.any(axis=1)
        jstop = np.where(has_stop, crossed_stop.argmax(axis=1), L - 1)
        eff = np.where(has_stop, jstop + 1, L)
        eff = np.minimum(eff, rem)
        stopped = has_stop & (jstop + 1 <= rem)
        valid = np.arange(L)[None, :] < eff[:, None]

        # first passage over x
        crossed_x = (cums > x) & valid
        hit_x = crossed_x.any(axis=1)
        need = hit_x & (tau[active] < 0)
        if need.any():
            rows = active[need]
            sub = crossed_x[need]
            j = sub.argmax(axis=1)
            tau[rows] = steps[rows] + j + 1
            S_tau[rows] = cums[need][np.arange(len(j)), j]

        # visits to (-inf, x] and last exit
        below = (cums <= x) & valid
        Ncnt[active] += below.sum(axis=1)
        hit_b = below.any(axis=1)
        if hit_b.any():
            rows = active[hit_b]
            sub = below[hit_b]
            lastj = L - 1 - sub[:, ::-1].argmax(axis=1)
            rho[rows] = steps[rows] + lastj + 1

        # running minimum over n >= 1
        block_min = np.where(valid, cums, np.inf).min(axis=1)
        np.minimum.at(minv, active, block_min)

        # visit counts below each grid level
        if ycnt is not None:
            for k, y in enumerate(y_grid):
                ycnt[active, k] += ((cums <= -y) & valid).sum(axis=1)

        last = np.maximum(eff - 1, 0)
        S[active] = cums[np.arange(m), last]
        steps[active] += eff
        exhausted = steps[active] >= horizon_cap
        truncated[active] |= exhausted & ~stopped
        active = active[~(stopped | exhausted)]

    overshoot = S_tau - x
    return PathSample(x=x, tau=tau, N=Ncnt, rho=rho, S_tau=S_tau,
                      overshoot=overshoot, min_after_1=minv,
                      truncated=truncated,
                      y_grid=None if y_grid is None else np.asarray(y_grid),
                      y_counts=ycnt)


def _run_paths(spec, x, stop_level, config: McConfig, y_grid=None):
    sizes = []
    left = config.n_paths
    while left > 0:
        sizes.append(min(config.chunk_size, left))
        left -= sizes[-1]

    def run(k):
        gen = _chunk_generator(config.seed, k)
        return _run_chunk(spec, x, stop_level, config.horizon_cap, gen,
                          sizes[k], y_grid=y_grid)

    if config.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(run, range(len(sizes))))
    else:
        chunks = [run(k) for k in range(len(sizes))]

    out = PathSample(
        x=x,
        tau=np.concatenate([c.tau for c in chunks]),
        N=np.concatenate([c.N for c in chunks]),
        rho=np.concatenate([c.rho for c in chunks]),
        S_tau=np.concatenate([c.S_tau for c in chunks]),
        overshoot=np.concatenate([c.overshoot for c in chunks]),
        min_after_1=np.concatenate([c.min_after_1 for c in chunks]),
        truncated=np.concatenate([c.truncated for c in chunks]),
        y_grid=None if y_grid is None else np.asarray(y_grid),
        y_counts=None if y_grid is None
        else np.concatenate([c.y_counts for c in chunks]),
    )
    return out


def simulate_functionals(spec, x, config: McConfig, crit=None) -> PathSample:
    """Simulate paths to the Lundberg stopping level and read off
    (tau, N, rho, S_tau, overshoot, min)."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.nonnegative:
        barrier = 0.0
    else:
        barrier = lundberg_barrier(spec, config.barrier_epsilon, crit)
    sample = _run_paths(spec, x, x + barrier, config)
    frac = float(sample.truncated.mean())
    if frac > 0.01:
        raise ConvergenceError(
            f"horizon cap {config.horizon_cap} exceeded on "
            f"{100 * frac:.2f}% of paths")
    return sample


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _estimate(values, reliable, config, flags=()):
    vals = values[reliable]
    n = len(vals)
    if n == 0:
        raise ConvergenceError("no reliable paths to average")
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    frac = 1.0 - n / len(values)
    if frac > config.barrier_epsilon * 10:
        flags = flags + ("high_truncation",)
    return McEstimate(mean=mean, std_error=se, n_paths=n,
                      truncated_fraction=frac, seed=config.seed, flags=flags)


def _require_finite(spec, a, quantity, crit):
    verdicts = {v.quantity: v for v in analyze.classify(spec, a, crit)}
    v = verdicts[quantity]
    if not v.finite:
        raise InfiniteMomentError(
            f"E exp(a {quantity}) is infinite ({v.reason})", reason=v.reason)


def estimate_exp_moment_direct(spec, a, x, quantity, config: McConfig,
                               crit=None) -> McEstimate:
    """Plain sample mean of exp(a * functional)."""
    if crit is None:
        crit = analyze.critical_data(spec)
    _require_finite(spec, a, quantity, crit)
    sample = simulate_functionals(spec, x, config, crit)
    func = {"tau": sample.tau, "N": sample.N, "rho": sample.rho}[quantity]
    flags = ()
    if not crit.nonnegative and 2 * a > crit.R:
        flags = ("possible_infinite_variance",)
    reliable = ~sample.truncated
    if quantity == "tau":
        reliable = reliable & (sample.tau >= 0)
    vals = np.exp(a * func.astype(float))
    return _estimate(vals, reliable, config, flags)


def estimate_exp_moment_tau_tilted(spec, a, x, config: McConfig,
                                   crit=None) -> McEstimate:
    """Importance-sampled E exp(a tau(x)) via E_gamma exp(gamma S_tau(x)).

    Valid up to and including a = R, where the tilted walk has zero drift
    but still crosses every level almost surely.
    """
    if crit is None:
        crit = analyze.critical_data(spec)
    params = analyze.gamma_of(spec, a, crit)
    tspec = tilt.tilt_spec(spec, params)
    sample = _run_paths(tspec, x, x, config)  # first passage only
    vals = np.exp(params.gamma * sample.S_tau)
    reliable = ~sample.truncated & (sample.tau >= 0)
    vals = np.where(reliable, vals, 0.0)
    return _estimate(vals, reliable, config)


def estimate_ladder_quantities(spec, a, config: McConfig, crit=None):
    """First strict ascending ladder height under the tilted measure.

    Returns {"E_gamma_S_tau": ..., "E_e_a_tau": ...}; the second is
    E exp(a tau) = E_gamma exp(gamma S_tau).
    """
    if crit is None:
        crit = analyze.critical_data(spec)
    params = analyze.gamma_of(spec, a, crit)
    tspec = tilt.tilt_spec(spec, params)
    sample = _run_paths(tspec, 0.0, 0.0, config)
    reliable = ~sample.truncated & (sample.tau >= 0)
    frac = 1.0 - reliable.mean()
    if frac > 0.01:
        raise ConvergenceError(
            f"zero-drift ladder simulation truncated on {100 * frac:.2f}% "
            "of paths; raise horizon_cap")
    est_h = _estimate(sample.S_tau, reliable, config)
    est_m = _estimate(np.exp(params.gamma * sample.S_tau), reliable, config)
    return {"E_gamma_S_tau": est_h, "E_e_a_tau": est_m, "params": params}


def estimate_min_functionals(spec, gamma, config: McConfig, crit=None):
    """E exp(-gamma M+) and P{M > 0} for M = inf_{n>=1} S_n.

    Paths run until they exceed twice the Lundberg level so that both the
    pre-stop minimum and any later dip are epsilon-accounted.
    """
    if crit is None:
        crit = analyze.critical_data(spec)
    barrier = lundberg_barrier(spec, config.barrier_epsilon, crit)
    stop = 2.0 * barrier + 1.0
    sample = _run_paths(spec, 0.0, stop, config)
    reliable = ~sample.truncated
    mplus = np.maximum(sample.min_after_1, 0.0)
    est_exp = _estimate(np.exp(-gamma * mplus), reliable, config)
    est_pos = _estimate((sample.min_after_1 > 0).astype(float), reliable,
                        config)
    return {"E_exp_neg_gamma_Mplus": est_exp, "P_M_positive": est_pos}


def estimate_f_grid(spec, a, y_grid, config: McConfig, crit=None):
    """Table of f(-y) = E exp(a N(-y)) over an increasing grid of y >= 0.

    One batch of paths serves every grid level; the output is clamped to
    be nonincreasing in y (isotonic regression), with a flag when the
    clamp moved any value by more than two standard errors.
    """
    if crit is None:
        crit = analyze.critical_data(spec)
    _require_finite(spec, a, "N", crit)
    y_grid = np.asarray(y_grid, dtype=float)
    if (np.diff(y_grid) <= 0).any() or (y_grid < 0).any():
        raise DomainError("y_grid must be strictly increasing and nonnegative")
    barrier = lundberg_barrier(spec, config.barrier_epsilon, crit)
    sample = _run_paths(spec, 0.0, barrier + 1.0, config, y_grid=y_grid)
    reliable = ~sample.truncated
    vals = np.exp(a * sample.y_counts[reliable].astype(float))
    f = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
    f_iso = _monotone_decreasing(f)
    flags = ()
    if np.any(np.abs(f_iso - f) > 2 * se):
        flags = ("isotonic_clamp_exceeded_2se",)
    return {"y": y_grid, "f": f_iso, "f_raw": f, "std_error": se,
            "flags": flags}


def _monotone_decreasing(v):
    """Pool-adjacent-violators fit for a nonincreasing sequence."""
    w = -np.asarray(v, dtype=float)
    # increasing PAVA on the negated values
    vals = list(w)
    wts = [1.0] * len(vals)
    out_v, out_w = [], []
    for x_, w_ in zip(vals, wts):
        out_v.append(x_)
        out_w.append(w_)
        while len(out_v) > 1 and out_v[-2] > out_v[-1]:
            v2, w2 = out_v.pop(), out_w.pop()
            v1, w1 = out_v.pop(), out_w.pop()
            out_v.append((v1 * w1 + v2 * w2) / (w1 + w2))
            out_w.append(w1 + w2)
    res = np.empty(len(vals))
    i = 0
    for v_, w_ in zip(out_v, out_w):
        k = int(round(w_))
        res[i:i + k] = v_
        i += k
    return -res
