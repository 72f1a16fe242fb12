"""Asymptotic prefactor constants and convergence tables.

Each exponential moment grows like (constant) * e^{gamma x}; the
constants combine tilted ladder quantities, the transform derivative,
and the law of the global minimum.  Lattice specs get exact ingredients
from the dynamic-programming module; non-lattice specs get Monte Carlo
ingredients with delta-method standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analyze, dist, exact, tilt, walk
from .errors import ConvergenceError, DomainError, InfiniteMomentError, SpecError

_DEFAULT_PATHS = 100_000


@dataclass(frozen=True)
class AsymptoticConstant:
    quantity: str             # tau | N | rho
    case: str                 # "lattice" | "non_lattice"
    span: float               # lattice span (0 for non-lattice)
    value: float
    gamma: float
    ingredients: dict = field(default_factory=dict)
    combined_se: float = 0.0

    def __post_init__(self):
        if not (self.value > 0):
            raise ConvergenceError(
                f"asymptotic constant must be positive, got {self.value}")


def _default_config(config):
    if config is None:
        return walk.McConfig(n_paths=_DEFAULT_PATHS, seed=0)
    return config


def _case(spec):
    struct = dist.lattice_structure(spec)
    if struct.kind == "offset_lattice":
        raise SpecError("offset-lattice laws are excluded from asymptotics")
    return struct


def _gamma_factor(struct, gamma):
    """Denominator factor: gamma (non-lattice) or (1-e^{-lam gamma})/lam."""
    if struct.is_lattice:
        lam = struct.span
        return (1.0 - math.exp(-lam * gamma)) / lam
    return gamma


def const_tau(spec, a, config=None, crit=None) -> AsymptoticConstant:
    """Constant of E e^{a tau(x)} ~ C e^{gamma x}:
    (E e^{a tau} - 1) / (gamma_factor * E_gamma S_tau)."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.nonnegative:
        raise DomainError(
            "nonnegative walk: use const_nonneg_tau for the simpler constant")
    verdict = analyze.classify(spec, a, crit)[0]
    if not verdict.finite:
        raise InfiniteMomentError(
            f"E e^(a tau) infinite ({verdict.reason})", reason=verdict.reason)
    struct = _case(spec)
    params = analyze.gamma_of(spec, a, crit)

    tilted_drift = tilt.tilted_mean(spec, params)
    if struct.is_lattice and tilted_drift > 1e-6:
        mres = exact.exp_moment_tau_exact(spec, a, 0.0, rel_tol=1e-12,
                                          crit=crit)
        e_a_tau, se_m = mres.value, 0.0
        tspec = tilt.tilt_spec(spec, params)
        heights, hprobs, residual = exact.ladder_height_exact(tspec)
        if residual > 1e-9:
            raise ConvergenceError(
                f"ladder DP left residual mass {residual:.2e}; "
                "tilted drift too small for the exact route")
        e_s_tau, se_h = float(heights @ hprobs), 0.0
        ingredients = {"E_e_a_tau": e_a_tau, "E_gamma_S_tau": e_s_tau,
                       "ladder_residual": residual}
    else:
        config = _default_config(config)
        lq = walk.estimate_ladder_quantities(spec, a, config, crit)
        e_a_tau, se_m = lq["E_e_a_tau"].mean, lq["E_e_a_tau"].std_error
        e_s_tau, se_h = (lq["E_gamma_S_tau"].mean,
                         lq["E_gamma_S_tau"].std_error)
        ingredients = {"E_e_a_tau": e_a_tau, "E_gamma_S_tau": e_s_tau}

    gf = _gamma_factor(struct, params.gamma)
    value = (e_a_tau - 1.0) / (gf * e_s_tau)
    se = math.hypot(se_m / (gf * e_s_tau),
                    (e_a_tau - 1.0) * se_h / (gf * e_s_tau**2))
    return AsymptoticConstant(
        quantity="tau", case=struct.kind, span=struct.span, value=value,
        gamma=params.gamma, ingredients=ingredients, combined_se=se)


def const_nonneg_tau(spec, a, crit=None) -> AsymptoticConstant:
    """Constant for nonnegative walks:
    (1 - e^{-a}) / (gamma_factor * E X e^{-gamma X})."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if not crit.nonnegative:
        raise DomainError("const_nonneg_tau requires P{X >= 0} = 1")
    params = analyze.gamma_of(spec, a, crit)  # enforces a < -log beta
    struct = _case(spec)
    exg = -dist.laplace_left_derivative(spec, params.gamma)
    gf = _gamma_factor(struct, params.gamma)
    value = (1.0 - math.exp(-a)) / (gf * exg)
    return AsymptoticConstant(
        quantity="tau", case=struct.kind, span=struct.span, value=value,
        gamma=params.gamma,
        ingredients={"E_X_exp_neg_gamma_X": exg}, combined_se=0.0)


def const_N(spec, a, config=None, crit=None, y_grid=None) -> AsymptoticConstant:
    """Constant of E e^{a N(x)}: e^{-a} E_gamma[int/sum of e^{gamma y}
    f(-y) over (0, S_tau]] / E_gamma S_tau, with f(-y) = E e^{a N(-y)}."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.nonnegative:
        base = const_nonneg_tau(spec, a, crit)
        return AsymptoticConstant(
            quantity="N", case=base.case, span=base.span,
            value=math.exp(-a) * base.value, gamma=base.gamma,
            ingredients={"const_nonneg_tau": base.value},
            combined_se=0.0)
    verdict = analyze.classify(spec, a, crit)[1]
    if not verdict.finite:
        raise InfiniteMomentError(
            f"E e^(a N) infinite ({verdict.reason})", reason=verdict.reason)
    struct = _case(spec)
    params = analyze.gamma_of(spec, a, crit)
    config = _default_config(config)
    g = params.gamma

    if struct.is_lattice:
        lam = struct.span
        tspec = tilt.tilt_spec(spec, params)
        if tilt.tilted_mean(spec, params) > 1e-6:
            heights, hprobs, residual = exact.ladder_height_exact(tspec)
            e_s_tau, se_h = float(heights @ hprobs), 0.0
        else:
            # zero tilted drift (critical exponent): empirical ladder law
            sample = walk._run_paths(tspec, 0.0, 0.0, config)
            ok = ~sample.truncated & (sample.tau >= 0)
            units = np.rint(sample.S_tau[ok] / lam).astype(int)
            km = int(units.max())
            hprobs = np.bincount(units, minlength=km + 1)[1:] / len(units)
            heights = lam * np.arange(1, km + 1)
            e_s_tau = float(lam * units.mean())
            se_h = float(lam * units.std(ddof=1) / math.sqrt(len(units)))
            residual = 0.0
        kmax = len(heights)
        ys = lam * np.arange(1, kmax + 1)
        fg = walk.estimate_f_grid(spec, a, ys, config, crit)
        f, fse = fg["f"], fg["std_error"]
        # inner sum per ladder height y = lam * j: sum_{k<=j} e^{g lam k} f_k
        weights = np.exp(g * ys)
        cum = np.cumsum(weights * f)
        numer = float(hprobs @ cum)
        dnumer = np.zeros_like(fse)
        for k in range(kmax):
            dnumer[k] = weights[k] * hprobs[k:].sum()
        se_numer = float(np.sqrt(((dnumer * fse) ** 2).sum()))
        ingredients = {"E_gamma_S_tau": e_s_tau, "f_grid": f,
                       "ladder_residual": residual}
    else:
        lq = walk.estimate_ladder_quantities(spec, a, config, crit)
        params2 = lq["params"]
        tspec = tilt.tilt_spec(spec, params2)
        sample = walk._run_paths(tspec, 0.0, 0.0, config)
        ok = ~sample.truncated & (sample.tau >= 0)
        s_tau = sample.S_tau[ok]
        e_s_tau = float(s_tau.mean())
        se_h = float(s_tau.std(ddof=1) / math.sqrt(len(s_tau)))
        if y_grid is None:
            step = e_s_tau / 50.0
            top = float(np.quantile(s_tau, 0.9999)) + step
            y_grid = np.arange(step, top + step, step)
        y_grid = np.asarray(y_grid, dtype=float)
        fg = walk.estimate_f_grid(spec, a, y_grid, config, crit)
        f, fse = fg["f"], fg["std_error"]
        numer, se_numer = _ladder_integral(s_tau, y_grid, f, fse, g)
        # grid-stability check: recompute on every other grid point
        numer_c, _ = _ladder_integral(s_tau, y_grid[::2], f[::2], fse[::2], g)
        if abs(numer_c - numer) > max(se_numer, 1e-12 * abs(numer)) * 2:
            raise ConvergenceError(
                "f-grid too coarse: ladder integral moved by "
                f"{abs(numer_c - numer):.3e} under 2x coarsening; "
                "supply a finer y_grid")
        ingredients = {"E_gamma_S_tau": e_s_tau, "f_grid": f}
        lam = 0.0

    if struct.is_lattice:
        value = struct.span * math.exp(-a) * numer / e_s_tau
        se = math.hypot(struct.span * math.exp(-a) * se_numer / e_s_tau,
                        struct.span * math.exp(-a) * numer * se_h / e_s_tau**2)
    else:
        value = math.exp(-a) * numer / e_s_tau
        se = math.hypot(math.exp(-a) * se_numer / e_s_tau,
                        math.exp(-a) * numer * se_h / e_s_tau**2)
    return AsymptoticConstant(
        quantity="N", case=struct.kind, span=struct.span, value=value,
        gamma=params.gamma, ingredients=ingredients, combined_se=se)


def _ladder_integral(s_tau, y_grid, f, fse, gamma):
    """Mean over ladder samples of int_0^{S_tau} e^{gamma y} f(-y) dy by
    trapezoid on the grid, with f interpolated and extended by f(0+)=f[0]
    to the left and its last value to the right."""
    ys = np.concatenate([[0.0], y_grid])
    fv = np.concatenate([[f[0]], f])
    g = np.exp(gamma * ys) * fv
    seg = np.diff(ys) * (g[1:] + g[:-1]) / 2.0
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    # per-path integral: cum at the grid point below S_tau plus a partial
    # trapezoid; linear interpolation of cum is accurate enough here
    vals = np.interp(s_tau, ys, cum)
    # crude propagation of the f standard errors through the same quadrature
    gse = np.exp(gamma * ys) * np.concatenate([[fse[0]], fse])
    seg_se = np.diff(ys) * (gse[1:] + gse[:-1]) / 2.0
    cum_se = np.concatenate([[0.0], np.cumsum(seg_se**2)])
    vals_se = np.sqrt(np.interp(s_tau, ys, cum_se))
    mean = float(vals.mean())
    se_mc = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    se = math.hypot(se_mc, float(vals_se.mean()))
    return mean, se


def const_rho(spec, a, config=None, crit=None) -> AsymptoticConstant:
    """Constant of E e^{a rho(x)}:
    e^{-a} (1 - E e^{-gamma M+}) / (gamma_factor * E X e^{-gamma X})."""
    if crit is None:
        crit = analyze.critical_data(spec)
    if crit.nonnegative:
        base = const_nonneg_tau(spec, a, crit)
        return AsymptoticConstant(
            quantity="rho", case=base.case, span=base.span,
            value=math.exp(-a) * base.value, gamma=base.gamma,
            ingredients={"const_nonneg_tau": base.value}, combined_se=0.0)
    verdict = analyze.classify(spec, a, crit)[2]
    if not verdict.finite:
        raise InfiniteMomentError(
            f"E e^(a rho) infinite ({verdict.reason})", reason=verdict.reason)
    struct = _case(spec)
    params = analyze.gamma_of(spec, a, crit)
    g = params.gamma
    exg = -dist.laplace_left_derivative(spec, g)

    if struct.is_lattice:
        e_mplus = exact.min_plus_transform(spec, g, crit)
        se_m = 0.0
    else:
        config = _default_config(config)
        mf = walk.estimate_min_functionals(spec, g, config, crit)
        e_mplus = mf["E_exp_neg_gamma_Mplus"].mean
        se_m = mf["E_exp_neg_gamma_Mplus"].std_error

    gf = _gamma_factor(struct, g)
    value = math.exp(-a) * (1.0 - e_mplus) / (gf * exg)
    se = math.exp(-a) * se_m / (gf * exg)
    return AsymptoticConstant(
        quantity="rho", case=struct.kind, span=struct.span, value=value,
        gamma=g,
        ingredients={"E_exp_neg_gamma_Mplus": e_mplus,
                     "E_X_exp_neg_gamma_X": exg},
        combined_se=se)


# ---------------------------------------------------------------------------
# Convergence tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    x: float
    scaled_moment: float
    constant: float
    rel_gap: float


def convergence_table(spec, a, quantity, xs, config=None, crit=None):
    """Rows (x, e^{-gamma x} * moment(x), constant, rel_gap).

    Lattice specs use exact series for tau and rho (Monte Carlo noise
    would mask the gap); everything else is Monte Carlo.
    """
    if quantity not in ("tau", "N", "rho"):
        raise DomainError(f"unknown quantity {quantity!r}")
    if crit is None:
        crit = analyze.critical_data(spec)
    struct = _case(spec)
    if struct.is_lattice:
        lam = struct.span
        for x in xs:
            if abs(x / lam - round(x / lam)) > 1e-9:
                raise DomainError(
                    f"lattice spec: table levels must lie on {lam} * N, "
                    f"got {x}")

    if crit.nonnegative:
        base = const_nonneg_tau(spec, a, crit)
        shift = 1.0 if quantity == "tau" else math.exp(-a)
        const = AsymptoticConstant(
            quantity=quantity, case=base.case, span=base.span,
            value=base.value * shift, gamma=base.gamma,
            ingredients=base.ingredients, combined_se=0.0)
    elif quantity == "tau":
        const = const_tau(spec, a, config, crit)
    elif quantity == "N":
        const = const_N(spec, a, config, crit)
    else:
        const = const_rho(spec, a, config, crit)

    g = const.gamma
    rows = []
    for x in xs:
        m = _moment_at(spec, a, float(x), quantity, struct, crit, config)
        scaled = math.exp(-g * x) * m
        rows.append(TableRow(x=float(x), scaled_moment=scaled,
                             constant=const.value,
                             rel_gap=abs(scaled - const.value) / const.value))
    return const, rows


def _moment_at(spec, a, x, quantity, struct, crit, config):
    if struct.is_lattice:
        if quantity == "tau":
            return exact.exp_moment_tau_exact(spec, a, x, rel_tol=1e-12,
                                              crit=crit).value
        if quantity == "rho":
            return exact.exp_moment_rho_exact(spec, a, x, rel_tol=1e-12,
                                              crit=crit).value
    config = _default_config(config)
    if quantity == "tau" and not crit.nonnegative:
        return walk.estimate_exp_moment_tau_tilted(spec, a, x, config,
                                                   crit).mean
    return walk.estimate_exp_moment_direct(spec, a, x, quantity, config,
                                           crit).mean
