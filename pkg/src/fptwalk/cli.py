"""Command-line entry point.

Subcommands: analyze, tilt-check, simulate, series, asymptote, validate.
Every JSON output echoes the fully resolved configuration, the library
version, and a config hash.  Exit codes: 0 success, 1 input error,
2 refusal because the requested moment is mathematically infinite.

The worker count is deliberately excluded from the echoed config and
its hash: results are byte-identical for any worker count, and the
echo must not break that.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__, analyze, asym, dist, exact, oracle, tilt, walk
from .errors import (ConvergenceError, DomainError, InconsistentTiltError,
                     InfiniteMomentError, SpecError)

_INPUT_ERRORS = (SpecError, DomainError, InconsistentTiltError,
                 ConvergenceError, ValueError, OSError, json.JSONDecodeError)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def _emit(payload, config):
    body = dict(payload)
    body["config"] = config
    body["version"] = __version__
    blob = json.dumps(config, sort_keys=True, default=_json_default)
    body["config_hash"] = hashlib.sha256(blob.encode()).hexdigest()[:16]
    print(json.dumps(body, sort_keys=True, default=_json_default))


def _resolve_seed(args):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("FPT_DEFAULT_SEED")
    if env is not None:
        return int(env)
    return 0


def _config_dict(args, seed=None, **extra):
    cfg = {"subcommand": args.cmd, "dist": getattr(args, "dist", None)}
    for k in ("a", "x", "quantity", "paths", "tolerance", "which", "table"):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if seed is not None:
        cfg["seed"] = seed
    cfg.update(extra)
    return cfg


def _mc_config(args, seed):
    return walk.McConfig(n_paths=args.paths, seed=seed,
                         workers=max(1, args.workers))


def _estimate_dict(est):
    return {"mean": est.mean, "std_error": est.std_error,
            "n_paths": est.n_paths,
            "truncated_fraction": est.truncated_fraction,
            "seed": est.seed, "flags": list(est.flags)}


def _series_dict(res):
    return {"value": res.value, "n_terms": res.n_terms,
            "tail_bound": res.tail_bound, "tail_kind": res.tail_kind,
            "diverged": res.diverged}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_analyze(args):
    spec = dist.load_spec(args.dist)
    crit = analyze.critical_data(spec)
    out = {
        "R": crit.R,
        "gamma0": crit.gamma0,
        "boundary": crit.boundary,
        "t_max": crit.t_max,
        "nonnegative": crit.nonnegative,
        "beta": crit.beta,
        "lattice": dist.lattice_structure(spec).kind,
    }
    if args.a is not None:
        verdicts = analyze.classify(spec, args.a, crit)
        out["verdicts"] = {
            v.quantity: {"finite": v.finite, "reason": v.reason}
            for v in verdicts}
        if all(v.finite for v in verdicts[:1]):
            try:
                out["gamma"] = analyze.gamma_of(spec, args.a, crit).gamma
            except InfiniteMomentError:
                out["gamma"] = None
    _emit(out, _config_dict(args))
    return 0


def _cmd_tilt_check(args):
    spec = dist.load_spec(args.dist)
    crit = analyze.critical_data(spec)
    params = analyze.gamma_of(spec, args.a, crit)
    tspec = tilt.tilt_spec(spec, params)
    out = {
        "a": params.a,
        "gamma": params.gamma,
        "witness": params.witness,
        "tilted_mean": tilt.tilted_mean(spec, params),
        "tilted_spec": dist.spec_to_dict(tspec),
    }
    _emit(out, _config_dict(args))
    return 0


def _emit_paths_csv(path, sample):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "tau", "N", "rho", "S_tau", "overshoot",
                    "truncated"])
        for i in range(len(sample.tau)):
            w.writerow([i, int(sample.tau[i]), int(sample.N[i]),
                        int(sample.rho[i]),
                        repr(float(sample.S_tau[i])),
                        repr(float(sample.overshoot[i])),
                        int(sample.truncated[i])])


def _cmd_simulate(args):
    spec = dist.load_spec(args.dist)
    crit = analyze.critical_data(spec)
    seed = _resolve_seed(args)
    config = _mc_config(args, seed)
    est = walk.estimate_exp_moment_direct(spec, args.a, args.x,
                                          args.quantity, config, crit)
    out = {"estimate": _estimate_dict(est)}
    if args.emit_paths:
        sample = walk.simulate_functionals(spec, args.x, config, crit)
        _emit_paths_csv(args.emit_paths, sample)
        out["paths_csv"] = args.emit_paths
    _emit(out, _config_dict(args, seed=seed))
    return 0


def _cmd_series(args):
    spec = dist.load_spec(args.dist)
    crit = analyze.critical_data(spec)
    tol = args.tolerance if args.tolerance is not None else 1e-9
    if args.which == "K":
        res = exact.K_of(spec, args.a, rel_tol=tol, crit=crit)
    elif args.which == "V":
        res = exact.V_of(spec, args.a, args.x, rel_tol=tol, crit=crit)
    else:
        res = exact.exp_moment_tau_exact(spec, args.a, args.x, rel_tol=tol,
                                         crit=crit)
    _emit({"series": _series_dict(res)}, _config_dict(args))
    return 0


def _parse_table(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise DomainError("table range must be x0:x1:step")
    x0, x1, step = (float(p) for p in parts)
    if step <= 0 or x1 < x0:
        raise DomainError("table range needs step > 0 and x1 >= x0")
    n = int(math.floor((x1 - x0) / step + 1e-9)) + 1
    return [x0 + k * step for k in range(n)]


def _cmd_asymptote(args):
    spec = dist.load_spec(args.dist)
    crit = analyze.critical_data(spec)
    seed = _resolve_seed(args)
    config = _mc_config(args, seed)
    out = {}
    if args.table:
        xs = _parse_table(args.table)
        const, rows = asym.convergence_table(spec, args.a, args.quantity, xs,
                                             config, crit)
        out["table"] = [
            {"x": r.x, "scaled_moment": r.scaled_moment,
             "constant": r.constant, "rel_gap": r.rel_gap} for r in rows]
        if args.output:
            with open(args.output, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "scaled_moment", "constant", "rel_gap"])
                for r in rows:
                    w.writerow([repr(r.x), repr(r.scaled_moment),
                                repr(r.constant), repr(r.rel_gap)])
            out["table_csv"] = args.output
    else:
        crit2 = crit
        if crit.nonnegative:
            const = asym.const_nonneg_tau(spec, args.a, crit2)
        elif args.quantity == "tau":
            const = asym.const_tau(spec, args.a, config, crit2)
        elif args.quantity == "N":
            const = asym.const_N(spec, args.a, config, crit2)
        else:
            const = asym.const_rho(spec, args.a, config, crit2)
    out["constant"] = {
        "quantity": const.quantity, "case": const.case, "span": const.span,
        "value": const.value, "gamma": const.gamma,
        "combined_se": const.combined_se,
    }
    _emit(out, _config_dict(args, seed=seed))
    return 0


def _close(x, y, rel):
    return abs(x - y) <= rel * max(abs(x), abs(y), 1e-12)


def _cmd_validate(args):
    seed = _resolve_seed(args)
    checks = []

    srw = dist.LatticePmf(((1.0, 0.8), (-1.0, 0.2)))
    crit = analyze.critical_data(srw)
    rep = oracle.srw_oracle(0.8, 0.1)
    checks.append(("srw_R", _close(crit.R, rep.quantities["R"], 1e-9)))
    checks.append(("srw_gamma0",
                   _close(crit.gamma0, rep.quantities["gamma0"], 1e-9)))
    m = exact.exp_moment_tau_exact(srw, 0.1, 0.0, crit=crit)
    checks.append(("srw_E_e_a_tau",
                   _close(m.value, rep.quantities["E_e_a_tau"], 1e-8)))
    r = exact.exp_moment_rho_exact(srw, 0.1, 0.0, crit=crit)
    checks.append(("srw_E_e_a_rho",
                   _close(r.value, rep.quantities["E_e_a_rho"], 1e-7)))

    ed = dist.ExpDifference(1.0, 2.0)
    crit2 = analyze.critical_data(ed)
    rep2 = oracle.expdiff_oracle(1.0, 2.0, crit2.R)
    checks.append(("expdiff_R", _close(crit2.R, rep2.quantities["R"], 1e-9)))
    checks.append(("expdiff_gamma0",
                   _close(crit2.gamma0, rep2.quantities["gamma0"], 1e-9)))
    cfg = walk.McConfig(n_paths=args.paths, seed=seed,
                        workers=max(1, args.workers))
    est = walk.estimate_exp_moment_tau_tilted(ed, crit2.R, 0.0, cfg, crit2)
    gap = abs(est.mean - rep2.quantities["E_e_a_tau"])
    checks.append(("expdiff_E_e_R_tau_mc", gap <= 4 * est.std_error))

    spec3, rep3 = oracle.example3_construct(h=1.0, r=3.0, margin=0.05)
    crit3 = analyze.critical_data(spec3)
    checks.append(("boundary_R", _close(crit3.R, rep3.quantities["R"], 1e-7)))
    checks.append(("boundary_flag", crit3.boundary))
    v3 = analyze.classify(spec3, crit3.R, crit3)[2]
    checks.append(("boundary_rho_finite", v3.finite))

    out = {"checks": {name: bool(ok) for name, ok in checks},
           "passed": all(ok for _, ok in checks)}
    _emit(out, _config_dict(args, seed=seed))
    return 0 if out["passed"] else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="fptwalk",
        description="Exponential moments of random-walk passage functionals")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, dist_required=True, needs_a=False):
        if dist_required:
            sp.add_argument("--dist", required=True,
                            help="JSON increment-spec file")
        sp.add_argument("--workers", type=int, default=1)
        if needs_a:
            sp.add_argument("--a", type=float, required=True)

    sp = sub.add_parser("analyze", help="critical data and verdicts")
    common(sp)
    sp.add_argument("--a", type=float, default=None)
    sp.set_defaults(fn=_cmd_analyze)

    sp = sub.add_parser("tilt-check", help="tilted family and witness")
    common(sp, needs_a=True)
    sp.set_defaults(fn=_cmd_tilt_check)

    sp = sub.add_parser("simulate", help="Monte Carlo moment estimate")
    common(sp, needs_a=True)
    sp.add_argument("--x", type=float, required=True)
    sp.add_argument("--quantity", choices=("tau", "N", "rho"), required=True)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--emit-paths", default=None, metavar="FILE.csv")
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("series", help="exact lattice series")
    common(sp, needs_a=True)
    sp.add_argument("--x", type=float, default=0.0)
    sp.add_argument("--which", choices=("K", "V", "tau"), required=True)
    sp.add_argument("--tolerance", type=float, default=None)
    sp.set_defaults(fn=_cmd_series)

    sp = sub.add_parser("asymptote", help="growth constant and table")
    common(sp, needs_a=True)
    sp.add_argument("--quantity", choices=("tau", "N", "rho"), required=True)
    sp.add_argument("--table", default=None, metavar="x0:x1:step")
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--output", default=None, metavar="FILE.csv")
    sp.set_defaults(fn=_cmd_asymptote)

    sp = sub.add_parser("validate", help="oracle pass/fail matrix")
    common(sp, dist_required=False)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=_cmd_validate)

    return p


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except InfiniteMomentError as exc:
        print(json.dumps({"error": "infinite_moment", "message": str(exc),
                          "reason": exc.reason, "version": __version__},
                         sort_keys=True))
        return 2
    except _INPUT_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "version": __version__}, sort_keys=True))
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
