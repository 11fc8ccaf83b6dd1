"""Command-line front end.

Every check prints one line starting with ``OK`` or ``FAIL``.  Exit status
is 0 when all checks pass, 1 when any check fails or a computation raises,
and 2 for usage errors.
"""
import argparse
import math
import os
import sys

import numpy as np

from . import experiments as ex
from . import fem
from .config import ConfigError, SuiteConfig, parse_config
from .geometry import Ball, HalfSpace, KernelParams, support_svg
from .halfspace import a_constant
from .pv import ScalarField, apply_operator, barrier_probe


class UsageError(Exception):
    pass


def _params(args, sigma_default=None):
    sigma = args.sigma if args.sigma is not None else sigma_default
    if args.s is None or sigma is None:
        raise UsageError("--s and --sigma are required")
    try:
        return KernelParams(args.s, sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _report(ok, text):
    print(("OK " if ok else "FAIL ") + text)
    return bool(ok)


def _mesh(args, s):
    beta = fem.auto_grading(s) if args.beta in (None, "auto") else float(args.beta)
    try:
        return fem.build_mesh(args.n_cells, beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_a_sigma(args):
    params = _params(args)
    if args.p is None:
        raise UsageError("--p is required")
    r = a_constant(args.p, params, args.dim)
    out = args.out or "a_sigma.csv"
    ex.write_atomic(out, ex.csv_text(("p", "s", "sigma", "d", "value", "abs_err"),
                                     [(args.p, params.s, params.sigma, args.dim, r.value, r.abs_error_estimate)]))
    return _report(math.isfinite(r.value), f"a_sigma value={r.value:.12g} abs_err={r.abs_error_estimate:.3g}")


def cmd_harmonic(args):
    params = _params(args)
    if args.dim not in (1, 2):
        raise UsageError("harmonic probes need --dim 1 or 2")
    e = 2.0 * params.s - 1.0
    u = ScalarField(lambda y: y[..., -1] ** e)
    rows, ok = [], True
    for xd in (0.1, 1.0, 10.0):
        x = np.zeros(args.dim)
        x[-1] = xd
        r = apply_operator(HalfSpace(args.dim), params, u, x)
        rows.append((params.s, params.sigma, args.dim, xd, r.value, r.abs_error_estimate))
        ok &= _report(abs(r.value) <= 1e-3 / xd, f"harmonic x_d={xd:g} value={r.value:.3e} bound={1e-3 / xd:.1e}")
    ex.write_atomic(args.out or "harmonic.csv",
                    ex.csv_text(("s", "sigma", "dim", "x_d", "value", "abs_err"), rows))
    return ok


def cmd_barrier(args):
    params = _params(args, sigma_default=0.5)
    p = args.p if args.p is not None else 2.0 * params.s - 1.0 + 0.1
    probes = barrier_probe(Ball((0.0, 0.0), 1.0), params, p, ex.BARRIER_RHO)
    rows, ok = [], True
    for rho, v, err in probes:
        rows.append((rho, p, params.s, params.sigma, "ball", v, err))
        ok &= _report(v < 0, f"barrier rho={rho:g} value={v:.6e} abs_err={err:.1e}")
    ex.write_atomic(args.out or "barrier.csv",
                    ex.csv_text(("rho", "p", "s", "sigma", "domain", "value", "abs_err"), rows))
    return ok


def _solve(args):
    params = _params(args)
    mesh = _mesh(args, params.s)
    field, rep = ex.solve_constant_load(mesh, params)
    ex.write_atomic(args.out or "solution.csv", field.to_csv())
    return params, field, rep


def cmd_solve(args):
    params, field, rep = _solve(args)
    umin = float(np.min(field.coefficients))
    return _report(umin >= -1e-8 * rep.linf_norm,
                   f"solve linf={rep.linf_norm:.10g} min={umin:.3e} residual={rep.residual_norm:.2e}")


def cmd_exponent(args):
    params, field, rep = _solve(args)
    fit = ex.fit_boundary_exponent(field, tuple(args.window))
    target = 2.0 * params.s - 1.0
    ok = abs(fit.fitted_exponent - target) <= 0.05 and fit.r_squared >= 0.999
    return _report(ok, f"exponent fitted={fit.fitted_exponent:.6f} target={target:.4f} "
                       f"stderr={fit.stderr:.2e} r2={fit.r_squared:.6f} points={fit.n_points}")


def cmd_compare(args):
    params = _params(args)
    mesh = _mesh(args, params.s)
    rep = ex.comparability_report(mesh, params, 100, args.seed)
    ex.write_atomic(args.out or "compare.csv",
                    ex.csv_text(("s", "sigma", "n_cells", "samples", "min_ratio", "max_ratio", "skipped"),
                                [(params.s, params.sigma, mesh.n_cells, rep.samples, rep.min_ratio,
                                  rep.max_ratio, rep.skipped)]))
    ok = not rep.undefined and rep.min_ratio >= 1 - 1e-6 and math.isfinite(rep.max_ratio)
    return _report(ok, f"compare samples={rep.samples} min_ratio={rep.min_ratio:.9f} max_ratio={rep.max_ratio:.6f}")


def cmd_geometry(args):
    if args.sigma is None:
        raise UsageError("--sigma is required")
    try:
        params = KernelParams(args.s if args.s is not None else 0.75, args.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out or "supports.svg"
    ex.write_atomic(out, support_svg((0.0, 1.0), params))
    return _report(True, f"geometry wrote {out}")


def cmd_suite(args):
    if not args.config:
        raise UsageError("--config is required")
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = parse_config(fh.read())
    except (OSError, ConfigError) as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        config = SuiteConfig(**{**config.__dict__, "output_dir": args.out})
    rows = ex.run_suite(config)
    ok = True
    for exp, crit, expected, observed, tol, passed in rows:
        ok &= _report(passed, f"{exp} {crit} observed={observed}" + ("" if passed else f" expected {expected}"))
    print(f"{'OK' if ok else 'FAIL'} suite {sum(r[5] for r in rows)}/{len(rows)} rows passed; "
          f"artifacts in {os.path.abspath(config.output_dir)}")
    return ok


COMMANDS = {
    "a-sigma": cmd_a_sigma,
    "harmonic": cmd_harmonic,
    "barrier": cmd_barrier,
    "solve": cmd_solve,
    "exponent": cmd_exponent,
    "compare": cmd_compare,
    "geometry": cmd_geometry,
    "suite": cmd_suite,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="vhl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--s", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--p", type=float)
        p.add_argument("--dim", type=int, default=1)
        p.add_argument("--n-cells", type=int, default=1024)
        p.add_argument("--beta", default="auto")
        p.add_argument("--window", type=float, nargs=2, default=(1e-4, 1e-2), metavar=("DMIN", "DMAX"))
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out")
        p.add_argument("--config")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ok = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"FAIL usage: {exc}")
        return 2
    except Exception as exc:  # reported, not raised: exit status carries the failure
        print(f"FAIL {args.command}: {type(exc).__name__}: {exc}")
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
