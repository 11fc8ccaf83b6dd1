"""Boundary-behaviour diagnostics and the end-to-end verification suite."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import csv
import io
import math
import os
import tempfile

import numpy as np
from scipy import stats

from . import fem
from .geometry import Ball, HalfSpace, KernelParams
from .halfspace import a_constant, a_constant_pv_oracle, sign_grid
from .pv import ScalarField, apply_operator, barrier_probe, scaling_residual

EXPERIMENTS = ("a_sigma", "harmonic", "scaling", "barrier", "solve", "stability", "compare")


# ---------------------------------------------------------------- random numbers

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed, n):
    """First ``n`` outputs of the splitmix64 generator started at ``seed``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a non-negative 64-bit integer")
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform_samples(seed, n, lo=-1.0, hi=1.0):
    """Uniform draws on [lo, hi) from the top 53 bits of splitmix64."""
    u = (splitmix64(seed, n) >> np.uint64(11)).astype(float) * 2.0**-53
    return lo + (hi - lo) * u


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class ExponentFitReport:
    fitted_exponent: float
    stderr: float
    window: tuple
    n_points: int
    r_squared: float


def _left_layer(field):
    mesh = field.mesh
    idx = np.arange(1, mesh.n_cells // 2 + 1)
    return mesh.dist[idx], field.nodal_values()[idx]


def fit_boundary_exponent(field, window=(1e-4, 1e-2)):
    """Least-squares slope of log u against log d over the left boundary layer."""
    lo, hi = float(window[0]), float(window[1])
    if not 0.0 < lo < hi <= 0.25:
        raise ValueError("window must satisfy 0 < d_min < d_max <= 1/4")
    d, u = _left_layer(field)
    sel = (d >= lo) & (d <= hi)
    if np.count_nonzero(sel) < 5:
        raise ValueError("fewer than 5 nodes in the fit window")
    if np.any(u[sel] <= 0):
        raise ValueError("field must be positive in the fit window")
    r = stats.linregress(np.log(d[sel]), np.log(u[sel]))
    return ExponentFitReport(float(r.slope), float(r.stderr), (lo, hi),
                             int(np.count_nonzero(sel)), float(min(1.0, r.rvalue**2)))


@dataclass(frozen=True)
class OscillationReport:
    layers: list
    theta: float
    alpha: float


def default_theta(sigma):
    return 4.0 if sigma == 1.0 else 2.0 / (1.0 - sigma) ** 2


def oscillation_decay(field, theta, n_layers, exponent=None):
    """Extrema of u/d**exponent over the layers theta**-n < d <= theta**(1-n).

    Numbering starts at the first layer reaching below d = 1/2.  ``exponent``
    defaults to 2s - 1.  The decay rate is fitted from log(M_n - m_n)
    against n over complete layers (theta**(1-n) <= 1/2, not cut by the
    midpoint of the interval) with nonzero oscillation.
    """
    theta = float(theta)
    if not theta > 1.0:
        raise ValueError("theta must exceed 1")
    if exponent is None:
        exponent = 2.0 * field.params.s - 1.0
    d, u = _left_layer(field)
    ratio = u / d**exponent
    layers = []
    first = 1
    while theta**-first >= 0.5:
        first += 1
    for n in range(first, first + int(n_layers)):
        sel = (d > theta**-n) & (d <= theta ** (1 - n))
        if not np.any(sel):
            raise ValueError(f"layer {n} contains no mesh nodes")
        hi, lo = float(np.max(ratio[sel])), float(np.min(ratio[sel]))
        layers.append((n, hi, lo, hi - lo))
    n_idx = np.array([row[0] for row in layers], dtype=float)
    osc = np.array([row[3] for row in layers])
    ok = (osc > 0) & (theta ** (1.0 - n_idx) <= 0.5)
    alpha = math.nan
    if np.count_nonzero(ok) >= 2:
        slope = np.polyfit(n_idx[ok], np.log(osc[ok]), 1)[0]
        alpha = float(-slope / math.log(theta))
    return OscillationReport(layers, theta, alpha)


@dataclass(frozen=True)
class ComparabilityReport:
    samples: int
    max_ratio: float
    min_ratio: float
    skipped: int = 0
    undefined: bool = False


def comparability_report(mesh, params, n_samples, seed):
    """Ratio of regional to vanishing-horizon energy over seeded random vectors."""
    n_samples = int(n_samples)
    if n_samples <= 0:
        return ComparabilityReport(0, math.nan, math.nan, 0, True)
    A = fem.assemble_stiffness(mesh, params).matrix
    R = fem.assemble_stiffness(mesh, params, "regional").matrix
    Q = uniform_samples(seed, n_samples * mesh.n_interior).reshape(n_samples, -1)
    e = np.einsum("ki,ij,kj->k", Q, A, Q)
    full = np.einsum("ki,ij,kj->k", Q, R, Q)
    good = e > 0
    skipped = int(n_samples - np.count_nonzero(good))
    if not np.any(good):
        return ComparabilityReport(0, math.nan, math.nan, skipped, True)
    ratio = full[good] / e[good]
    return ComparabilityReport(int(good.sum()), float(ratio.max()), float(ratio.min()), skipped)


def solve_constant_load(mesh, params, variant="vanishing-horizon"):
    A = fem.assemble_stiffness(mesh, params, variant)
    b = fem.assemble_load(mesh, np.ones_like)
    return fem.solve_dirichlet(A, b)


# ---------------------------------------------------------------- suite

SUMMARY_COLUMNS = ("experiment", "criterion", "expected", "observed", "tolerance", "pass")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path, text):
    """Write via a temporary file in the target directory and rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Collector:
    def __init__(self, experiment):
        self.experiment = experiment
        self.rows = []
        self.summary = []

    def check(self, criterion, expected, observed, tolerance, ok):
        self.summary.append((self.experiment, criterion, expected, _fmt(observed), tolerance, bool(ok)))

    def error(self, criterion, exc):
        self.summary.append((self.experiment, criterion, "no error", f"error: {exc}", "", False))


def _pairs(config):
    return [(s, sg) for s in config.s_values for sg in config.sigma_values]


def _beta(config, s):
    b = config.grading_beta
    return fem.auto_grading(s) if b == "auto" else float(b)


def _exp_a_sigma(config):
    col = _Collector("a_sigma")
    for s, sg in _pairs(config):
        params = KernelParams(s, sg)
        for dim in config.dimensions:
            tag = f"s={s} sigma={sg} d={dim}"
            p0 = 2.0 * s - 1.0
            try:
                r = a_constant(p0, params, dim)
                col.rows.append(("zero", s, sg, dim, p0, r.value, r.abs_error_estimate, ""))
                col.check(f"1 {tag}", "|a(2s-1)| <= max(1e-6, err)", r.value,
                          "max(1e-6, err)", abs(r.value) <= max(1e-6, r.abs_error_estimate))
                # the zero must separate opposite signs, not just be imposed
                lo = a_constant(p0 - 1e-3, params, dim).value
                hi = a_constant(p0 + 1e-3, params, dim).value
                col.check(f"1 bracket {tag}", "a(2s-1-1e-3) > 0 > a(2s-1+1e-3)",
                          f"{lo:.6g} / {hi:.6g}", "sign", lo > 0 > hi)
            except Exception as exc:
                col.error(f"1 {tag}", exc)
            try:
                ps = [0.1 * p0, 0.9 * p0, p0, 2.0 * s - 0.05]
                want = [1, 1, 0, -1]
                if sg < 1.0:
                    ps, want = [-0.5] + ps, [-1] + want
                got = sign_grid(params, dim, ps)
                for (p, sgn), w in zip(got, want):
                    col.rows.append(("sign", s, sg, dim, p, sgn, "", w))
                signs = "".join("+0-"[1 - g] for _, g in got)
                col.check(f"2 {tag}", "".join("+0-"[1 - w] for w in want), signs, "exact",
                          [g for _, g in got] == want)
            except Exception as exc:
                col.error(f"2 {tag}", exc)
        for p in (0.2, 0.6, 1.1):
            tag = f"s={s} sigma={sg} p={p}"
            try:
                v = a_constant(p, params, 1)
                ref = a_constant_pv_oracle(p, params)
                col.rows.append(("oracle", s, sg, 1, p, v.value, v.abs_error_estimate, ref))
                tol = 1e-3 * max(1.0, abs(v.value))
                col.check(f"3 {tag}", "a == direct principal value", abs(v.value - ref),
                          f"{tol:.3g}", abs(v.value - ref) <= tol)
            except Exception as exc:
                col.error(f"3 {tag}", exc)
    header = ("kind", "s", "sigma", "dim", "p", "value", "abs_err", "reference")
    return col, {"a_sigma.csv": csv_text(header, col.rows)}


def _exp_harmonic(config):
    col = _Collector("harmonic")
    for s, sg in _pairs(config):
        params = KernelParams(s, sg)
        for dim in [d for d in config.dimensions if d in (1, 2)]:
            dom = HalfSpace(dim)
            u = ScalarField(lambda y, e=2.0 * s - 1.0: y[..., -1] ** e)
            for xd in (0.1, 1.0, 10.0):
                x = np.zeros(dim)
                x[-1] = xd
                tag = f"s={s} sigma={sg} d={dim} x_d={xd}"
                try:
                    r = apply_operator(dom, params, u, x)
                    col.rows.append((s, sg, dim, xd, r.value, r.abs_error_estimate))
                    col.check(f"4 {tag}", "|L y_d^(2s-1)| <= 1e-3/x_d", r.value,
                              f"{1e-3 / xd:.3g}", abs(r.value) <= 1e-3 / xd)
                except Exception as exc:
                    col.error(f"4 {tag}", exc)
    header = ("s", "sigma", "dim", "x_d", "value", "abs_err")
    return col, {"harmonic.csv": csv_text(header, col.rows)}


def _bump(center):
    c = np.asarray(center, dtype=float)
    return ScalarField(lambda y: np.exp(-np.sum((np.asarray(y) - c) ** 2, axis=-1)), "gaussian bump")


def _exp_scaling(config, n_cases=20):
    col = _Collector("scaling")
    pairs = _pairs(config)
    dims = [d for d in config.dimensions if d in (1, 2)] or [1]
    draws = uniform_samples(config.seed, 4 * n_cases, 0.0, 1.0).reshape(n_cases, 4)
    for i in range(n_cases):
        s, sg = pairs[i % len(pairs)]
        dim = dims[i % len(dims)]
        params = KernelParams(s, sg)
        r = 0.25 * 16.0 ** draws[i, 0]
        x0 = np.zeros(dim)
        x = np.zeros(dim)
        if dim == 2:
            x0[0] = 4.0 * draws[i, 1] - 2.0
            x[0] = 2.0 * draws[i, 2] - 1.0
        x[-1] = 0.25 + 1.75 * draws[i, 3]
        u = _bump(x0 + r * x)
        tag = f"case={i} s={s} sigma={sg} d={dim}"
        try:
            res = scaling_residual(HalfSpace(dim), params, u, x0, r, x)
            ref = r ** (2.0 * s) * apply_operator(HalfSpace(dim), params, u, x0 + r * x).value
            rel = res / abs(ref)
            col.rows.append((i, s, sg, dim, r, x0[0], x[0], x[-1], res, rel))
            col.check(f"5 {tag}", "relative scaling residual <= 1e-6", rel, "1e-06", rel <= 1e-6)
        except Exception as exc:
            col.error(f"5 {tag}", exc)
    header = ("case", "s", "sigma", "dim", "r", "x0_1", "x_1", "x_d", "residual", "relative")
    return col, {"scaling.csv": csv_text(header, col.rows)}


BARRIER_RHO = tuple(2.0**-k for k in range(3, 9))


def remainder_slope(rho, values, p, s):
    """Log-log slope of |rho**(2s-p) * value| against rho."""
    rem = np.abs(np.asarray(values) * np.asarray(rho) ** (2.0 * s - p))
    return float(stats.linregress(np.log(rho), np.log(rem)).slope)


def _exp_barrier(config):
    col = _Collector("barrier")
    ball = Ball((0.0, 0.0), 1.0)
    for s in config.s_values:
        params = KernelParams(s, 0.5)
        p = 2.0 * s - 1.0 + 0.1
        try:
            probes = barrier_probe(ball, params, p, BARRIER_RHO)
            for rho, v, err in probes:
                col.rows.append((rho, p, s, 0.5, "ball", v, err))
                col.check(f"10 sign s={s} rho={rho:g}", "L d^(2s-1+0.1) < 0", v, "strict", v < 0)
        except Exception as exc:
            col.error(f"10 sign s={s}", exc)
        p0 = 2.0 * s - 1.0
        try:
            probes = barrier_probe(ball, params, p0, BARRIER_RHO)
            for rho, v, err in probes:
                col.rows.append((rho, p0, s, 0.5, "ball", v, err))
            slope = remainder_slope([q[0] for q in probes], [q[1] for q in probes], p0, s)
            col.check(f"10 remainder s={s}", "log-log slope >= 0.3", slope, "0.3", slope >= 0.3)
        except Exception as exc:
            col.error(f"10 remainder s={s}", exc)
    header = ("rho", "p", "s", "sigma", "domain", "value", "abs_err")
    return col, {"barrier.csv": csv_text(header, col.rows)}


def _exp_solve(config, n_layers=4):
    col = _Collector("solve")
    layer_rows = []
    for s, sg in _pairs(config):
        params = KernelParams(s, sg)
        tag = f"s={s} sigma={sg}"
        try:
            mesh = fem.build_mesh(config.n_cells, _beta(config, s))
            field, rep = solve_constant_load(mesh, params)
            fit = fit_boundary_exponent(field, config.fit_window)
            umin = float(np.min(field.coefficients))
            osc = oscillation_decay(field, default_theta(sg), n_layers)
            col.rows.append((s, sg, mesh.n_cells, mesh.grading_beta, fit.fitted_exponent, fit.stderr,
                             fit.r_squared, fit.n_points, rep.linf_norm, umin, osc.theta, osc.alpha))
            for n, hi, lo, width in osc.layers:
                layer_rows.append((s, sg, n, hi, lo, width))
            target = 2.0 * s - 1.0
            col.check(f"6 {tag}", f"exponent {target:.2f} +- 0.05, r2 >= 0.999",
                      f"{fit.fitted_exponent:.6f} (r2={fit.r_squared:.6f})", "0.05",
                      abs(fit.fitted_exponent - target) <= 0.05 and fit.r_squared >= 0.999)
            col.check(f"8 {tag}", "min u >= -1e-8 ||u||", umin / rep.linf_norm, "1e-08",
                      umin >= -1e-8 * rep.linf_norm)
            widths = [row[3] for row in osc.layers]
            mono = all(b <= a for a, b in zip(widths, widths[1:]))
            col.check(f"11 {tag}", "oscillation nonincreasing, alpha > 0",
                      f"alpha={osc.alpha:.6f}", "0", mono and osc.alpha > 0)
        except Exception as exc:
            col.error(f"6/8/11 {tag}", exc)
    header = ("s", "sigma", "n_cells", "beta", "exponent", "stderr", "r_squared", "n_points",
              "linf", "min_u", "theta", "alpha")
    return col, {"solve.csv": csv_text(header, col.rows),
                 "oscillation.csv": csv_text(("s", "sigma", "layer", "max", "min", "oscillation"), layer_rows)}


STABILITY_SIZES = (128, 256, 512, 1024)


def _exp_stability(config):
    col = _Collector("stability")
    for s, sg in _pairs(config):
        params = KernelParams(s, sg)
        tag = f"s={s} sigma={sg}"
        try:
            norms = []
            for n in STABILITY_SIZES:
                field, rep = solve_constant_load(fem.build_mesh(n, _beta(config, s)), params)
                norms.append(rep.linf_norm)
                col.rows.append((s, sg, n, rep.linf_norm))
            spread = (max(norms) - min(norms)) / max(norms)
            col.check(f"7 {tag}", "relative spread of ||u||_inf < 0.1", spread, "0.1", spread < 0.1)
        except Exception as exc:
            col.error(f"7 {tag}", exc)
    return col, {"stability.csv": csv_text(("s", "sigma", "n_cells", "linf"), col.rows)}


def _exp_compare(config, n_samples=100):
    col = _Collector("compare")
    for s, sg in _pairs(config):
        params = KernelParams(s, sg)
        tag = f"s={s} sigma={sg}"
        try:
            reps = {}
            for n in (128, 256):
                rep = comparability_report(fem.build_mesh(n, _beta(config, s)), params, n_samples, config.seed)
                reps[n] = rep
                col.rows.append((s, sg, n, rep.samples, rep.min_ratio, rep.max_ratio, rep.skipped))
            r = reps[256]
            col.check(f"9 direction {tag}", "min ratio >= 1 - 1e-6, max finite",
                      f"{r.min_ratio:.9f} / {r.max_ratio:.6f}", "1e-06",
                      r.min_ratio >= 1 - 1e-6 and math.isfinite(r.max_ratio))
            drift = abs(r.max_ratio - reps[128].max_ratio) / r.max_ratio
            col.check(f"9 stability {tag}", "max ratio N=128 vs 256 within 20%", drift, "0.2", drift <= 0.2)
        except Exception as exc:
            col.error(f"9 {tag}", exc)
    header = ("s", "sigma", "n_cells", "samples", "min_ratio", "max_ratio", "skipped")
    return col, {"compare.csv": csv_text(header, col.rows)}


_RUNNERS = {
    "a_sigma": _exp_a_sigma,
    "harmonic": _exp_harmonic,
    "scaling": _exp_scaling,
    "barrier": _exp_barrier,
    "solve": _exp_solve,
    "stability": _exp_stability,
    "compare": _exp_compare,
}


def run_suite(config, log=None):
    """Run the configured experiments and write their CSVs plus summary.csv.

    Returns the summary rows; every row carries its own pass flag.
    """
    names = list(config.experiments)
    workers = fem.worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda n: _RUNNERS[n](config), names))
    summary = []
    os.makedirs(config.output_dir, exist_ok=True)
    for name, (col, files) in zip(names, results):
        for fname, text in files.items():
            write_atomic(os.path.join(config.output_dir, fname), text)
        summary.extend(col.summary)
        if log is not None:
            for row in col.summary:
                log(row)
    write_atomic(os.path.join(config.output_dir, "summary.csv"), csv_text(SUMMARY_COLUMNS, summary))
    return summary
