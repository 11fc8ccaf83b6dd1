"""The half-space constant a(p, sigma).

In the half-space ``L y_d**p = a(p, sigma) * x_d**(p - 2s)``.  Reducing the
principal value along the normal direction gives

    a = int_0^1 (1 - t**p)(1 - t**q) |1 - t|**(-1 - 2s) psi(t) dt,
    q = 2s - 1 - p,

with ``psi`` the tangential integral of ``(1 + |u|**2)**(-(d + 2s)/2)``
against the weight.  Everything below works in ``w = 1 - t`` and keeps
``w`` and ``t`` separately so neither endpoint loses digits.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn
from scipy.special import betainc, gamma

from .quadrature import gauss_jacobi_endpoint, gauss_legendre


@dataclass(frozen=True)
class APSigmaResult:
    value: float
    abs_error_estimate: float
    p: float
    params: object
    dimension: int


class QuadratureFailure(RuntimeError):
    pass


def sphere_measure(k):
    """Surface measure of the unit sphere in R^(k+1); the 0-sphere has measure 2."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0)


def radial_mass(r, s, dim):
    """``int_0^r rho**(d-2) (1 + rho**2)**(-(d+2s)/2) drho`` for d >= 2."""
    a = 0.5 * (dim - 1)
    b = s + 0.5
    r = np.asarray(r, dtype=float)
    return 0.5 * beta_fn(a, b) * betainc(a, b, r * r / (1.0 + r * r))


def _psi_wt(w, t, sigma, s, dim):
    # w = 1 - t, both supplied to full relative precision
    # gaps sigma - w and sigma*t - w, each taken from whichever of w, t is small
    gap1 = np.where(t < 0.5, (sigma - 1.0) + t, sigma - w)
    gap2 = np.where(t < 0.5, (1.0 + sigma) * t - 1.0, sigma * t - w)
    on1 = gap1 > 0
    on2 = gap2 > 0
    if dim == 1:
        return 0.5 * (on1.astype(float) + on2.astype(float))
    a = 0.5 * (dim - 1)
    b = s + 0.5

    def truncated(rad, gap, on):
        # with r^2 = (rad/w)^2 - 1, r^2/(1+r^2) = 1 - u and u = (w/rad)^2
        with np.errstate(divide="ignore", invalid="ignore"):
            rr = np.where(on, rad, 1.0)
            u = np.where(on, (w / rr) ** 2, 1.0)
            v = np.where(on, gap * (rad + w) / rr**2, 0.0)
        small = u < 0.5
        out = np.where(small, 1.0 - betainc(b, a, np.where(small, u, 0.0)),
                       betainc(a, b, np.clip(v, 0.0, 1.0)))
        return np.where(on, out, 0.0)

    scale = 0.25 * sphere_measure(dim - 2) * beta_fn(a, b)
    return scale * (truncated(sigma, gap1, on1) + truncated(sigma * t, gap2, on2))


def psi(t, params, dim):
    """Tangential integral of the weight at height ``t`` in (0, 1)."""
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise ValueError("psi needs 0 < t < 1")
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    out = _psi_wt(1.0 - t, t, params.sigma, params.s, dim)
    return float(out) if out.ndim == 0 else out


def psi_full(s, dim):
    """Untruncated tangential integral, the t -> 1 limit of psi."""
    if dim == 1:
        return 1.0
    a = 0.5 * (dim - 1)
    return 0.5 * sphere_measure(dim - 2) * beta_fn(a, s + 0.5)


def check_exponent(p, params):
    if params.sigma == 1.0 and not (-1.0 < p < 2.0 * params.s):
        raise ValueError("for sigma = 1 the exponent p must lie in (-1, 2s)")


def _q_exponent(p, s):
    q = 2.0 * s - 1.0 - p
    # p = 2s - 1 computed elsewhere may differ by an ulp; treat that as exact
    if abs(q) <= 4.0 * np.finfo(float).eps * max(1.0, abs(p)):
        q = 0.0
    return q


class _Rule:
    """Nodes stored as (w, t, log t, weight) with weights including any
    endpoint power absorbed by a Gauss-Jacobi panel."""

    def __init__(self):
        self.parts = []

    def add(self, w, t, logt, weight, kind, power=0.0):
        self.parts.append((w, t, logt, weight, kind, power))


def _graded(lo, hi, levels, toward):
    """Breakpoints on [lo, hi] refined dyadically toward one or both ends."""
    if toward == "both":
        mid = 0.5 * (lo + hi)
        left = _graded(lo, mid, levels, "lo")
        right = _graded(mid, hi, levels, "hi")
        return np.concatenate([left, right[1:]])
    off = (hi - lo) * np.exp2(-np.arange(levels + 1, dtype=float))
    if toward == "lo":
        return np.concatenate([[lo], lo + off[::-1]])
    return np.concatenate([hi - off, [hi]])


def _build_rule(params, dim, p, q, order, split, levels=40):
    """Composite rule over the support of psi in w = 1 - t."""
    s, sigma = params.s, params.sigma
    wb = sigma / (1.0 + sigma)
    x, wts = gauss_legendre(order)
    rule = _Rule()

    def panels(brk):
        if split:
            brk = np.sort(np.concatenate([brk, 0.5 * (brk[:-1] + brk[1:])]))
        lo = brk[:-1, None]
        h = np.diff(brk)[:, None]
        return (lo + h * x).ravel(), (h * wts).ravel()

    # segment 1: w in (0, wb), both radii active
    brk = _graded(0.0, wb, levels, "both")
    jac_len = brk[1]  # innermost piece goes to the Jacobi rule
    nodes, weights = panels(brk[1:])
    rule.add(nodes, 1.0 - nodes, np.log1p(-nodes), weights, "plain")
    off, jw = gauss_jacobi_endpoint(jac_len, 1.0 - 2.0 * s, order + (8 if split else 0))
    rule.add(off, 1.0 - off, np.log1p(-off), jw, "w0")

    # segment 2: w in (wb, sigma), first radius only
    if sigma < 1.0:
        brk = _graded(wb, sigma, levels, "both")
        nodes, weights = panels(brk)
        rule.add(nodes, 1.0 - nodes, np.log1p(-nodes), weights, "plain")
    else:
        # t in (0, 1/2) measured from t = 0, where the integrand is a power of t
        e = min(0.0, p) + min(0.0, q) + 0.5 * (dim - 1)
        tb = 1.0 - wb
        brk = _graded(0.0, tb, levels, "both")
        jac_len = brk[1]
        tn, weights = panels(brk[1:])
        rule.add(1.0 - tn, tn, np.log(tn), weights, "plain")
        off, jw = gauss_jacobi_endpoint(jac_len, e, order + (8 if split else 0))
        rule.add(1.0 - off, off, np.log(off), jw, "t0", e)
    return rule


def _integrate(rule, params, dim, p, q, check_sign=True):
    s, sigma = params.s, params.sigma
    total = 0.0
    sign = None
    for w, t, logt, weight, kind, power in rule.parts:
        num = np.expm1(p * logt) * np.expm1(q * logt)
        ps = _psi_wt(w, t, sigma, s, dim)
        if kind == "plain":
            f = num * w ** (-1.0 - 2.0 * s) * ps
        elif kind == "w0":
            # the rule absorbed w**(1-2s); the rest is num / w**2
            f = num / (w * w) * ps
        else:
            # the rule absorbed t**power near t = 0
            f = num * np.exp(-power * logt) * w ** (-1.0 - 2.0 * s) * ps
        if check_sign:
            nz = f[f != 0.0]
            if nz.size:
                sg = np.sign(nz)
                if np.any(sg != sg[0]) or (sign is not None and sg[0] != sign):
                    raise QuadratureFailure("integrand changed sign across nodes")
                sign = sg[0]
        total += float(np.dot(f, weight))
    return total


def a_constant(p, params, dim, order=16):
    """Half-space constant a(p, sigma) in dimension ``dim``.

    The estimate is the difference between the graded panel rule and the
    same rule with every panel bisected.
    """
    p = float(p)
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    check_exponent(p, params)
    q = _q_exponent(p, params.s)
    if p == 0.0 or q == 0.0:
        return APSigmaResult(0.0, 0.0, p, params, dim)
    coarse = _integrate(_build_rule(params, dim, p, q, order, False), params, dim, p, q)
    fine = _integrate(_build_rule(params, dim, p, q, order, True), params, dim, p, q)
    err = abs(fine - coarse) + 64.0 * np.finfo(float).eps * abs(fine)
    return APSigmaResult(fine, err, p, params, dim)


def sign_grid(params, dim, p_values):
    """Classify the sign of a(p, sigma); |value| <= 3*err counts as zero."""
    out = []
    for p in p_values:
        r = a_constant(p, params, dim)
        if abs(r.value) <= 3.0 * r.abs_error_estimate:
            sg = 0
        else:
            sg = 1 if r.value > 0 else -1
        out.append((float(p), sg))
    return out


def _richardson(values, eps, powers):
    """Eliminate the error terms ``eps**powers[m]`` in turn."""
    table = [list(values)]
    for gam in powers[: len(values) - 1]:
        prev = table[-1]
        ratio = 2.0**gam
        table.append([prev[k + 1] + (prev[k + 1] - prev[k]) / (ratio - 1.0) for k in range(len(prev) - 1)])
    return table


def a_constant_pv_oracle(p, params, levels=5, eps0=None):
    """Direct one-dimensional principal value of ``L y**p`` at ``x = 1``.

    The window (1 - eps, 1 + eps) is replaced by its leading Taylor term
    ``-p(p-1) eps**(2-2s)/(2-2s)`` and the remainder is extrapolated away
    over a dyadic ladder of eps.
    """
    p = float(p)
    check_exponent(p, params)
    if p == 0.0:
        return 0.0
    s, sigma = params.s, params.sigma
    if eps0 is None:
        eps0 = 0.5 * sigma / (1.0 + sigma)
    lo_ball = 1.0 - sigma
    lo_both = 1.0 / (1.0 + sigma)
    hi_both = 1.0 + sigma
    e = -1.0 - 2.0 * s

    def f(y):
        return (1.0 - y**p) * abs(1.0 - y) ** e

    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=400)

    def quad(a, b):
        return integrate.quad(f, a, b, **opts)[0]

    # parts of the support that do not depend on eps
    fixed = 0.5 * quad(lo_ball, lo_both)
    if sigma < 1.0:
        fixed += 0.5 * quad(hi_both, 1.0 / (1.0 - sigma))
    else:
        fixed += 0.5 * integrate.quad(f, hi_both, np.inf, **opts)[0]

    eps = eps0 * np.exp2(-np.arange(levels))
    vals = []
    for ep in eps:
        v = fixed + quad(lo_both, 1.0 - ep) + quad(1.0 + ep, hi_both)
        v += -p * (p - 1.0) * ep ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        vals.append(v)
    powers = [2.0 * m + 2.0 - 2.0 * s for m in range(1, levels)]
    table = _richardson(vals, eps, powers)
    diag = [row[-1] for row in table]
    steps = np.abs(np.diff(diag))
    if len(steps) >= 3 and steps[-1] > steps[0] and steps[-1] > 1e-8 * max(1.0, abs(diag[-1])):
        raise QuadratureFailure("principal-value extrapolation diverged")
    return float(diag[-1])
