"""Pointwise principal-value evaluation of the operator.

With ``r_in = c/2 * d(x)`` (``c = sigma/(1+sigma)``) the weight is 1 on
``B(x, r_in)``, so the inner part is integrated as a paired second
difference over dyadic shells and the remaining small ball is removed by
Richardson extrapolation in the shell radius.  The outer part is done in
polar coordinates about ``x``: for each direction ``e`` the weight
contributes 1/2 on ``rho < sigma d(x)`` and 1/2 on ``rho < R(e)``, where
``R(e)`` is the reach of the second support along the ray.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .geometry import Ball, HalfSpace, Interval, _as_points
from .quadrature import gauss_legendre, panel_rule


@dataclass(frozen=True)
class ScalarField:
    """Vectorized profile: ``evaluate`` maps points of shape (..., d) to (...)."""

    evaluate: object
    smoothness_note: str = ""

    def __call__(self, pts):
        return np.asarray(self.evaluate(pts), dtype=float)


@dataclass(frozen=True)
class PVResult:
    value: float
    abs_error_estimate: float
    epsilon_trace: list = field(default_factory=list)


class ExtrapolationFailure(RuntimeError):
    pass


N_SHELLS = 6
_RAD_CAP = 60  # geometric radial panels beyond r_in before the tail formula


def _field(u):
    return u if isinstance(u, ScalarField) else ScalarField(u)


def _graded_breaks(lo, hi, n_base, lo_levels, hi_levels):
    """Uniform base panels plus dyadic refinement toward each end."""
    base = np.linspace(lo, hi, n_base + 1)
    h = (hi - lo) / n_base
    off_lo = h * np.exp2(-np.arange(1, lo_levels + 1, dtype=float))
    off_hi = h * np.exp2(-np.arange(1, hi_levels + 1, dtype=float))
    return np.unique(np.concatenate([base, lo + off_lo, hi - off_hi]))


def _angular_rule(theta_ref, levels, n_base=8, order=16, back_levels=6):
    # two half circles meeting at the inward normal (graded by ``levels``)
    # and at the outward normal
    b1 = _graded_breaks(theta_ref - math.pi, theta_ref, n_base, back_levels, levels)
    b2 = _graded_breaks(theta_ref, theta_ref + math.pi, n_base, levels, back_levels)
    th1, w1 = panel_rule(b1, order)
    th2, w2 = panel_rule(b2, order)
    return np.concatenate([th1, th2]), np.concatenate([w1, w2])


def _ray_integral(u, ux, x, dirs, lo, hi, s, order, top_levels, kinks):
    """``int_lo^hi (u(x) - u(x + rho e)) rho**(-1-2s) drho`` for each direction.

    Returns (values, tail_error) arrays over directions.
    """
    n = len(dirs)
    cap = lo * 2.0**_RAD_CAP
    top = np.minimum(hi, cap)
    ratio = np.max(top) / lo
    J = max(1, int(math.ceil(math.log2(ratio)))) if ratio > 1 else 1
    geo = lo * np.exp2(np.arange(1, J + 1, dtype=float))
    parts = [np.full((n, 1), lo), np.minimum(geo[None, :], top[:, None])]
    if top_levels:
        span = (top - lo)[:, None]
        off = span * np.exp2(-np.arange(1, top_levels + 1, dtype=float))[None, :]
        parts.append(np.where(hi[:, None] <= cap, top[:, None] - off, top[:, None]))
    k = np.where((kinks > lo) & (kinks < top[:, None]), kinks, top[:, None])
    parts += [k, top[:, None]]
    breaks = np.sort(np.concatenate(parts, axis=1), axis=1)
    rho, w = panel_rule(breaks, order)
    pts = x + rho[..., None] * dirs[:, None, :]
    vals = np.sum((ux - u(pts)) * rho ** (-1.0 - 2.0 * s) * w, axis=1)
    # beyond the cap: the u(x) part exactly; the u(y) part from a local power
    # law fitted at cap/2 and cap, with its full size kept as the error
    beyond = hi > cap
    tail_err = np.zeros(n)
    if np.any(beyond):
        with np.errstate(divide="ignore"):
            hi_term = np.where(np.isinf(hi), 0.0, hi ** (-2.0 * s))
        vals = vals + np.where(beyond, ux * (cap ** (-2.0 * s) - hi_term) / (2.0 * s), 0.0)
        e = dirs[beyond]
        far = u(x + cap * e)
        half = u(x + 0.5 * cap * e)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where((far != 0) & (half != 0), np.log2(np.abs(far / half)), 0.0)
        g = np.minimum(np.nan_to_num(g), 2.0 * s - 0.05)
        ratio = np.where(np.isinf(hi[beyond]), 0.0, hi[beyond] / cap)
        with np.errstate(divide="ignore"):
            frac = 1.0 - np.where(ratio > 0, ratio ** (g - 2.0 * s), 0.0)
        corr = far * cap ** (-2.0 * s) / (2.0 * s - g) * frac
        vals[beyond] -= corr
        tail_err[beyond] = np.abs(corr)
    return vals, tail_err


def _directions(domain, x, sigma):
    d = domain.dim
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d != 2:
        raise ValueError("pointwise evaluation is implemented for d in {1, 2}")
    if isinstance(domain, HalfSpace):
        theta_ref = 0.5 * math.pi
    else:
        z = np.asarray(domain.center) - x
        theta_ref = math.atan2(z[1], z[0]) if np.any(z != 0) else 0.5 * math.pi
    # for sigma = 1 the reach blows up along the inward normal and the
    # angular integrand has a weak power singularity there
    th, w = _angular_rule(theta_ref, levels=36 if sigma == 1.0 else 6)
    return np.stack([np.cos(th), np.sin(th)], axis=1), w


def _inner_shells(u, ux, x, r_in, s, order, n_angle=32):
    """Paired second-difference integrals over the dyadic shells."""
    d = x.shape[0]
    eps = r_in * np.exp2(-np.arange(N_SHELLS + 1, dtype=float))
    breaks = np.stack([eps[1:], eps[:-1]], axis=1)
    h, wh = panel_rule(breaks, order)  # (shells, order)
    if d == 1:
        e = np.array([[1.0]])
        we = np.array([1.0])
    else:
        th = math.pi * np.arange(n_angle) / n_angle
        e = np.stack([np.cos(th), np.sin(th)], axis=1)
        we = np.full(n_angle, math.pi / n_angle)
    disp = h[..., None, None] * e[None, None, :, :]  # (shells, order, angles, d)
    sec = 2.0 * ux - u(x + disp) - u(x - disp)
    dens = sec * (h ** (-1.0 - 2.0 * s) * wh)[..., None]
    return eps, np.einsum("koa,a->k", dens, we), np.abs(dens).sum()


def _richardson_table(values, powers):
    table = [list(values)]
    for g in powers[: len(values) - 1]:
        prev = table[-1]
        f = 1.0 / (2.0**g - 1.0)
        table.append([prev[i + 1] + (prev[i + 1] - prev[i]) * f for i in range(len(prev) - 1)])
    return table


def apply_operator(domain, params, u, x, order=16):
    """Principal value of ``int (u(x) - u(y)) K(x, y) dy`` at ``x``.

    ``u`` must accept arrays of points of shape (..., d).
    """
    u = _field(u)
    s, sigma = params.s, params.sigma
    x = _as_points(x, domain.dim).astype(float).ravel()
    dx = float(domain.dist(x))
    if not dx > 0:
        raise ValueError("x must lie in the open domain")
    ux = float(u(x))
    r_in = 0.5 * params.saturation * dx

    dirs, wdir = _directions(domain, x, sigma)
    kinks = domain.kinks(x, dirs)
    near = np.full(len(dirs), sigma * dx)
    reach = domain.reach(x, dirs, sigma)
    top_levels = 30 if sigma == 1.0 else 4
    v1, t1 = _ray_integral(u, ux, x, dirs, r_in, near, s, order, top_levels, kinks)
    v2, t2 = _ray_integral(u, ux, x, dirs, r_in, reach, s, order, 4, kinks)
    outer = 0.5 * float(np.dot(v1 + v2, wdir))
    # a lower-order pass on the same panels bounds the outer quadrature error
    c1, _ = _ray_integral(u, ux, x, dirs, r_in, near, s, order - 6, top_levels, kinks)
    c2, _ = _ray_integral(u, ux, x, dirs, r_in, reach, s, order - 6, 4, kinks)
    quad_err = 0.5 * abs(float(np.dot(c1 + c2 - v1 - v2, wdir)))
    tail = 0.5 * float(np.dot(t1 + t2, wdir))
    scale = 0.5 * float(np.dot(np.abs(v1) + np.abs(v2), wdir))

    eps, shells, shell_abs = _inner_shells(u, ux, x, r_in, s, order)
    partial = outer + np.concatenate([[0.0], np.cumsum(shells)])
    trace = [(float(e), float(p)) for e, p in zip(eps, partial)]

    powers = [2.0 * m - 2.0 * s for m in range(1, N_SHELLS + 1)]
    table = _richardson_table(partial, powers)
    best = table[-1][0]
    prev = table[-2][-1]
    if not np.isfinite(best):
        raise ExtrapolationFailure("non-finite extrapolated value")
    first = abs(table[1][-1] - table[0][-1])
    last = abs(best - prev)
    # cancellation in the deepest second differences, amplified by extrapolation
    tiny = np.finfo(float).eps * abs(ux) * eps[-1] ** (-2.0 * s) / (2.0 * s)
    rounding = 1e-14 * (scale + shell_abs + abs(ux)) + 30.0 * tiny
    if last > first and last > 1e3 * rounding:
        raise ExtrapolationFailure("extrapolation corrections grow instead of decaying")
    err = last + tail + quad_err + rounding
    return PVResult(float(best), float(err), trace)


def scaling_residual(domain, params, u, x0, r, x):
    """|L on the rescaled domain of u(x0 + r .) at x  -  r**2s L u(x0 + r x)|."""
    u = _field(u)
    d = domain.dim
    x0 = _as_points(x0, d).astype(float).ravel()
    x = _as_points(x, d).astype(float).ravel()
    r = float(r)
    if not r > 0:
        raise ValueError("r must be positive")
    small = domain.scaled(x0, r)
    u_small = ScalarField(lambda y: u(x0 + r * np.asarray(y)))
    lhs = apply_operator(small, params, u_small, x).value
    rhs = r ** (2.0 * params.s) * apply_operator(domain, params, u, x0 + r * x).value
    return abs(lhs - rhs)


def probe_point(domain, rho):
    """Point at distance ``rho`` from the boundary on a fixed inward ray."""
    if isinstance(domain, HalfSpace):
        x = np.zeros(domain.dim)
        x[-1] = rho
        return x
    if isinstance(domain, Ball):
        x = np.array(domain.center, dtype=float)
        x[-1] += domain.radius - rho
        return x
    if isinstance(domain, Interval):
        return np.array([domain.a + rho])
    raise TypeError(f"unsupported domain {domain!r}")


def barrier_probe(domain, params, p, rho_values):
    """Evaluate ``L d**p`` at points at distance rho from the boundary.

    Returns a list of (rho, value, abs_error_estimate).
    """
    if not isinstance(domain, (Ball, HalfSpace)):
        raise ValueError("barrier probes need a Ball or HalfSpace domain")
    limit = 0.25 * domain.inradius
    u = ScalarField(lambda y: domain.dist(y) ** p, "power of the distance")
    out = []
    for rho in rho_values:
        rho = float(rho)
        if not 0 < rho < limit:
            raise ValueError("rho must be positive and below a quarter of the inradius")
        res = apply_operator(domain, params, u, probe_point(domain, rho))
        out.append((rho, res.value, res.abs_error_estimate))
    return out
