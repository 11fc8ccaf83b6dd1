"""Domains, distance functions and the two-ball interaction weight.

The weight between ``x`` and ``y`` is the average of the two strict
indicators ``|x - y| < sigma d(x)`` and ``|x - y| < sigma d(y)``, where
``d`` is the distance to the complement of the domain.  The kernel is the
weight times ``|x - y|**(-d - 2s)``.
"""
from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class KernelParams:
    """Fractional order ``s`` in (1/2, 1) and horizon fraction ``sigma`` in (0, 1]."""

    s: float
    sigma: float

    def __post_init__(self):
        s = float(self.s)
        sigma = float(self.sigma)
        if not (0.5 < s < 1.0):
            raise ValueError("s must lie in (1/2,1)")
        if not (0.0 < sigma <= 1.0):
            raise ValueError("sigma must lie in (0,1]")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "sigma", sigma)

    @property
    def saturation(self):
        """Fraction c with weight 1 on the ball of radius c*d(x) about x."""
        return self.sigma / (1.0 + self.sigma)


def _as_points(x, dim):
    a = np.asarray(x, dtype=float)
    if dim == 1 and (a.ndim == 0 or a.shape[-1] != 1):
        a = a[..., None]
    if a.shape[-1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got shape {a.shape}")
    return a


def _affine_reach(alpha, beta, sigma):
    # sup{rho >= 0 : sigma*(alpha + beta*rho) > rho} for one affine piece
    slope = 1.0 - sigma * beta
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(slope > 0, sigma * alpha / np.where(slope > 0, slope, 1.0), np.inf)
    return np.where(alpha > 0, r, 0.0)


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not float(self.a) < float(self.b):
            raise ValueError("Interval needs a < b")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return 1

    @property
    def inradius(self):
        return 0.5 * (self.b - self.a)

    def dist(self, pts):
        y = _as_points(pts, 1)[..., 0]
        return np.maximum(np.minimum(y - self.a, self.b - y), 0.0)

    def exact_dist(self, y):
        y = Fraction(y[0])
        return max(min(y - Fraction(self.a), Fraction(self.b) - y), Fraction(0))

    def reach(self, x, dirs, sigma):
        x = float(x[0])
        e = np.asarray(dirs, dtype=float)[:, 0]
        r1 = _affine_reach(x - self.a, e, sigma)
        r2 = _affine_reach(self.b - x, -e, sigma)
        return np.minimum(r1, r2)

    def kinks(self, x, dirs):
        e = np.asarray(dirs, dtype=float)[:, 0]
        r = (0.5 * (self.a + self.b) - float(x[0])) * e
        return np.where(r > 0, r, np.inf)[:, None]

    def scaled(self, x0, r):
        x0 = float(np.ravel(x0)[0])
        return Interval((self.a - x0) / r, (self.b - x0) / r)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.ravel(self.center))
        if not c:
            raise DimensionError("empty center")
        if not float(self.radius) > 0:
            raise ValueError("Ball needs radius > 0")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return len(self.center)

    @property
    def inradius(self):
        return self.radius

    def dist(self, pts):
        y = _as_points(pts, self.dim)
        r = np.linalg.norm(y - np.asarray(self.center), axis=-1)
        return np.maximum(self.radius - r, 0.0)

    def exact_dist(self, y):
        return Fraction(float(self.dist(np.asarray(y, dtype=float))))

    def reach(self, x, dirs, sigma):
        z = np.asarray(x, dtype=float) - np.asarray(self.center)
        e = np.asarray(dirs, dtype=float)
        R = self.radius
        c = z @ z - R * R
        if sigma == 1.0:
            return -c / (2.0 * (e @ z + R))
        a = 1.0 - 1.0 / sigma**2
        b = 2.0 * (e @ z + R / sigma)
        disc = np.sqrt(b * b - 4.0 * a * c)
        return -2.0 * c / (b + disc)

    def kinks(self, x, dirs):
        # the distance is not smooth at the center; only rays through it see that
        z = np.asarray(self.center) - np.asarray(x, dtype=float)
        e = np.asarray(dirs, dtype=float)
        along = e @ z
        off = np.linalg.norm(z - along[:, None] * e, axis=-1)
        hit = (along > 0) & (off <= 1e-14 * self.radius)
        return np.where(hit, along, np.inf)[:, None]

    def scaled(self, x0, r):
        x0 = _as_points(x0, self.dim)
        return Ball(tuple((np.asarray(self.center) - x0) / r), self.radius / r)


@dataclass(frozen=True)
class HalfSpace:
    """The set ``{x : x_d > 0}`` in dimension ``d``."""

    d: int

    def __post_init__(self):
        if int(self.d) < 1:
            raise DimensionError("dimension must be >= 1")
        object.__setattr__(self, "d", int(self.d))

    @property
    def dim(self):
        return self.d

    @property
    def inradius(self):
        return math.inf

    def dist(self, pts):
        y = _as_points(pts, self.d)
        return np.maximum(y[..., -1], 0.0)

    def exact_dist(self, y):
        return max(Fraction(y[-1]), Fraction(0))

    def reach(self, x, dirs, sigma):
        e = np.asarray(dirs, dtype=float)[:, -1]
        return _affine_reach(float(x[-1]) + 0.0 * e, e, sigma)

    def kinks(self, x, dirs):
        return np.full((len(dirs), 1), np.inf)

    def scaled(self, x0, r):
        x0 = _as_points(x0, self.d)
        if x0[-1] != 0.0:
            raise ValueError("half-space is invariant only under tangential shifts")
        return HalfSpace(self.d)


DomainSpec = Interval | Ball | HalfSpace


def distance(domain, x):
    """Distance from ``x`` to the complement of ``domain``; 0 outside."""
    return float(domain.dist(_as_points(x, domain.dim)))


def _exact_point(x, dim):
    return [Fraction(v) for v in _as_points(x, dim).ravel()]


def _strict_ball(diff2, radius):
    return radius > 0 and diff2 < radius * radius


def indicator_b(domain, sigma, x, y):
    """Average of the two strict-ball indicators, in {0, 1/2, 1}.

    Interval and half-space distances are rational in the coordinates, so
    the comparison is done exactly on squared quantities.
    """
    sigma = Fraction(float(sigma))
    xs = _exact_point(x, domain.dim)
    ys = _exact_point(y, domain.dim)
    diff2 = sum((u - v) ** 2 for u, v in zip(xs, ys))
    dx = domain.exact_dist(xs)
    dy = domain.exact_dist(ys)
    hits = int(_strict_ball(diff2, sigma * dx)) + int(_strict_ball(diff2, sigma * dy))
    return 0.5 * hits


def kernel(domain, params, x, y):
    """Weight times ``|x - y|**(-d - 2s)``; undefined on the diagonal."""
    xa = _as_points(x, domain.dim)
    ya = _as_points(y, domain.dim)
    r = float(np.linalg.norm(xa - ya))
    if r == 0.0:
        raise ValueError("kernel is singular at x == y")
    b = indicator_b(domain, params.sigma, xa, ya)
    if b == 0.0:
        return 0.0
    return b * r ** (-domain.dim - 2.0 * params.s)


def _halfspace_pair(x, y):
    xs = [Fraction(float(v)) for v in np.ravel(x)]
    ys = [Fraction(float(v)) for v in np.ravel(y)]
    if len(xs) != len(ys):
        raise DimensionError("points differ in dimension")
    if xs[-1] <= 0:
        raise ValueError("x must lie in the open half-space")
    tang2 = sum((u - v) ** 2 for u, v in zip(xs[:-1], ys[:-1]))
    return xs[-1], ys[-1], tang2


def in_far_ball_support(x, sigma, y):
    """Exact test of ``|x - y| < sigma * y_d`` in the half-space."""
    xd, yd, tang2 = _halfspace_pair(x, y)
    sig = Fraction(float(sigma))
    return yd > 0 and tang2 + (xd - yd) ** 2 < sig * sig * yd * yd


def ellipsoid_membership(x, sigma, y):
    """Membership in the ellipsoid ``{y : |x - y| < sigma y_d}`` for sigma < 1.

    Written in center/semi-axis form: center ``x_d / (1 - sigma**2)`` on the
    normal line through ``x``.
    """
    sigma = float(sigma)
    if not 0.0 < sigma < 1.0:
        raise ValueError("ellipsoid form needs 0 < sigma < 1")
    xd, yd, tang2 = _halfspace_pair(x, y)
    sig2 = Fraction(sigma) ** 2
    k = 1 / (1 - sig2)
    center = xd * k
    vert2 = xd * xd * k * (k - 1)
    horiz2 = xd * xd * (k - 1)
    return (yd - center) ** 2 / vert2 + tang2 / horiz2 < 1


def paraboloid_membership(x, y):
    """Membership in the region above ``y_d = x_d/2 + |y' - x'|**2 / (2 x_d)``."""
    xd, yd, tang2 = _halfspace_pair(x, y)
    return tang2 / (2 * xd) + xd / 2 < yd


def ellipse_axes(x_d, sigma):
    """Center height and (horizontal, vertical) semi-axes of the far support."""
    k = 1.0 / (1.0 - sigma * sigma)
    return x_d * k, x_d * math.sqrt(k - 1.0), x_d * math.sqrt(k * (k - 1.0))


BALL_FILL = "#4477aa"
FAR_FILL = "#cc3311"


def _num(v):
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def support_svg(x, params, viewbox=(-3.0, 3.0, 0.0, 5.5), scale=80.0):
    """SVG 1.1 picture of the two supports about ``x`` in the upper half-plane.

    ``viewbox`` is (xmin, xmax, ymin, ymax) in domain units; the y axis is
    flipped so the boundary sits at the bottom.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != 2:
        raise DimensionError("support_svg draws the d = 2 case only")
    if x[1] <= 0:
        raise ValueError("x must lie in the open half-space")
    x0, x1, y0, y1 = (float(v) for v in viewbox)
    sigma = params.sigma
    width = (x1 - x0) * scale
    height = (y1 - y0) * scale

    def sx(u):
        return (u - x0) * scale

    def sy(v):
        return (y1 - v) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_num(width)}" height="{_num(height)}" '
        f'viewBox="0 0 {_num(width)} {_num(height)}">',
        f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="white"/>',
    ]
    if sigma < 1.0:
        cy, rx, ry = ellipse_axes(x[1], sigma)
        out.append(
            f'<ellipse cx="{_num(sx(x[0]))}" cy="{_num(sy(cy))}" rx="{_num(rx * scale)}" '
            f'ry="{_num(ry * scale)}" fill="{FAR_FILL}" fill-opacity="0.5" stroke="{FAR_FILL}"/>'
        )
    else:
        u = np.linspace(x0, x1, 241)
        v = x[1] / 2.0 + (u - x[0]) ** 2 / (2.0 * x[1])
        v = np.minimum(v, y1)
        pts = [f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(u, v)]
        pts += [f"{_num(sx(x1))},{_num(sy(y1))}", f"{_num(sx(x0))},{_num(sy(y1))}"]
        out.append(
            f'<polygon points="{" ".join(pts)}" fill="{FAR_FILL}" fill-opacity="0.5" '
            f'stroke="{FAR_FILL}"/>'
        )
    out.append(
        f'<circle cx="{_num(sx(x[0]))}" cy="{_num(sy(x[1]))}" r="{_num(sigma * x[1] * scale)}" '
        f'fill="{BALL_FILL}" fill-opacity="0.5" stroke="{BALL_FILL}"/>'
    )
    out.append(
        f'<line x1="0" y1="{_num(sy(0.0))}" x2="{_num(width)}" y2="{_num(sy(0.0))}" '
        'stroke="black" stroke-width="2"/>'
    )
    out.append(f'<circle cx="{_num(sx(x[0]))}" cy="{_num(sy(x[1]))}" r="3" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
