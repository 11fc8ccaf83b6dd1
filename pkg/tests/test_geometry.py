import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vhl.geometry import (
    BALL_FILL,
    FAR_FILL,
    Ball,
    DimensionError,
    HalfSpace,
    Interval,
    KernelParams,
    distance,
    ellipse_axes,
    ellipsoid_membership,
    in_far_ball_support,
    indicator_b,
    kernel,
    paraboloid_membership,
    support_svg,
)

# dyadic coordinates keep scaled and shifted points exactly representable
dyadic = st.integers(-2**12, 2**12).map(lambda k: k / 2**8)
positive_dyadic = st.integers(1, 2**12).map(lambda k: k / 2**8)
sigmas = st.sampled_from([0.25, 0.5, 0.75, 1.0])


def test_params_validation():
    with pytest.raises(ValueError, match=r"s must lie in \(1/2,1\)"):
        KernelParams(0.4, 0.5)
    with pytest.raises(ValueError, match="sigma"):
        KernelParams(0.75, 0.0)
    with pytest.raises(ValueError, match="sigma"):
        KernelParams(0.75, 1.5)
    assert KernelParams(0.75, 0.5).saturation == pytest.approx(1.0 / 3.0)


def test_distance_examples():
    assert distance(Interval(0, 1), 0.3) == pytest.approx(0.3)
    assert distance(HalfSpace(3), (5.0, -2.0, 0.7)) == 0.7
    assert distance(Ball((0.0, 0.0), 1.0), (0.0, 0.0)) == 1.0
    assert distance(Interval(0, 1), 1.5) == 0.0
    assert distance(HalfSpace(2), (0.0, -1.0)) == 0.0
    with pytest.raises(DimensionError):
        distance(HalfSpace(2), (1.0, 2.0, 3.0))


def test_indicator_examples():
    hs = HalfSpace(2)
    assert indicator_b(hs, 1.0, (0.0, 1.0), (0.0, 2.0)) == 0.5
    assert indicator_b(hs, 0.5, (0.3, 1.0), (0.3, 1.0)) == 1.0
    # outside both balls
    assert indicator_b(hs, 0.5, (0.0, 1.0), (0.0, 3.0)) == 0.0
    # tie on a ball boundary counts as outside
    assert indicator_b(Interval(0, 1), 1.0, 0.25, 0.5) == 0.5
    # points outside the closure see nothing
    assert indicator_b(Interval(0, 1), 1.0, 0.5, 1.2) == 0.0


def test_kernel_examples():
    dom = Interval(0, 1)
    p = KernelParams(0.75, 1.0)
    k1 = kernel(dom, p, 0.5, 0.5 + 1e-3)
    k2 = kernel(dom, p, 0.5, 0.5 + 2e-3)
    assert k1 / k2 == pytest.approx(2.0**2.5, rel=1e-12)
    assert kernel(dom, p, 0.5, 0.3) == kernel(dom, p, 0.3, 0.5)
    assert kernel(HalfSpace(2), KernelParams(0.6, 0.5), (0.0, 1.0), (0.0, 5.0)) == 0.0
    with pytest.raises(ValueError):
        kernel(dom, p, 0.5, 0.5)


@given(dyadic, positive_dyadic, dyadic, positive_dyadic, sigmas)
def test_indicator_symmetric(x1, x2, y1, y2, sigma):
    hs = HalfSpace(2)
    assert indicator_b(hs, sigma, (x1, x2), (y1, y2)) == indicator_b(hs, sigma, (y1, y2), (x1, x2))


@given(dyadic, positive_dyadic, dyadic, positive_dyadic, dyadic, sigmas)
def test_indicator_tangential_shift(x1, x2, y1, y2, z, sigma):
    hs = HalfSpace(2)
    assert indicator_b(hs, sigma, (x1 + z, x2), (y1 + z, y2)) == indicator_b(hs, sigma, (x1, x2), (y1, y2))


@given(dyadic, positive_dyadic, dyadic, positive_dyadic, st.integers(-4, 4), sigmas)
def test_indicator_scaling(x1, x2, y1, y2, k, sigma):
    hs = HalfSpace(2)
    a = 2.0**k
    assert indicator_b(hs, sigma, (a * x1, a * x2), (a * y1, a * y2)) == indicator_b(
        hs, sigma, (x1, x2), (y1, y2)
    )


@given(st.floats(0.01, 0.99), st.floats(0.0, 0.999), st.floats(-1.0, 1.0), sigmas)
def test_saturation_neighbourhood_interval(x, frac, sign, sigma):
    dom = Interval(0, 1)
    c = sigma / (1.0 + sigma)
    y = x + math.copysign(frac * c * min(x, 1 - x), sign)
    assert indicator_b(dom, sigma, x, y) == 1.0


@given(st.floats(-1, 1), st.floats(0.05, 5), st.floats(0, 2 * math.pi), st.floats(0, 0.999), sigmas)
def test_saturation_neighbourhood_halfspace(x1, x2, th, frac, sigma):
    c = sigma / (1.0 + sigma)
    r = frac * c * x2
    y = (x1 + r * math.cos(th), x2 + r * math.sin(th))
    assert indicator_b(HalfSpace(2), sigma, (x1, x2), y) == 1.0


@given(dyadic, positive_dyadic, dyadic, dyadic, st.sampled_from([0.25, 0.5, 0.75, 2.0 / 3.0]))
def test_ellipsoid_equals_far_ball(x1, x2, y1, y2, sigma):
    x, y = (x1, x2), (y1, y2)
    assert ellipsoid_membership(x, sigma, y) == in_far_ball_support(x, sigma, y)


@given(dyadic, positive_dyadic, dyadic, dyadic)
def test_paraboloid_equals_far_ball(x1, x2, y1, y2):
    x, y = (x1, x2), (y1, y2)
    assert paraboloid_membership(x, y) == in_far_ball_support(x, 1.0, y)


def test_ellipsoid_examples():
    x = (0.0, 1.0)
    s = 2.0 / 3.0
    cy, rx, ry = ellipse_axes(1.0, s)
    assert (cy, rx, ry) == pytest.approx((9 / 5, math.sqrt(4 / 5), 6 / 5), rel=1e-12)
    assert ellipsoid_membership(x, s, (0.0, 9 / 5))
    assert not ellipsoid_membership(x, s, (0.0, 3.0))
    assert ellipsoid_membership(x, s, x)
    # nothing below x_d / (1 + sigma)
    assert not ellipsoid_membership(x, s, (0.0, 0.599))
    with pytest.raises(ValueError):
        ellipsoid_membership(x, 1.0, x)


@given(dyadic, st.floats(0.01, 3.0), st.sampled_from([0.25, 0.5, 0.75]))
def test_ellipsoid_floor(y1, xd, sigma):
    yd = xd / (1.0 + sigma) * 0.999
    assert not ellipsoid_membership((0.0, xd), sigma, (y1, yd))


def test_paraboloid_examples():
    x = (0.0, 1.0)
    assert not paraboloid_membership(x, (0.0, 0.5))
    assert paraboloid_membership(x, (0.0, 1.0))
    assert not paraboloid_membership(x, (1.0, 1.0))
    assert paraboloid_membership(x, (1.0, 1.01))


def test_svg_ellipse_case():
    svg = support_svg((0.0, 1.0), KernelParams(0.75, 2.0 / 3.0))
    assert svg == support_svg((0.0, 1.0), KernelParams(0.75, 2.0 / 3.0))
    assert svg.startswith("<?xml") and 'version="1.1"' in svg
    assert "<ellipse" in svg and BALL_FILL in svg and FAR_FILL in svg
    # default view: x in (-3, 3), y in (0, 5.5), 80 px per unit
    assert 'cx="240" cy="296" rx="71.5542" ry="96"' in svg
    assert 'r="53.3333"' in svg


def test_svg_parabola_case():
    svg = support_svg((0.0, 1.0), KernelParams(0.75, 1.0))
    assert "<polygon" in svg and "<ellipse" not in svg
    # vertex of y = 1/2 + x^2/2 at screen (240, (5.5 - 0.5) * 80)
    assert "240,400" in svg
    assert 'r="80"' in svg
    with pytest.raises(DimensionError):
        support_svg((0.0, 0.0, 1.0), KernelParams(0.75, 1.0))


def test_reach_matches_far_ball_boundary():
    rng = np.random.default_rng(3)
    for dom, x in [(HalfSpace(2), np.array([0.2, 0.7])), (Ball((0.0, 0.0), 1.0), np.array([0.1, 0.6]))]:
        for sigma in (0.5, 1.0):
            th = rng.uniform(0, 2 * np.pi, 50)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
            R = dom.reach(x, dirs, sigma)
            for e, r in zip(dirs, R):
                if not np.isfinite(r):
                    continue
                inside = x + 0.999 * r * e
                outside = x + 1.001 * r * e
                assert 0.999 * r < sigma * dom.dist(inside)
                assert 1.001 * r >= sigma * dom.dist(outside)


def test_ball_scaled_and_interval_scaled():
    b = Ball((1.0, 2.0), 3.0).scaled(np.array([1.0, 0.0]), 0.5)
    assert b.center == (0.0, 4.0) and b.radius == 6.0
    i = Interval(0, 1).scaled(0.2, 0.5)
    assert (i.a, i.b) == pytest.approx((-0.4, 1.6))
    with pytest.raises(ValueError):
        HalfSpace(2).scaled((0.0, 1.0), 2.0)
