"""Gauss rules and panel helpers shared by the integrators."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = roots_legendre(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@lru_cache(maxsize=None)
def _jacobi_reference(n, alpha):
    x, w = roots_jacobi(n, 0.0, alpha)
    return x, w


def gauss_jacobi_endpoint(length, alpha, n):
    """Rule for ``int_0^length w**alpha g(w) dw`` as ``sum(W * g(off))``.

    Returns offsets from the singular endpoint and weights that already
    absorb the factor ``w**alpha``.
    """
    x, w = _jacobi_reference(n, float(alpha))
    off = 0.5 * length * (1.0 + x)
    return off, w * (0.5 * length) ** (1.0 + alpha)


def panel_rule(breaks, n):
    """Composite Gauss-Legendre rule over sorted breakpoints.

    ``breaks`` has shape (..., m + 1); the result has shape (..., m * n).
    Degenerate panels get zero weight.
    """
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(n)
    lo = breaks[..., :-1, None]
    h = breaks[..., 1:, None] - lo
    nodes = lo + h * x
    weights = h * w
    shape = breaks.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def geometric_offsets(length, levels):
    """Dyadic offsets ``length * 2**-j`` for j = 0..levels, descending."""
    return length * np.exp2(-np.arange(levels + 1, dtype=float))
