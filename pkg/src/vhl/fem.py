"""Piecewise-linear Galerkin solver for the Dirichlet problem on (0, 1).

The energy is ``E(u, v) = 1/2 int int (u(x)-u(y))(v(x)-v(y)) K(x, y)``.
Because the integrand is symmetric, the two-ball weight can be replaced by
the one-sided indicator ``|x - y| < sigma d(x)`` without changing E, so
for ``x`` in a cell the partner ``y`` runs over an interval whose ends are
linear in ``x``.  Cell pairs are then integrated as follows:

* identical cells: ``u(x) - u(y)`` is a multiple of ``x - y``, and the
  inner integral of ``|x - y|**(1-2s)`` is done in closed form;
* adjacent cells: polar-type coordinates about the shared node,
  ``r = |x - y|``, where the ``r`` integral is exact and the angular
  variable is integrated with Gauss rules split at the kinks;
* distant cells: tensor Gauss-Legendre, split where the horizon line
  crosses the pair and refined geometrically toward the gap when the cells
  are large compared with their separation.

Node positions near x = 1 are not representable for strong grading, so
offsets between nodes are formed from the exact distances to the boundary.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import os
import time

import numpy as np
from scipy import linalg

from .quadrature import gauss_legendre

VARIANTS = ("vanishing-horizon", "regional")

FAR_ORDER = 6
TOUCH_ORDER = 10
LOAD_ORDER = 8
_CHUNK = 40000


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GradedMesh:
    """Symmetric mesh of (0, 1) graded toward both ends.

    ``dist`` holds the exact distance of each node to the boundary and
    ``widths`` the cell lengths; both are computed from the half-mesh map so
    they stay accurate where ``nodes`` rounds to 1.
    """

    nodes: np.ndarray
    dist: np.ndarray
    widths: np.ndarray
    grading_beta: float
    n_cells: int

    @property
    def n_interior(self):
        return self.n_cells - 1

    def key(self):
        return (self.n_cells, float(self.grading_beta))


def auto_grading(s):
    """Default grading exponent min(2/(2s-1), 6)."""
    return min(2.0 / (2.0 * s - 1.0), 6.0)


def build_mesh(n_cells, grading_beta):
    n = int(n_cells)
    if n != n_cells or n < 8 or n % 2:
        raise ValueError("n_cells must be an even integer >= 8")
    beta = float(grading_beta)
    if not beta >= 1.0:
        raise ValueError("grading_beta must be >= 1")
    half = n // 2
    dh = 0.5 * (np.arange(half + 1) / half) ** beta
    dh[half] = 0.5
    wh = np.diff(dh)
    dist = np.concatenate([dh, dh[-2::-1]])
    nodes = np.concatenate([dh, 1.0 - dh[-2::-1]])
    widths = np.concatenate([wh, wh[::-1]])
    for a in (dist, nodes, widths):
        a.flags.writeable = False
    return GradedMesh(nodes, dist, widths, beta, n)


def _offset(mesh, i, j):
    """x_j - x_i computed from boundary distances."""
    half = mesh.n_cells // 2
    d = mesh.dist
    di, dj = d[i], d[j]
    li, lj = i <= half, j <= half
    cross = (0.5 - dj) + (0.5 - di)
    return np.where(li & lj, dj - di, np.where(~li & ~lj, di - dj, np.where(li, cross, -cross)))


def _slope(mesh, c):
    """Derivative of the distance function on cell c."""
    return np.where(c < mesh.n_cells // 2, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class StiffnessMatrix:
    matrix: np.ndarray
    kernel_variant: str
    mesh: GradedMesh
    params: object
    assembly_seconds: float = 0.0

    def to_csv(self):
        rows = ["i,j,value"]
        n = self.matrix.shape[0]
        for i in range(n):
            for j in range(n):
                rows.append(f"{i},{j},{self.matrix[i, j]:.17g}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class SolutionField:
    mesh: GradedMesh
    coefficients: np.ndarray
    params: object
    kernel_variant: str = "vanishing-horizon"

    def nodal_values(self):
        """Values at all mesh nodes, zero at the two boundary nodes."""
        return np.concatenate([[0.0], np.asarray(self.coefficients, dtype=float), [0.0]])

    @classmethod
    def from_function(cls, mesh, params, fn, kernel_variant="vanishing-horizon"):
        """Sample ``fn(x, d)`` at the interior nodes."""
        inner = slice(1, mesh.n_cells)
        return cls(mesh, np.asarray(fn(mesh.nodes[inner], mesh.dist[inner]), dtype=float),
                   params, kernel_variant)

    def to_csv(self):
        vals = self.nodal_values()
        rows = ["node,x,u"]
        rows += [f"{i},{x:.17g},{v:.17g}" for i, (x, v) in enumerate(zip(self.mesh.nodes, vals))]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class SolveReport:
    residual_norm: float
    assembly_seconds: float
    solve_seconds: float
    linf_norm: float


def worker_count():
    try:
        return max(1, int(os.environ.get("VHL_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- touching cells

def _power_integral(alpha, beta, p0, p1, q):
    """int_p0^p1 (alpha + beta*xi)**q dxi for beta != 0."""
    e0 = np.maximum(alpha + beta * p0, 0.0)
    e1 = np.maximum(alpha + beta * p1, 0.0)
    return (e1 ** (q + 1.0) - e0 ** (q + 1.0)) / (beta * (q + 1.0))


def _identical_cells(mesh, params, regional):
    """Local matrices on identical cells: (nodes, 2x2 blocks)."""
    s, sigma = params.s, params.sigma
    c = np.arange(mesh.n_cells)
    h = mesh.widths
    q = 2.0 - 2.0 * s
    if regional:
        integral = 2.0 * h ** (3.0 - 2.0 * s) / (q * (3.0 - 2.0 * s))
    else:
        dl = mesh.dist[c]
        sg = _slope(mesh, c)
        with np.errstate(divide="ignore", invalid="ignore"):
            xa = np.where(1.0 - sigma * sg > 0, sigma * dl / (1.0 - sigma * sg), h)
            xb = np.where(1.0 + sigma * sg > 0, (h - sigma * dl) / (1.0 + sigma * sg), 0.0)
        br = np.sort(np.stack([np.zeros_like(h), np.clip(xa, 0, h), np.clip(xb, 0, h), h], axis=1), axis=1)
        integral = np.zeros_like(h)
        for k in range(3):
            p0, p1 = br[:, k], br[:, k + 1]
            m = 0.5 * (p0 + p1)
            horizon = sigma * (dl + sg * m)
            # left extent min(xi, sigma d), right extent min(h - xi, sigma d)
            left = np.where(m < horizon,
                            _power_integral(0.0, 1.0, p0, p1, q),
                            _power_integral(sigma * dl, sigma * sg, p0, p1, q))
            right = np.where(h - m < horizon,
                             _power_integral(h, -1.0, p0, p1, q),
                             _power_integral(sigma * dl, sigma * sg, p0, p1, q))
            integral += np.where(p1 > p0, left + right, 0.0)
        integral /= q
    blocks = (integral / h**2)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return np.stack([c, c + 1], axis=1), blocks


def _adjacent_cells(mesh, params, regional):
    """Local 3x3 matrices for ordered pairs of cells sharing a node."""
    s, sigma = params.s, params.sigma
    n = mesh.n_cells
    k = np.concatenate([np.arange(n - 1), np.arange(1, n)])
    right = np.concatenate([np.ones(n - 1, bool), np.zeros(n - 1, bool)])
    l = np.where(right, k + 1, k - 1)
    b = np.where(right, k + 1, k)
    far_k = np.where(right, k, k + 1)
    far_l = np.where(right, l + 1, l)
    hk, hl = mesh.widths[k], mesh.widths[l]
    db = mesh.dist[b]
    kap = np.where(right, -_slope(mesh, k), _slope(mesh, k))

    cand = [np.zeros_like(hk), np.ones_like(hk), hk / (hk + hl)]
    if not regional:
        with np.errstate(divide="ignore", invalid="ignore"):
            den2 = sigma * db + sigma * kap * hk
            cand.append(np.where(den2 > 0, hk / den2, 0.0))
            den3 = sigma * db - sigma * kap * hl
            cand.append(np.where(den3 != 0, (sigma * db - hl) / den3, 0.0))
    levels = int(math.ceil(np.log2(np.max((hk + hl) / np.minimum(hk, hl))))) + 4
    geo = np.exp2(-np.arange(1, levels + 1, dtype=float))
    cand += [np.broadcast_to(geo, (len(k), levels)).T, np.broadcast_to(1.0 - geo, (len(k), levels)).T]
    br = np.sort(np.clip(np.vstack([np.atleast_2d(c) for c in cand]).T, 0.0, 1.0), axis=1)

    x, w = gauss_legendre(TOUCH_ORDER)
    lo = br[:, :-1, None]
    span = np.diff(br, axis=1)[..., None]
    tau = (lo + span * x).reshape(len(k), -1)
    wt = (span * w).reshape(len(k), -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.minimum(hk[:, None] / tau, hl[:, None] / (1.0 - tau))
        if not regional:
            den = 1.0 - sigma * kap[:, None] * tau
            RB = np.where(den > 0, sigma * db[:, None] / np.where(den > 0, den, 1.0), np.inf)
            R = np.minimum(R, RB)
    radial = np.where(wt > 0, R ** (3.0 - 2.0 * s), 0.0) * wt / (3.0 - 2.0 * s)
    qv = np.stack([tau / hk[:, None],
                   (1.0 - tau) / hl[:, None] - tau / hk[:, None],
                   -(1.0 - tau) / hl[:, None]], axis=-1)
    blocks = np.einsum("pn,pni,pnj->pij", radial, qv, qv)
    return np.stack([far_k, b, far_l], axis=1), blocks


# ---------------------------------------------------------------- distant cells

_MOMENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def _blocks_from_moments(m):
    m00, m10, m01, m20, m11, m02 = (m[:, i] for i in range(6))
    out = np.empty((len(m00), 4, 4))
    out[:, 0, 0] = m00 - 2.0 * m10 + m20
    out[:, 0, 1] = out[:, 1, 0] = m10 - m20
    out[:, 1, 1] = m20
    out[:, 2, 2] = m00 - 2.0 * m01 + m02
    out[:, 2, 3] = out[:, 3, 2] = m01 - m02
    out[:, 3, 3] = m02
    out[:, 0, 2] = out[:, 2, 0] = -(m00 - m10 - m01 + m11)
    out[:, 0, 3] = out[:, 3, 0] = -(m01 - m11)
    out[:, 1, 2] = out[:, 2, 1] = -(m10 - m11)
    out[:, 1, 3] = out[:, 3, 1] = -m11
    return out


def _tensor_basis():
    x, w = gauss_legendre(FAR_ORDER)
    a = x[:, None] * np.ones(FAR_ORDER)[None, :]
    b = np.ones(FAR_ORDER)[:, None] * x[None, :]
    ww = w[:, None] * w[None, :]
    return np.stack([(ww * a**p * b**q).ravel() for p, q in _MOMENTS], axis=1)


def _fast_moments(g, hk, hl, s):
    x, _ = gauss_legendre(FAR_ORDER)
    t = g[:, None, None] + hk[:, None, None] * x[None, :, None] + hl[:, None, None] * x[None, None, :]
    k = t.reshape(len(g), -1) ** (-1.0 - 2.0 * s)
    return (k @ _tensor_basis()) * (hk * hl)[:, None]


def _geometric_breaks(start, length, top, levels):
    """start + length*(2**j - 1) for j = 1..levels, clipped to top."""
    j = np.exp2(np.arange(1, levels + 1, dtype=float)) - 1.0
    return np.minimum(start[..., None] + length[..., None] * j, top[..., None])


def _general_moments(g, hk, hl, A, Bc, s, regional):
    """Moments on pairs that straddle the horizon or sit close together.

    Coordinates: xi is the distance of x from the end of its cell facing the
    partner, eta that of y from its end facing x, so |x - y| = g + xi + eta.
    The partner extent allowed by the horizon is eta < A + Bc*xi.
    """
    P = len(g)
    x, w = gauss_legendre(FAR_ORDER)
    jx = max(1, int(math.ceil(np.log2(np.max(hk / g) + 1.0))))
    jy = max(1, int(math.ceil(np.log2(np.max(hl / g) + 1.0))))
    cand = [np.zeros((P, 1)), hk[:, None], _geometric_breaks(np.zeros(P), g, hk, jx)]
    if not regional:
        with np.errstate(divide="ignore", invalid="ignore"):
            for target in (np.zeros(P), hl):
                xi = np.where(Bc != 0, (target - A) / np.where(Bc != 0, Bc, 1.0), 0.0)
                cand.append(np.clip(xi, 0.0, hk)[:, None])
    bx = np.sort(np.concatenate(cand, axis=1), axis=1)
    span = np.diff(bx, axis=1)[..., None]
    xi = (bx[:, :-1, None] + span * x).reshape(P, -1)
    wx = (span * w).reshape(P, -1)

    if regional:
        ymax = np.broadcast_to(hl[:, None], xi.shape)
    else:
        ymax = np.clip(A[:, None] + Bc[:, None] * xi, 0.0, hl[:, None])
    delta = g[:, None] + xi
    by = np.concatenate([np.zeros(xi.shape + (1,)),
                         _geometric_breaks(np.zeros_like(xi), delta, ymax, jy),
                         ymax[..., None]], axis=-1)
    by = np.sort(by, axis=-1)
    spy = np.diff(by, axis=-1)[..., None]
    eta = (by[..., :-1, None] + spy * x).reshape(P, xi.shape[1], -1)
    wy = (spy * w).reshape(P, xi.shape[1], -1)

    kern = (delta[..., None] + eta) ** (-1.0 - 2.0 * s) * wy * wx[..., None]
    a = (xi / hk[:, None])[..., None]
    b = eta / hl[:, None, None]
    return np.stack([np.sum(kern * a**p * b**q, axis=(1, 2)) for p, q in _MOMENTS], axis=1)


def _distant_chunk(mesh, params, regional, rows):
    s, sigma = params.s, params.sigma
    n = mesh.n_cells
    k, l = np.meshgrid(rows, np.arange(n), indexing="ij")
    keep = np.abs(k - l) >= 2
    k, l = k[keep], l[keep]
    right = l > k
    near_k = np.where(right, k + 1, k)
    far_k = np.where(right, k, k + 1)
    near_l = np.where(right, l, l + 1)
    far_l = np.where(right, l + 1, l)
    hk, hl = mesh.widths[k], mesh.widths[l]
    g = np.abs(_offset(mesh, near_k, near_l))
    if regional:
        A = np.full_like(g, np.inf)
        Bc = np.zeros_like(g)
        inside = np.ones(len(g), bool)
        outside = np.zeros(len(g), bool)
    else:
        kap = np.where(right, -_slope(mesh, k), _slope(mesh, k))
        A = sigma * mesh.dist[near_k] - g
        Bc = sigma * kap - 1.0
        y0, yh = A, A + Bc * hk
        inside = np.minimum(y0, yh) >= hl
        outside = np.maximum(y0, yh) <= 0.0
    separated = np.maximum(hk, hl) <= g
    fast = inside & separated
    general = ~outside & ~fast

    nodes = np.stack([near_k, far_k, near_l, far_l], axis=1)
    blocks = np.zeros((len(g), 4, 4))
    if np.any(fast):
        blocks[fast] = _blocks_from_moments(_fast_moments(g[fast], hk[fast], hl[fast], s))
    idx = np.flatnonzero(general)
    for start in range(0, len(idx), 500):
        sel = idx[start:start + 500]
        m = _general_moments(g[sel], hk[sel], hl[sel], A[sel], Bc[sel], s, regional)
        blocks[sel] = _blocks_from_moments(m)
    live = fast | general
    return nodes[live], blocks[live]


def _scatter(ndof, nodes, blocks, scale=0.5):
    """Dense accumulation of local blocks onto interior dofs."""
    dof = nodes - 1
    ok = (dof >= 0) & (dof < ndof)
    r = np.broadcast_to(dof[:, :, None], blocks.shape)
    c = np.broadcast_to(dof[:, None, :], blocks.shape)
    mask = ok[:, :, None] & ok[:, None, :]
    flat = r[mask] * ndof + c[mask]
    return np.bincount(flat, weights=scale * blocks[mask], minlength=ndof * ndof)


_CACHE = {}


def assemble_stiffness(mesh, params, variant="vanishing-horizon", cells=None):
    """Dense matrix of E(phi_i, phi_j) over the interior hat functions.

    ``cells``, if given, restricts the double integral to pairs of cells
    from that set (used to isolate local interactions).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    key = (mesh.key(), params.s, params.sigma, variant)
    if cells is None and key in _CACHE:
        return _CACHE[key]
    t0 = time.perf_counter()
    regional = variant == "regional"
    ndof = mesh.n_interior
    n = mesh.n_cells
    pick = None if cells is None else np.zeros(n, bool)
    if pick is not None:
        pick[np.asarray(cells)] = True

    def filt(nodes, blocks, pair_cells):
        if pick is None:
            return nodes, blocks
        keep = np.all(pick[pair_cells], axis=1)
        return nodes[keep], blocks[keep]

    total = np.zeros(ndof * ndof)
    nd, bl = _identical_cells(mesh, params, regional)
    c = np.arange(n)
    total += _scatter(ndof, *filt(nd, bl, np.stack([c, c], axis=1)))
    nd, bl = _adjacent_cells(mesh, params, regional)
    kk = np.concatenate([np.arange(n - 1), np.arange(1, n)])
    ll = np.concatenate([np.arange(1, n), np.arange(n - 1)])
    total += _scatter(ndof, *filt(nd, bl, np.stack([kk, ll], axis=1)))

    step = max(1, _CHUNK // n)
    chunks = [np.arange(a, min(a + step, n)) for a in range(0, n, step)]
    if pick is not None:
        chunks = [ch[pick[ch]] for ch in chunks]
        chunks = [ch for ch in chunks if len(ch)]

    def work(rows):
        nodes, blocks = _distant_chunk(mesh, params, regional, rows)
        if pick is not None:
            cells_k = np.where(nodes[:, 0] < nodes[:, 1], nodes[:, 0], nodes[:, 1])
            cells_l = np.where(nodes[:, 2] < nodes[:, 3], nodes[:, 2], nodes[:, 3])
            keep = pick[cells_k] & pick[cells_l]
            nodes, blocks = nodes[keep], blocks[keep]
        return _scatter(ndof, nodes, blocks)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        for part in pool.map(work, chunks):
            total += part
    A = total.reshape(ndof, ndof)
    A = np.triu(A) + np.triu(A, 1).T
    out = StiffnessMatrix(A, variant, mesh, params, time.perf_counter() - t0)
    if cells is None:
        if len(_CACHE) > 16:
            _CACHE.clear()
        _CACHE[key] = out
    return out


def assemble_load(mesh, f):
    """Load vector int f phi_i with an order-8 Gauss rule per cell."""
    x, w = gauss_legendre(LOAD_ORDER)
    h = mesh.widths[:, None]
    left = mesh.nodes[:-1, None]
    pts = left + h * x
    fv = np.asarray(f(pts), dtype=float) * np.ones_like(pts)
    lo = np.sum(fv * (1.0 - x) * w * h, axis=1)
    hi = np.sum(fv * x * w * h, axis=1)
    b = np.zeros(mesh.n_cells + 1)
    b[:-1] += lo
    b[1:] += hi
    return b[1:-1]


def solve_dirichlet(A, b):
    """Cholesky solve of the Galerkin system."""
    t0 = time.perf_counter()
    M = A.matrix
    b = np.asarray(b, dtype=float)
    try:
        factor = linalg.cho_factor(M, lower=False, check_finite=True)
    except linalg.LinAlgError as exc:
        raise AssemblyError("non-positive pivot: stiffness matrix is not positive definite") from exc
    u = linalg.cho_solve(factor, b)
    elapsed = time.perf_counter() - t0
    res = float(np.linalg.norm(M @ u - b))
    field = SolutionField(A.mesh, u, A.params, A.kernel_variant)
    linf = float(np.max(np.abs(u))) if u.size else 0.0
    return field, SolveReport(res, A.assembly_seconds, elapsed, linf)


def energy(field, variant="vanishing-horizon"):
    """c^T A c for the requested kernel variant."""
    c = np.asarray(field.coefficients, dtype=float)
    A = assemble_stiffness(field.mesh, field.params, variant).matrix
    return float(c @ A @ c)
