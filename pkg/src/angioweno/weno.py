"""Fifth-order WENO reconstruction of point values from double cell averages.

A double average is the cell average of the running cell average, i.e. the
integral of ``u`` against a hat kernel of half-width ``dx`` centred on the
cell.  Offsets below are measured from the cell centre in units of ``dx``.

Canonical evaluation points (``r = sqrt(15)/10``)::

    L-, L0, L+   left interface  -1/2 + (-r, 0, r)
    R-, R0, R+   right interface +1/2 + (-r, 0, r)
    T1 .. T5     double-average nodes (-2r, -r, 0, r, 2r)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .grid import NGHOST

SQ15 = np.sqrt(15.0)
_R = SQ15 / 10.0

POINT_OFFSETS: dict[str, float] = {
    "L-": -0.5 - _R,
    "L0": -0.5,
    "L+": -0.5 + _R,
    "R-": 0.5 - _R,
    "R0": 0.5,
    "R+": 0.5 + _R,
    "T1": -2 * _R,
    "T2": -_R,
    "T3": 0.0,
    "T4": _R,
    "T5": 2 * _R,
}

LEFT_POINTS = ("L-", "L0", "L+")
RIGHT_POINTS = ("R-", "R0", "R+")
TENSOR_POINTS = ("T1", "T2", "T3", "T4", "T5")

DEFAULT_EPS = 1e-6
SPLIT_THETA = 3.0


def _sym(a, b, c):
    return np.array([a, b, c], dtype=float)


# Closed forms; mirror-image points swap the first and last weights.
_LIN = {
    "L-": _sym((307 + 72 * SQ15) / 960, (8377 - 1542 * SQ15) / 6720, 173 * (-11 + 3 * SQ15) / 3360),
    "L0": _sym(341 / 1200, 337 / 600, 37 / 240),
    "L+": _sym((307 - 72 * SQ15) / 960, (8377 + 1542 * SQ15) / 6720, -173 * (11 + 3 * SQ15) / 3360),
    "T1": _sym((427 + 87 * SQ15) / 1590, 368 / 795, (427 - 87 * SQ15) / 1590),
    "T2": _sym((29147 - 246 * SQ15) / 129360, 35533 / 64680, (29147 + 246 * SQ15) / 129360),
    "T3": _sym(-2 / 15, 19 / 15, -2 / 15),
}
_LIN["R+"] = _LIN["L-"][::-1].copy()
_LIN["R0"] = _LIN["L0"][::-1].copy()
_LIN["R-"] = _LIN["L+"][::-1].copy()
_LIN["T4"] = _LIN["T2"][::-1].copy()
_LIN["T5"] = _LIN["T1"][::-1].copy()
for _v in _LIN.values():
    _v.setflags(write=False)

# central degree-4 polynomial: rows c0..c4, columns u_{i-2}..u_{i+2}
CENTRAL_COEFFS = np.array(
    [
        [2 / 180, -23 / 180, 222 / 180, -23 / 180, 2 / 180],
        [1 / 8, -6 / 8, 0.0, 6 / 8, -1 / 8],
        [-1 / 12, 10 / 12, -18 / 12, 10 / 12, -1 / 12],
        [-1 / 12, 2 / 12, 0.0, -2 / 12, 1 / 12],
        [1 / 24, -4 / 24, 6 / 24, -4 / 24, 1 / 24],
    ]
)

# quadratic sub-stencils: [m][power] -> taps over u_{i-2}..u_{i+2}
SUBSTENCIL_COEFFS = np.array(
    [
        [[-1 / 12, 2 / 12, 11 / 12, 0, 0], [1 / 2, -2, 3 / 2, 0, 0], [1 / 2, -1, 1 / 2, 0, 0]],
        [[0, -1 / 12, 14 / 12, -1 / 12, 0], [0, -1 / 2, 0, 1 / 2, 0], [0, 1 / 2, -1, 1 / 2, 0]],
        [[0, 0, 11 / 12, 2 / 12, -1 / 12], [0, 0, -3 / 2, 2, -1 / 2], [0, 0, 1 / 2, -1, 1 / 2]],
    ]
)


def central_poly_coeffs(s) -> np.ndarray:
    """Coefficients ``c0..c4`` of the degree-4 polynomial in ``(x - x_i)/dx``
    whose double averages over the five stencil cells equal ``s``."""
    return CENTRAL_COEFFS @ np.asarray(s, dtype=float)


def substencil_taps(offset: float) -> np.ndarray:
    """(3, 5) taps giving ``p_m(offset)`` as a dot product with the stencil."""
    powers = np.array([1.0, offset, offset * offset])
    return np.einsum("mpk,p->mk", SUBSTENCIL_COEFFS, powers)


def central_taps(offset: float, deriv: int = 0) -> np.ndarray:
    """Taps for the central polynomial (or its ``deriv``-th derivative in
    units of ``1/dx**deriv``) at ``offset``."""
    powers = np.zeros(5)
    for ell in range(deriv, 5):
        fac = 1.0
        for k in range(deriv):
            fac *= ell - k
        powers[ell] = fac * offset ** (ell - deriv)
    return powers @ CENTRAL_COEFFS


def substencil_values(s, point: float | str) -> np.ndarray:
    offset = POINT_OFFSETS[point] if isinstance(point, str) else float(point)
    return substencil_taps(offset) @ np.asarray(s, dtype=float)


def linear_weights(point: str) -> np.ndarray:
    try:
        return _LIN[point]
    except KeyError:
        raise KeyError(f"unknown evaluation point {point!r}; expected one of {sorted(_LIN)}") from None


def solve_linear_weights(offset: float) -> tuple[np.ndarray, float]:
    """Exactness oracle: weights ``d`` with ``sum_m d_m p_m = p`` for every stencil.

    Returns the least-squares solution of the 5x3 tap system and its residual.
    """
    A = substencil_taps(offset).T
    b = central_taps(offset)
    d, *_ = np.linalg.lstsq(A, b, rcond=None)
    return d, float(np.max(np.abs(A @ d - b)))


@dataclass(frozen=True)
class WeightDiscrepancy:
    point: str
    index: int
    stored: float
    reference: float


def compare_linear_weights(reference: dict[str, tuple[float, float, float]], tol: float = 1e-12) -> list[WeightDiscrepancy]:
    """List every entry of ``reference`` that disagrees with the stored table."""
    out = []
    for point, ref in reference.items():
        stored = linear_weights(point)
        for m in range(3):
            if abs(stored[m] - ref[m]) > tol:
                out.append(WeightDiscrepancy(point, m, float(stored[m]), float(ref[m])))
    return out


@dataclass(frozen=True)
class SmoothnessIndicators:
    beta0: float
    beta1: float
    beta2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2])


def _betas(um2, um1, u0, up1, up2):
    b0 = 13 / 12 * (um2 - 2 * um1 + u0) ** 2 + 0.25 * (um2 - 4 * um1 + 3 * u0) ** 2
    b1 = 13 / 12 * (um1 - 2 * u0 + up1) ** 2 + 0.25 * (um1 - up1) ** 2
    b2 = 13 / 12 * (u0 - 2 * up1 + up2) ** 2 + 0.25 * (3 * u0 - 4 * up1 + up2) ** 2
    return b0, b1, b2


def smoothness(s) -> SmoothnessIndicators:
    s = np.asarray(s, dtype=float)
    return SmoothnessIndicators(*(float(b) for b in _betas(*s)))


def _nonlinear(d: np.ndarray, beta: np.ndarray, eps: float) -> np.ndarray:
    # beta: (..., 3); d: (3,)
    inv = 1.0 / (beta + eps) ** 2
    if np.all(d >= 0):
        wt = d * inv
        return wt / wt.sum(axis=-1, keepdims=True)
    gp = 0.5 * (d + SPLIT_THETA * np.abs(d))
    gm = gp - d
    sp, sm = gp.sum(), gm.sum()
    wp = (gp / sp) * inv
    wm = (gm / sm) * inv
    wp = wp / wp.sum(axis=-1, keepdims=True)
    wm = wm / wm.sum(axis=-1, keepdims=True)
    return sp * wp - sm * wm


def nonlinear_weights(d, beta, eps: float = DEFAULT_EPS) -> np.ndarray:
    if isinstance(beta, SmoothnessIndicators):
        beta = beta.as_array()
    return _nonlinear(np.asarray(d, dtype=float), np.asarray(beta, dtype=float), eps)


def reconstruct_point(s, point: str, linear: bool = False, eps: float = DEFAULT_EPS) -> float:
    s = np.asarray(s, dtype=float)
    d = linear_weights(point)
    p = substencil_values(s, point)
    w = d if linear else nonlinear_weights(d, smoothness(s), eps)
    return float(w @ p)


@numba.njit(cache=True, nogil=True, fastmath=True, error_model="numpy")
def _weno_kernel(v, taps, lin, gp, gm, split, eps, out):
    """Reconstruct along the middle axis of ``v`` (A, n, B) into ``out`` (A, n-4, K, B).

    The innermost loops run over the contiguous last axis so they vectorise.
    """
    A, n, B = v.shape
    K = taps.shape[0]
    i0 = np.empty(B)
    i1 = np.empty(B)
    i2 = np.empty(B)
    for r in range(A):
        for i in range(n - 4):
            a0, a1, a2, a3, a4 = v[r, i], v[r, i + 1], v[r, i + 2], v[r, i + 3], v[r, i + 4]
            for c in range(B):
                t = a0[c] - 2 * a1[c] + a2[c]
                s_ = a0[c] - 4 * a1[c] + 3 * a2[c]
                b0 = 13.0 / 12.0 * t * t + 0.25 * s_ * s_ + eps
                t = a1[c] - 2 * a2[c] + a3[c]
                s_ = a1[c] - a3[c]
                b1 = 13.0 / 12.0 * t * t + 0.25 * s_ * s_ + eps
                t = a2[c] - 2 * a3[c] + a4[c]
                s_ = 3 * a2[c] - 4 * a3[c] + a4[c]
                b2 = 13.0 / 12.0 * t * t + 0.25 * s_ * s_ + eps
                i0[c] = 1.0 / (b0 * b0)
                i1[c] = 1.0 / (b1 * b1)
                i2[c] = 1.0 / (b2 * b2)
            for k in range(K):
                o = out[r, i, k]
                t00, t01, t02 = taps[k, 0, 0], taps[k, 0, 1], taps[k, 0, 2]
                t10, t11, t12 = taps[k, 1, 0], taps[k, 1, 1], taps[k, 1, 2]
                t20, t21, t22 = taps[k, 2, 0], taps[k, 2, 1], taps[k, 2, 2]
                if split[k]:
                    g0, g1, g2, g3 = gp[k, 0], gp[k, 1], gp[k, 2], gp[k, 3]
                    h0, h1, h2, h3 = gm[k, 0], gm[k, 1], gm[k, 2], gm[k, 3]
                    for c in range(B):
                        p0 = t00 * a0[c] + t01 * a1[c] + t02 * a2[c]
                        p1 = t10 * a1[c] + t11 * a2[c] + t12 * a3[c]
                        p2 = t20 * a2[c] + t21 * a3[c] + t22 * a4[c]
                        w0, w1, w2 = g0 * i0[c], g1 * i1[c], g2 * i2[c]
                        z0, z1, z2 = h0 * i0[c], h1 * i1[c], h2 * i2[c]
                        cp = g3 / (w0 + w1 + w2)
                        cm = h3 / (z0 + z1 + z2)
                        o[c] = (cp * w0 - cm * z0) * p0 + (cp * w1 - cm * z1) * p1 + (cp * w2 - cm * z2) * p2
                else:
                    l0, l1, l2 = lin[k, 0], lin[k, 1], lin[k, 2]
                    for c in range(B):
                        p0 = t00 * a0[c] + t01 * a1[c] + t02 * a2[c]
                        p1 = t10 * a1[c] + t11 * a2[c] + t12 * a3[c]
                        p2 = t20 * a2[c] + t21 * a3[c] + t22 * a4[c]
                        w0, w1, w2 = l0 * i0[c], l1 * i1[c], l2 * i2[c]
                        o[c] = (w0 * p0 + w1 * p1 + w2 * p2) / (w0 + w1 + w2)


def _kernel_tables(points):
    K = len(points)
    taps = np.empty((K, 3, 3))
    lin = np.empty((K, 3))
    gp = np.zeros((K, 4))
    gm = np.zeros((K, 4))
    split = np.zeros(K, dtype=np.bool_)
    for k, p in enumerate(points):
        full = substencil_taps(POINT_OFFSETS[p])
        for m in range(3):
            taps[k, m] = full[m, m : m + 3]
        d = linear_weights(p)
        lin[k] = d
        if np.any(d < 0):
            split[k] = True
            tp = 0.5 * (d + SPLIT_THETA * np.abs(d))
            tm = tp - d
            # normalised split weights; column 3 holds the split sums
            gp[k, :3], gp[k, 3] = tp / tp.sum(), tp.sum()
            gm[k, :3], gm[k, 3] = tm / tm.sum(), tm.sum()
    return taps, lin, gp, gm, split


_TABLE_CACHE: dict[tuple, tuple] = {}


def reconstruct(u: np.ndarray, axis: int, points, linear: bool = False, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Reconstruct point values along ``axis`` for every cell with a full stencil.

    The reconstructed axis shrinks by 4 (two cells per side are consumed) and
    a trailing axis over ``points`` is appended.
    """
    u = np.asarray(u, dtype=float)
    axis = axis % u.ndim
    v = np.moveaxis(u, axis, -1)
    n = v.shape[-1]
    if n < 5:
        raise ValueError("need at least five cells along the reconstruction axis")
    points = tuple(points)
    if linear:
        S = np.stack([v[..., k : n - 4 + k] for k in range(5)], axis=-1)
        taps = np.stack([linear_weights(p) @ substencil_taps(POINT_OFFSETS[p]) for p in points], axis=1)
        out = S @ taps
    else:
        if points not in _TABLE_CACHE:
            _TABLE_CACHE[points] = _kernel_tables(points)
        # lead with the reconstruction axis so the kernel's inner loop spans all others
        rest = u.shape[:axis] + u.shape[axis + 1 :]
        v3 = np.ascontiguousarray(np.moveaxis(u, axis, 0)).reshape(1, n, math.prod(rest))
        K = len(points)
        res = np.empty((1, n - 4, K, v3.shape[2]))
        _weno_kernel(v3, *_TABLE_CACHE[points], float(eps), res)
        res = res.reshape((n - 4, K) + rest)
        order = tuple(range(2, 2 + axis)) + (0,) + tuple(range(2 + axis, 2 + len(rest))) + (1,)
        return np.ascontiguousarray(res.transpose(order))
    return np.moveaxis(out, -2, axis)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _central_kernel(v, taps, out):
    A, n, B = v.shape
    K = taps.shape[0]
    for r in range(A):
        for i in range(n - 4):
            for c in range(B):
                for k in range(K):
                    acc = 0.0
                    for m in range(5):
                        acc += taps[k, m] * v[r, i + m, c]
                    out[r, i, c, k] = acc


def evaluate_central(u: np.ndarray, axis: int, offsets, deriv: int = 0) -> np.ndarray:
    """Central polynomial (no nonlinear weighting) or its derivative at arbitrary
    offsets; same shape convention as :func:`reconstruct`.  Derivatives are in
    units of ``1/dx**deriv``.  ``deriv`` may be a sequence matching ``offsets``."""
    u = np.asarray(u, dtype=float)
    axis = axis % u.ndim
    n = u.shape[axis]
    derivs = [deriv] * len(offsets) if np.ndim(deriv) == 0 else list(deriv)
    taps = np.array([central_taps(o, d) for o, d in zip(offsets, derivs)])
    before, after = u.shape[:axis], u.shape[axis + 1 :]
    v3 = np.ascontiguousarray(u).reshape(math.prod(before), n, math.prod(after))
    res = np.empty(v3.shape[:1] + (n - 4,) + v3.shape[2:] + (len(offsets),))
    _central_kernel(v3, taps, res)
    return res.reshape(before + (n - 4,) + after + (len(offsets),))


def positivity_limiter(cell_avg: float, points) -> np.ndarray:
    """Scale point values toward the cell average until none is negative."""
    pts = np.asarray(points, dtype=float)
    theta = limiter_theta(np.asarray(cell_avg, dtype=float), pts.min())
    return cell_avg + theta * (pts - cell_avg)


def limiter_theta(avg: np.ndarray, pmin: np.ndarray) -> np.ndarray:
    avg = np.asarray(avg, dtype=float)
    pmin = np.asarray(pmin, dtype=float)
    theta = np.ones(np.broadcast(avg, pmin).shape)
    neg = pmin < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(neg, avg / (avg - pmin), 1.0)
    theta = np.minimum(theta, scaled)
    theta = np.where(avg <= 0, 0.0, theta)
    return np.clip(theta, 0.0, 1.0)


@dataclass
class Reconstruction:
    """Point values of one field at every node the semi-discrete scheme uses.

    Interface arrays carry (ytilde or xtilde node, Gauss node) in the last two
    axes; interface ``k`` sits at ``x0 + k*dx`` (resp. ``y``).
    """

    xf_minus: np.ndarray | None = None  # (Nx+1, Ny, 5, 3)
    xf_plus: np.ndarray | None = None
    yf_minus: np.ndarray | None = None  # (Nx, Ny+1, 5, 3)
    yf_plus: np.ndarray | None = None
    xc: np.ndarray | None = None  # (Nx+2, Ny, 5): u(x_i, ytilde) for i = -1..Nx
    yc: np.ndarray | None = None  # (Nx, Ny+2, 5): u(xtilde, y_j) for j = -1..Ny
    tensor: np.ndarray | None = None  # (Nx, Ny, 5x, 5y)


def reconstruct_2d(
    U: np.ndarray,
    *,
    linear: bool = False,
    eps: float = DEFAULT_EPS,
    interfaces: bool = True,
    lines: bool = True,
    tensor: bool = True,
    limiter: bool = False,
) -> Reconstruction:
    """Dimension-by-dimension reconstruction from a ghost-padded field.

    ``U`` has ``NGHOST`` ghost layers on every side.  Interface values and the
    tensor nodes reconstruct along y first, the ``u(x_i, .)`` lines along x
    first, and so on, matching the pairing of each quadrature with the
    direction it integrates.  With ``limiter`` every value a cell produced is
    scaled toward that cell's average by one common factor.
    """
    g = NGHOST
    if not np.all(np.isfinite(U)):
        raise FloatingPointError("ghost-padded field contains non-finite values")
    Nx, Ny = U.shape[0] - 2 * g, U.shape[1] - 2 * g
    kw = dict(linear=linear, eps=eps)
    # with the limiter every array spans the ghost ring too, so a ghost cell
    # scales its values by the factor its periodic twin would use
    e = 1 if limiter else 0
    Z = W = xc = yc = None
    if interfaces or tensor or lines:
        Y1 = reconstruct(U, 1, TENSOR_POINTS, **kw)  # (Nx+6, Ny+2, 5)
    if interfaces or lines:
        X1 = reconstruct(U, 0, TENSOR_POINTS, **kw)  # (Nx+2, Ny+6, 5)
    if interfaces or tensor:
        pts = (LEFT_POINTS + RIGHT_POINTS if interfaces else ()) + (TENSOR_POINTS if tensor else ())
        Z = reconstruct(Y1[:, 1 - e : Ny + 1 + e, :], 0, pts, **kw)  # cells -1..Nx in x
    if interfaces:
        W = reconstruct(X1[1 - e : Nx + 1 + e], 1, LEFT_POINTS + RIGHT_POINTS, **kw)  # cells -1..Ny in y
    if lines:
        xc = reconstruct(X1[:, g - 2 - e : g + Ny + 2 + e, 2], 1, TENSOR_POINTS, **kw)  # cells -1..Nx in x
        yc = reconstruct(Y1[g - 2 - e : g + Nx + 2 + e, :, 2], 0, TENSOR_POINTS, **kw)  # cells -1..Ny in y
    if limiter:
        _limit(U, Nx, Ny, Z, W, xc, yc)
        cy, cx = slice(1, Ny + 1), slice(1, Nx + 1)
        Z = Z[:, cy] if Z is not None else None
        xc = xc[:, cy] if xc is not None else None
        W = W[cx] if W is not None else None
        yc = yc[cx] if yc is not None else None

    rec = Reconstruction()
    if interfaces:
        rec.xf_minus = Z[0 : Nx + 1, :, :, 3:6]
        rec.xf_plus = Z[1 : Nx + 2, :, :, 0:3]
        rec.yf_minus = W[:, 0 : Ny + 1, :, 3:6]
        rec.yf_plus = W[:, 1 : Ny + 2, :, 0:3]
    if tensor:
        off = 6 if interfaces else 0
        rec.tensor = np.swapaxes(Z[1 : Nx + 1, :, :, off : off + 5], 2, 3)
    if lines:
        rec.xc = xc
        rec.yc = yc
    return rec


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _cell_min(arr, out):
    n0, n1, K = arr.shape
    for i in range(n0):
        for j in range(n1):
            m = out[i, j]
            for k in range(K):
                if arr[i, j, k] < m:
                    m = arr[i, j, k]
            out[i, j] = m


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _cell_scale(arr, avg, theta):
    n0, n1, K = arr.shape
    for i in range(n0):
        for j in range(n1):
            t = theta[i, j]
            if t < 1.0:
                a = avg[i, j]
                for k in range(K):
                    arr[i, j, k] = a + t * (arr[i, j, k] - a)


def _limit(U, Nx, Ny, Z, W, xc, yc) -> None:
    """Scale, in place, every value produced by a cell with negative output.

    Every array covers cells -1..Nx by -1..Ny.
    """
    g = NGHOST
    avg = np.ascontiguousarray(U[g - 1 : g + Nx + 1, g - 1 : g + Ny + 1])
    pmin = np.full(avg.shape, np.inf)
    parts = [arr.reshape(arr.shape[0], arr.shape[1], -1) for arr in (Z, xc, W, yc) if arr is not None]
    for arr in parts:
        _cell_min(arr, pmin)
    theta = limiter_theta(avg, pmin)
    if np.all(theta >= 1.0):
        return
    for arr in parts:
        _cell_scale(arr, avg, theta)


_TARGETS = {
    "x-interfaces": ("xf_minus", "xf_plus"),
    "y-interfaces": ("yf_minus", "yf_plus"),
    "x-centers": ("xc",),
    "y-centers": ("yc",),
}


def reconstruct_lines(U: np.ndarray, target: str, *, linear: bool = False, eps: float = DEFAULT_EPS):
    """Return the point values one quadrature family needs.

    Interface targets give ``(minus, plus)``; centre targets a single array.
    """
    if target not in _TARGETS:
        raise ValueError(f"unknown target {target!r}")
    if U is None:
        raise ValueError("ghost layers have not been populated")
    iface = target.endswith("interfaces")
    rec = reconstruct_2d(U, linear=linear, eps=eps, interfaces=iface, lines=not iface, tensor=False)
    vals = tuple(getattr(rec, name) for name in _TARGETS[target])
    return vals if iface else vals[0]
