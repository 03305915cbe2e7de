"""Semi-discrete right-hand side for ``u_t + (a u)_x + (b u)_y - d lap(u) = h``.

Everything acts on double cell averages.  Interface fluxes are line averages
of ``a u`` over ``[x_i, x_{i+1}]`` evaluated with a 3-point Gauss rule in x and
the 5-point double-average rule in y; the Laplacian collapses to exact
second differences of point values at neighbouring centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from . import weno
from .grid import NGHOST, QUAD, GridSpec, QuadratureTables, tensor_nodes

FLUX_KINDS = ("upwind", "lax-friedrichs")

# stability constants for forward Euler (advective, diffusive)
ADVECTIVE_CFL = 1e-2
DIFFUSIVE_CFL = 8e-2


def upwind_flux(a, u_minus, u_plus):
    return np.where(np.asarray(a) >= 0, a * np.asarray(u_minus), a * np.asarray(u_plus))


def lax_friedrichs_flux(a, u_minus, u_plus, dx_over_dt):
    if np.any(np.asarray(dx_over_dt) <= 0):
        raise ValueError("dx/dt must be positive")
    return 0.5 * a * (u_minus + u_plus) + 0.5 * dx_over_dt * (u_minus - u_plus)


def numerical_flux(kind: str, a, u_minus, u_plus, dx_over_dt=None):
    if kind == "upwind":
        return upwind_flux(a, u_minus, u_plus)
    if kind == "lax-friedrichs":
        if dx_over_dt is None:
            raise ValueError("the Lax-Friedrichs flux needs dx/dt")
        return lax_friedrichs_flux(a, u_minus, u_plus, dx_over_dt)
    raise ValueError(f"unknown flux kind {kind!r}")


def interface_flux_sum(u_minus, u_plus, speed, q: QuadratureTables = QUAD, kind: str = "upwind", dx_over_dt=None):
    """Quadrature-summed flux over an interface patch.

    The last two axes are (double-average node alpha, Gauss node beta).
    """
    if kind == "upwind" and np.ndim(u_minus) == 4 and np.shape(speed) == np.shape(u_minus):
        out = np.empty(u_minus.shape[:2])
        _upwind_sum(speed, u_minus, u_plus, q.t5_weights, q.gl3_weights, out)
        return out
    f = numerical_flux(kind, speed, u_minus, u_plus, dx_over_dt)
    return np.einsum("...ab,a,b->...", f, q.t5_weights, q.gl3_weights)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _upwind_sum(a, um, up, wa, wb, out):
    n0, n1, na, nb = um.shape
    for i in range(n0):
        for j in range(n1):
            acc = 0.0
            for p in range(na):
                row = 0.0
                for r in range(nb):
                    s = a[i, j, p, r]
                    row += wb[r] * s * (um[i, j, p, r] if s >= 0 else up[i, j, p, r])
                acc += wa[p] * row
            out[i, j] = acc


@dataclass
class AdvectionField:
    """Velocity components ``a(x, y, t)``, ``b(x, y, t)`` (vectorised callables)."""

    a: Callable
    b: Callable

    def sample(self, grid: GridSpec, t: float = 0.0, q: QuadratureTables = QUAD):
        """Speeds at x-interface nodes (Nx+1, Ny, 5, 3) and y-interface nodes (Nx, Ny+1, 5, 3)."""
        xi = grid.x_interfaces[:, None, None, None] + q.gl3_nodes[None, None, None, :] * grid.dx
        yt = (grid.y_centers[:, None] + q.t5_nodes[None, :] * grid.dy)[None, :, :, None]
        a_x = np.broadcast_to(np.asarray(self.a(xi, yt, t), dtype=float), (grid.Nx + 1, grid.Ny, 5, 3))
        xt = (grid.x_centers[:, None] + q.t5_nodes[None, :] * grid.dx)[:, None, :, None]
        yi = grid.y_interfaces[None, :, None, None] + q.gl3_nodes[None, None, None, :] * grid.dy
        b_y = np.broadcast_to(np.asarray(self.b(xt, yi, t), dtype=float), (grid.Nx, grid.Ny + 1, 5, 3))
        return a_x, b_y

    @classmethod
    def constant(cls, a0: float, b0: float) -> "AdvectionField":
        return cls(lambda x, y, t: a0 + 0 * x, lambda x, y, t: b0 + 0 * y)


def diffusion_term(xc, yc, d: float, grid: GridSpec, q: QuadratureTables = QUAD) -> np.ndarray:
    """``d`` times the double average of the Laplacian.

    ``xc`` holds ``u(x_i, ytilde)`` for ``i = -1..Nx`` and ``yc`` holds
    ``u(xtilde, y_j)`` for ``j = -1..Ny``.
    """
    if d < 0:
        raise ValueError("diffusivity must be nonnegative")
    if d == 0:
        return np.zeros((xc.shape[0] - 2, xc.shape[1]))
    sx = (xc[2:] - 2 * xc[1:-1] + xc[:-2]) @ q.t5_weights
    sy = (yc[:, 2:] - 2 * yc[:, 1:-1] + yc[:, :-2]) @ q.t5_weights
    return d * (sx / grid.dx**2 + sy / grid.dy**2)


def source_term(node_values, q: QuadratureTables = QUAD) -> np.ndarray:
    """Tensor-quadrature double average of source values given at the 5x5 nodes."""
    return np.einsum("...ab,a,b->...", np.asarray(node_values, dtype=float), q.t5_weights, q.t5_weights)


def assemble_rhs(
    rec: weno.Reconstruction,
    grid: GridSpec,
    *,
    a_x=None,
    b_y=None,
    diffusivity: float = 0.0,
    source=None,
    kind: str = "upwind",
    dt: float | None = None,
    q: QuadratureTables = QUAD,
) -> np.ndarray:
    """Combine reconstructed values into ``d(ubar)/dt``.

    ``source`` is either an array of per-cell double averages or ``None``.
    """
    rhs = np.zeros(grid.shape)
    if a_x is not None:
        fx = interface_flux_sum(rec.xf_minus, rec.xf_plus, a_x, q, kind, None if dt is None else grid.dx / dt)
        rhs -= (fx[1:] - fx[:-1]) / grid.dx
    if b_y is not None:
        gy = interface_flux_sum(rec.yf_minus, rec.yf_plus, b_y, q, kind, None if dt is None else grid.dy / dt)
        rhs -= (gy[:, 1:] - gy[:, :-1]) / grid.dy
    if diffusivity:
        rhs += diffusion_term(rec.xc, rec.yc, diffusivity, grid, q)
    if source is not None:
        rhs += source
    return rhs


def check_finite(arr: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(k) for k in np.argwhere(bad)[0])
        raise FloatingPointError(f"non-finite {what} at cell {idx}")


def spatial_rhs(
    U: np.ndarray,
    grid: GridSpec,
    *,
    adv: AdvectionField | tuple | None = None,
    diffusivity: float = 0.0,
    source: Callable | None = None,
    t: float = 0.0,
    kind: str = "upwind",
    limiter: bool = False,
    linear: bool = False,
    eps: float = weno.DEFAULT_EPS,
    dt: float | None = None,
    source_mode: str = "tensor",
    q: QuadratureTables = QUAD,
) -> np.ndarray:
    """Right-hand side for one scalar field from its ghost-padded averages.

    ``adv`` may be an :class:`AdvectionField` or pre-sampled ``(a_x, b_y)``.
    ``source(u, x, y, t)`` is evaluated at the tensor nodes (or at the cell
    averages and centres when ``source_mode == "cell_average"``).
    """
    if kind not in FLUX_KINDS:
        raise ValueError(f"unknown flux kind {kind!r}")
    if adv is not None:
        a_x, b_y = adv.sample(grid, t, q) if isinstance(adv, AdvectionField) else adv
    else:
        a_x = b_y = None
    need_tensor = source is not None and source_mode == "tensor"
    rec = weno.reconstruct_2d(
        U,
        linear=linear,
        eps=eps,
        interfaces=adv is not None,
        lines=bool(diffusivity),
        tensor=need_tensor,
        limiter=limiter,
    )
    src = None
    if source is not None:
        if source_mode == "tensor":
            X, Y = tensor_nodes(grid, q)
            src = source_term(source(rec.tensor, X, Y, t), q)
        elif source_mode == "cell_average":
            g = NGHOST
            ubar = U[g:-g, g:-g]
            src = source(ubar, grid.x_centers[:, None], grid.y_centers[None, :], t)
        else:
            raise ValueError(f"unknown source mode {source_mode!r}")
    rhs = assemble_rhs(rec, grid, a_x=a_x, b_y=b_y, diffusivity=diffusivity, source=src, kind=kind, dt=dt, q=q)
    check_finite(rhs, "right-hand side")
    return rhs


def spatial_rhs_1d(
    u: np.ndarray,
    dx: float,
    *,
    speed: float | Callable = 1.0,
    x_interfaces: np.ndarray | None = None,
    diffusivity: float = 0.0,
    kind: str = "upwind",
    limiter: bool = False,
    linear: bool = False,
    eps: float = weno.DEFAULT_EPS,
    dt: float | None = None,
    q: QuadratureTables = QUAD,
) -> np.ndarray:
    """One-dimensional counterpart of :func:`spatial_rhs` on a padded array.

    ``speed`` is a constant or a callable of position (then ``x_interfaces``
    locates the ``n + 1`` interfaces).
    """
    g = NGHOST
    n = u.shape[0] - 2 * g
    pts = weno.LEFT_POINTS + weno.RIGHT_POINTS
    if limiter or diffusivity:
        pts = pts + weno.TENSOR_POINTS
    vals = weno.reconstruct(u, 0, pts, linear=linear, eps=eps)  # cells -1..n
    if limiter:
        avg = u[g - 1 : g + n + 1]
        theta = weno.limiter_theta(avg, vals.min(axis=1))
        vals = avg[:, None] + theta[:, None] * (vals - avg[:, None])
    um = vals[0 : n + 1, 3:6]
    up = vals[1 : n + 2, 0:3]
    if callable(speed):
        a = speed(x_interfaces[:, None] + q.gl3_nodes[None, :] * dx)
    else:
        a = np.full(um.shape, float(speed))
    f = numerical_flux(kind, a, um, up, None if dt is None else dx / dt) @ q.gl3_weights
    rhs = -(f[1:] - f[:-1]) / dx
    if diffusivity:
        c = vals[:, 8]
        rhs += diffusivity * (c[2:] - 2 * c[1:-1] + c[:-2]) / dx**2
    return rhs


def cfl_max_dt(max_a: float, max_b: float, diffusivity: float, grid: GridSpec, ssp_factor: float = 1.0) -> float:
    """Largest stable step; ``math.inf`` when neither constraint is active."""
    if not 0 < ssp_factor <= 1:
        raise ValueError("ssp_factor must lie in (0, 1]")
    if min(max_a, max_b, diffusivity) < 0:
        raise ValueError("speeds and diffusivity must be nonnegative")
    bounds = []
    speed = max(abs(max_a), abs(max_b))
    if speed > 0:
        bounds.append(ADVECTIVE_CFL / (speed * (1 / grid.dx + 1 / grid.dy)))
    if diffusivity > 0:
        bounds.append(DIFFUSIVE_CFL / (diffusivity * (1 / grid.dx**2 + 1 / grid.dy**2)))
    if not bounds:
        return math.inf
    return ssp_factor * min(bounds)
