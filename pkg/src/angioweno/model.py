"""Reduced angiogenesis system for tip density ``rho``, growth factor ``C`` and
the running integral ``I`` of ``rho`` over time.

    rho_t + div(F rho) - lap(rho)/(2 beta) = mu(C) rho - Gamma rho I
    C_t = kappa lap(C) - chi1 C rho
    I_t = rho
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numba
import numpy as np
from scipy import integrate, special

from . import flux, weno
from .grid import NGHOST, QUAD, GridSpec, QuadratureTables, average_field

# initial tip layout
TIP_PREFACTOR = 2.0 / math.pi**2 / 0.0048
TIP_X_WIDTH = 0.06
TIP_Y_WIDTH = 0.08
TIP_COUNT = 20
TIP_SPAN = 0.3
# initial growth-factor blob
C0_AMPLITUDE = 1.1
C0_X_WIDTH = 1.5
C0_Y_WIDTH = 0.3


@dataclass(frozen=True)
class ModelParams:
    delta1: float = 0.255
    beta: float = 5.88
    A: float = 22.42
    Gamma: float = 0.135
    Gamma1: float = 1.0
    q1: float = 1.0
    kappa: float = 0.0045
    chi: float = 0.002
    eta: float = 15.0
    epsilon_v: float = 0.001
    sigma_v: float = 0.08
    a: float = 1.0 / 0.3
    cL: float = 1.1
    # hook for a decaying boundary supply, cL(t) = cL * exp(-cL_decay * t)
    cL_decay: float = 0.0
    v0: tuple[float, float] = (math.cos(math.pi / 10), math.sin(math.pi / 10))
    v_box: float = 4.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "v0":
                continue
            if f.name == "cL_decay":
                if v < 0:
                    raise ValueError("cL_decay must be nonnegative")
                continue
            if not v > 0:
                raise ValueError(f"parameter {f.name} must be positive, got {v}")

    def cL_at(self, t: float) -> float:
        return self.cL * math.exp(-self.cL_decay * t)

    def as_dict(self) -> dict:
        return asdict(self)


def _alpha(C, A):
    C = np.maximum(C, 0.0)
    return A * C / (1.0 + C)


def alpha_of(C, params: ModelParams = ModelParams()):
    C = np.asarray(C, dtype=float)
    if np.any(C < 0):
        raise ValueError("concentration must be nonnegative")
    return _alpha(C, params.A)


def _mu(C, p: ModelParams):
    al = _alpha(C, p.A)
    s2 = p.sigma_v**2
    return al / math.pi * (1.0 + al / (2 * math.pi * p.beta * (1 + s2)) * math.log(1 + 1 / s2))


def mu_of(C, params: ModelParams = ModelParams()):
    C = np.asarray(C, dtype=float)
    if np.any(C < 0):
        raise ValueError("concentration must be nonnegative")
    return _mu(C, params)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _tensor_sources(rn, cn, In, w, A, mu2, Gamma, chi1, src_rho, src_C):
    """Quadrature sums of the rho and C sources over the 5x5 tensor nodes."""
    n0, n1, na, nb = rn.shape
    for i in range(n0):
        for j in range(n1):
            acc_r = 0.0
            acc_c = 0.0
            for a in range(na):
                row_r = 0.0
                row_c = 0.0
                for b in range(nb):
                    c = cn[i, j, a, b]
                    r = rn[i, j, a, b]
                    cp = max(c, 0.0)
                    al = A * cp / (1.0 + cp)
                    mu = al / math.pi * (1.0 + al * mu2)
                    row_r += w[b] * (mu * r - Gamma * r * In[i, j, a, b])
                    row_c += w[b] * (-chi1 * c * r)
                acc_r += w[a] * row_r
                acc_c += w[a] * row_c
            src_rho[i, j] = acc_r
            src_C[i, j] = acc_c


def velocity_cutoff(tol: float = 1e-16) -> float:
    """Speed beyond which ``exp(-V**2) < tol``."""
    return math.sqrt(-math.log(tol))


@lru_cache(maxsize=32)
def _chi1_integral(eta: float, epsilon_v: float) -> tuple[float, float]:
    def fermi(V):
        return special.expit(-(V * V - eta) / epsilon_v)

    def angular(V):
        # integrand is even in phi
        val, _ = integrate.quad(
            lambda p: math.sqrt(max(1 + V * V + 2 * V * math.cos(p), 0.0)),
            0.0,
            math.pi,
            epsabs=1e-14,
            epsrel=1e-13,
            limit=200,
        )
        return 2 * val

    vmax = velocity_cutoff()
    brk = [1.0]
    front = math.sqrt(eta)
    if front < vmax:
        brk += [front - 50 * epsilon_v, front, front + 50 * epsilon_v]
    val, err = integrate.quad(
        lambda V: V * math.exp(-V * V) * fermi(V) * angular(V),
        0.0,
        vmax,
        points=sorted(b for b in brk if 0 < b < vmax),
        epsabs=1e-15,
        epsrel=1e-13,
        limit=400,
    )
    if not err <= 1e-10 * max(abs(val), 1.0):
        raise ArithmeticError(f"consumption-rate quadrature did not converge (estimated error {err:.3g})")
    return val, err


def chi1_of(params: ModelParams = ModelParams()) -> float:
    """Effective consumption rate (nested adaptive quadrature, cached)."""
    if params.chi == 0:
        return 0.0
    val, _ = _chi1_integral(float(params.eta), float(params.epsilon_v))
    return params.chi / math.pi * val


def velocity_mass(params: ModelParams = ModelParams()) -> float:
    """Integral of ``exp(-|v - v0|^2)`` over the truncated velocity box."""
    b = params.v_box
    out = 1.0
    for c in params.v0:
        out *= 0.5 * math.sqrt(math.pi) * (special.erf(b - c) - special.erf(-b - c))
    return out


def tip_positions() -> np.ndarray:
    return -TIP_SPAN + np.arange(TIP_COUNT) * (2 * TIP_SPAN / (TIP_COUNT - 1))


def initial_rho(x, y, params: ModelParams = ModelParams()):
    tips = tip_positions()
    y = np.asarray(y, dtype=float)
    row = np.exp(-(((y[..., None] - tips) / TIP_Y_WIDTH) ** 2)).sum(axis=-1)
    return TIP_PREFACTOR * np.exp(-((np.asarray(x) / TIP_X_WIDTH) ** 2)) * row * velocity_mass(params)


def initial_C(x, y):
    return C0_AMPLITUDE * np.exp(-(((np.asarray(x) - 1.0) / C0_X_WIDTH) ** 2) - (np.asarray(y) / C0_Y_WIDTH) ** 2)


def boundary_supply(t: float, y, params: ModelParams = ModelParams()):
    """Growth-factor data on the far wall ``x1 = X``."""
    return params.cL_at(t) * np.exp(-(params.a**2) * np.asarray(y, dtype=float) ** 2)


def lift_to_phase_space(rho, v, params: ModelParams = ModelParams()):
    v = np.asarray(v, dtype=float)
    d2 = (v[..., 0] - params.v0[0]) ** 2 + (v[..., 1] - params.v0[1]) ** 2
    return np.exp(-d2) * np.asarray(rho) / math.pi


@dataclass
class SystemState:
    rho: np.ndarray
    C: np.ndarray
    I: np.ndarray
    t: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.stack([self.rho, self.C, self.I])

    @classmethod
    def from_array(cls, arr: np.ndarray, t: float = 0.0) -> "SystemState":
        return cls(arr[0].copy(), arr[1].copy(), arr[2].copy(), t)


def initial_state(grid: GridSpec, params: ModelParams = ModelParams(), q: QuadratureTables = QUAD) -> SystemState:
    rho = average_field(lambda x, y: initial_rho(x, y, params), grid, q)
    C = average_field(initial_C, grid, q)
    return SystemState(rho, C, np.zeros(grid.shape), 0.0)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _interface_drift(v, tv, td, inv_h, delta1, gamma1, q1, out):
    """Drift at interface Gauss nodes from six cell values across each interface.

    ``tv``/``td`` give the value and derivative taps, already averaged over
    the two cells sharing the interface.
    """
    n0, n1, na, nb = out.shape
    for i in range(n0):
        for j in range(n1):
            for a in range(na):
                for b in range(nb):
                    c = 0.0
                    dc = 0.0
                    for m in range(6):
                        x = v[i + m, j, a]
                        c += tv[b, m] * x
                        dc += td[b, m] * x
                    den = 1.0 + gamma1 * max(c, 0.0)
                    if q1 != 1.0:
                        den = den**q1
                    out[i, j, a, b] = delta1 * dc * inv_h / den


def _interface_taps(deriv: int) -> np.ndarray:
    """Taps over cells ``i-2..i+3`` averaging the central polynomials of
    cells ``i`` and ``i+1`` at the Gauss nodes of their shared face."""
    taps = np.zeros((3, 6))
    for b, (r, l) in enumerate(zip(weno.RIGHT_POINTS, weno.LEFT_POINTS)):
        taps[b, :5] += 0.5 * weno.central_taps(weno.POINT_OFFSETS[r], deriv)
        taps[b, 1:] += 0.5 * weno.central_taps(weno.POINT_OFFSETS[l], deriv)
    return taps


_FACE_VALUE_TAPS = _interface_taps(0)
_FACE_SLOPE_TAPS = _interface_taps(1)


def force_field(Cpad: np.ndarray, grid: GridSpec, params: ModelParams = ModelParams()):
    """Drift ``F = delta1 grad(C) / (1 + Gamma1 C)^q1`` at interface nodes.

    Returns ``(F1, F2)`` shaped like the x- and y-interface node arrays.  The
    gradient and the point value of C come from the central degree-4
    polynomial, averaged between the two cells sharing an interface.
    """
    g = NGHOST
    Nx, Ny = grid.shape
    T = [weno.POINT_OFFSETS[p] for p in weno.TENSOR_POINTS]
    taps = (_FACE_VALUE_TAPS, _FACE_SLOPE_TAPS)
    pars = (params.delta1, params.Gamma1, params.q1)

    Yc = weno.evaluate_central(Cpad[g - 3 : g + Nx + 3, g - 2 : g + Ny + 2], 1, T)  # (Nx+6, Ny, 5)
    F1 = np.empty((Nx + 1, Ny, 5, 3))
    _interface_drift(Yc, *taps, 1.0 / grid.dx, *pars, F1)

    Xc = weno.evaluate_central(Cpad[g - 2 : g + Nx + 2, g - 3 : g + Ny + 3], 0, T)  # (Nx, Ny+6, 5)
    F2 = np.empty((Ny + 1, Nx, 5, 3))
    _interface_drift(np.ascontiguousarray(Xc.transpose(1, 0, 2)), *taps, 1.0 / grid.dy, *pars, F2)
    return F1, np.ascontiguousarray(F2.transpose(1, 0, 2, 3))


@dataclass
class SchemeOptions:
    flux: str = "upwind"
    limiter: bool = True
    linear: bool = False
    eps: float = weno.DEFAULT_EPS
    source_mode: str = "tensor"
    threads: int = 1

    def __post_init__(self):
        if self.flux not in flux.FLUX_KINDS:
            raise ValueError(f"unknown flux kind {self.flux!r}")
        if self.source_mode not in ("tensor", "cell_average"):
            raise ValueError(f"unknown source mode {self.source_mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class AngiogenesisSystem:
    """Semi-discrete coupled system on a fixed grid."""

    grid: GridSpec
    params: ModelParams = field(default_factory=ModelParams)
    options: SchemeOptions = field(default_factory=SchemeOptions)
    q: QuadratureTables = QUAD
    dt: float | None = None  # current step, only used by the Lax-Friedrichs flux

    def __post_init__(self):
        self.chi1 = chi1_of(self.params)
        g = NGHOST
        ys = self.grid.Y0 + self.grid.dy * (np.arange(-g, self.grid.Ny + g) + 0.5)
        nodes = ys[:, None] + self.q.t5_nodes[None, :] * self.grid.dy
        # ghost-row averages of the wall profile at unit supply
        self._wall_profile = np.exp(-(self.params.a**2) * nodes**2) @ self.q.t5_weights
        self._pool = ThreadPoolExecutor(self.options.threads) if self.options.threads > 1 else None

    def initial_state(self) -> SystemState:
        return initial_state(self.grid, self.params, self.q)

    def fill_ghosts(self, rho, C, I, t: float):
        """Ghost-padded copies of the three fields at time ``t``."""
        g = NGHOST
        rp = np.pad(rho, g)
        Cp = np.pad(C, g)
        Cp[-g:, :] = self.params.cL_at(t) * self._wall_profile[None, :]
        Ip = np.pad(I, g, mode="symmetric")
        return rp, Cp, Ip

    def diffusivity_rho(self) -> float:
        return 1.0 / (2.0 * self.params.beta)

    def max_speeds(self, Y: np.ndarray, t: float = 0.0) -> tuple[float, float]:
        """Largest speeds carrying mass out of an interior cell.

        A boundary face only counts when the drift points out of the domain:
        inflow there brings in the zero ghost state and cannot destabilise
        the adjacent cell.
        """
        _, Cp, _ = self.fill_ghosts(Y[0], Y[1], Y[2], t)
        F1, F2 = force_field(Cp, self.grid, self.params)
        a = max(np.maximum(-F1[:-1], 0.0).max(), np.maximum(F1[1:], 0.0).max())
        b = max(np.maximum(-F2[:, :-1], 0.0).max(), np.maximum(F2[:, 1:], 0.0).max())
        return float(a), float(b)

    def max_dt(self, Y: np.ndarray, ssp_factor: float = 1.0, t: float = 0.0) -> float:
        a, b = self.max_speeds(Y, t)
        d = max(self.diffusivity_rho(), self.params.kappa)
        return flux.cfl_max_dt(a, b, d, self.grid, ssp_factor)

    def _recon(self, args):
        U, kw = args
        return weno.reconstruct_2d(U, linear=self.options.linear, eps=self.options.eps, limiter=self.options.limiter, **kw)

    def rhs(self, t: float, Y: np.ndarray) -> np.ndarray:
        p, opt = self.params, self.options
        rho, C, I = Y[0], Y[1], Y[2]
        rp, Cp, Ip = self.fill_ghosts(rho, C, I, t)
        tensor = opt.source_mode == "tensor"
        jobs = [
            (rp, dict(interfaces=True, lines=True, tensor=tensor)),
            (Cp, dict(interfaces=False, lines=True, tensor=tensor)),
            (Ip, dict(interfaces=False, lines=False, tensor=True)),
        ]
        if not tensor:
            jobs = jobs[:2]
        if self._pool is not None:
            fut = self._pool.submit(force_field, Cp, self.grid, p)
            recs = list(self._pool.map(self._recon, jobs))
            F1, F2 = fut.result()
        else:
            F1, F2 = force_field(Cp, self.grid, p)
            recs = [self._recon(j) for j in jobs]
        if tensor:
            rn, cn, In = recs[0].tensor, recs[1].tensor, recs[2].tensor
            src_rho = np.empty(self.grid.shape)
            src_C = np.empty(self.grid.shape)
            s2 = p.sigma_v**2
            mu2 = math.log(1 + 1 / s2) / (2 * math.pi * p.beta * (1 + s2))
            _tensor_sources(rn, cn, In, self.q.t5_weights, p.A, mu2, p.Gamma, self.chi1, src_rho, src_C)
        else:
            src_rho = _mu(C, p) * rho - p.Gamma * rho * I
            src_C = -self.chi1 * C * rho
        out = np.empty_like(Y)
        kw = dict(kind=opt.flux, dt=self.dt, q=self.q)
        out[0] = flux.assemble_rhs(recs[0], self.grid, a_x=F1, b_y=F2, diffusivity=self.diffusivity_rho(), source=src_rho, **kw)
        out[1] = flux.assemble_rhs(recs[1], self.grid, diffusivity=p.kappa, source=src_C, **kw)
        out[2] = rho
        for k, name in enumerate(("rho", "C", "I")):
            try:
                flux.check_finite(out[k], f"{name} right-hand side")
            except FloatingPointError as exc:
                raise FloatingPointError(f"[{name}] {exc}") from None
        return out

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def coupled_rhs(state: SystemState, system: AngiogenesisSystem) -> SystemState:
    """Time derivatives of the three averaged fields."""
    d = system.rhs(state.t, state.to_array())
    return SystemState.from_array(d, state.t)
