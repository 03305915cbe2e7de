"""Self-checks behind ``angioweno verify``: exactness, conservation,
positivity and convergence suites with pass/fail verdicts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics as dg
from . import flux, ssp, weno
from .grid import NGHOST, QUAD, build_grid, pad_periodic
from .model import ModelParams, chi1_of


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f} s)"


def hat_moment(k: int) -> float:
    """``int_{-1}^{1} (1 - |s|) s^k ds``."""
    return 0.0 if k % 2 else 2.0 / ((k + 1) * (k + 2))


def double_average_monomial(p: int, center: float, h: float) -> float:
    """Exact 1D double average of ``x^p`` over the cell ``[center - h/2, center + h/2]``."""
    return sum(math.comb(p, k) * center ** (p - k) * h**k * hat_moment(k) for k in range(p + 1))


def weno_exactness(max_degree: int = 4) -> float:
    """Worst linear-mode error at every canonical point over monomials up to ``max_degree``."""
    h, n = 0.1, 9
    centers = (np.arange(n) - n // 2) * h + 0.03
    pts = weno.LEFT_POINTS + weno.RIGHT_POINTS + weno.TENSOR_POINTS
    worst = 0.0
    for p in range(max_degree + 1):
        avg = np.array([double_average_monomial(p, c, h) for c in centers])
        rec = weno.reconstruct(avg, 0, pts, linear=True)
        for k, name in enumerate(pts):
            x = centers[2:-2] + weno.POINT_OFFSETS[name] * h
            worst = max(worst, float(np.abs(rec[:, k] - x**p).max()))
    return worst


def linear_weight_residual() -> float:
    return max(
        float(np.abs(weno.solve_linear_weights(weno.POINT_OFFSETS[p])[0] - weno.linear_weights(p)).max())
        for p in weno.POINT_OFFSETS
    )


def periodic_advection_mass(n: int = 24, steps: int = 1000) -> tuple[float, float]:
    """Relative mass drift of 2D periodic advection under RK3."""
    grid = build_grid(1.0, 0.0, 1.0, n, n)
    X, Y = np.meshgrid(grid.x_centers, grid.y_centers, indexing="ij")
    u = 1.0 + 0.5 * np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    adv = flux.AdvectionField.constant(1.0, 0.5).sample(grid)

    def rhs(t, v):
        return flux.spatial_rhs(pad_periodic(v), grid, adv=adv, limiter=True)

    m0 = u.sum()
    dt = 0.2 * grid.dx
    for _ in range(steps):
        u = ssp.rk3_step(u, rhs, dt)
    return abs(u.sum() - m0) / m0, dt


def positivity_probe(n: int = 40) -> float:
    """Minimum after one Euler step from a nonnegative bump at the CFL bound."""
    g = NGHOST
    grid = build_grid(1.0, 0.0, 1.0, n, n)
    X, Y = np.meshgrid(grid.x_centers, grid.y_centers, indexing="ij")
    u = np.where((np.abs(X - 0.5) < 0.15) & (np.abs(Y - 0.5) < 0.15), 1.0, 0.0)
    dt = flux.cfl_max_dt(1.0, 1.0, 0.0, grid)
    adv = flux.AdvectionField.constant(1.0, -1.0).sample(grid)
    r = flux.spatial_rhs(np.pad(u, g), grid, adv=adv, limiter=True)
    return float((u + dt * r).min())


def integrator_order(kind: str) -> float:
    errs, hs = [], []
    for n in (20, 40, 80, 160):
        dt = 1.0 / n
        traj = ssp.advance(np.array([1.0]), lambda t, u: -u, 1.0, ssp.IntegratorConfig(kind, dt=dt), snapshot_times=[1.0])
        errs.append(abs(traj.states[-1][0] - math.exp(-1.0)))
        hs.append(dt)
    return dg.convergence_order(errs, hs)


def advection_order(ns=(25, 50, 100, 200), linear: bool = False) -> float:
    """Observed L1 order for periodic 1D advection of ``sin(2 pi x)`` to ``t = 1``."""
    g = NGHOST
    errs, hs = [], []
    for n in ns:
        dx = 1.0 / n
        x = (np.arange(n) + 0.5) * dx
        damp = (math.sin(math.pi * dx) / (math.pi * dx)) ** 2
        u = damp * np.sin(2 * np.pi * x)
        steps = int(math.ceil(1.0 / dx ** (5.0 / 3.0)))
        dt = 1.0 / steps

        def rhs(t, v):
            return flux.spatial_rhs_1d(np.pad(v, g, mode="wrap"), dx, speed=1.0, linear=linear)

        for _ in range(steps):
            u = ssp.rk3_step(u, rhs, dt)
        errs.append(dg.l1_norm(u - damp * np.sin(2 * np.pi * x), dx=dx))
        hs.append(dx)
    return dg.convergence_order(errs, hs)


def chi1_crosscheck(n: int = 2000) -> tuple[float, float]:
    """Relative gaps between the adaptive value, a composite Simpson value
    and the limit without the Fermi cut-off."""
    from scipy import integrate, special

    p = ModelParams()
    adaptive = chi1_of(p)
    vmax = math.sqrt(-math.log(1e-16))
    V = np.linspace(0.0, vmax, n + 1)
    phi = np.linspace(-math.pi, math.pi, n + 1)
    VV, PP = np.meshgrid(V, phi, indexing="ij")
    with np.errstate(over="ignore"):
        fermi = special.expit(-(VV**2 - p.eta) / p.epsilon_v)
    f = np.sqrt(1 + VV**2 + 2 * VV * np.cos(PP)) * fermi * np.exp(-(VV**2)) * VV
    simpson = p.chi / math.pi * integrate.simpson(integrate.simpson(f, x=phi, axis=1), x=V)

    # without the cut-off the angular integral is 4 (1 + V) E(m) with m = 4V / (1 + V)^2
    def radial(v):
        return 4.0 * (1.0 + v) * special.ellipe(4.0 * v / (1.0 + v) ** 2) * math.exp(-v * v) * v

    limit = p.chi / math.pi * integrate.quad(radial, 0.0, vmax, points=[1.0], epsabs=0, epsrel=1e-13, limit=200)[0]
    return abs(simpson - adaptive) / adaptive, abs(limit - adaptive) / adaptive


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return Check(name, ok, detail, time.perf_counter() - t0)


def run_checks(quick: bool = False) -> list[Check]:
    checks = []

    def quad():
        err = max(abs(QUAD.gl3_weights.sum() - 1), abs(QUAD.t5_weights.sum() - 1), abs(QUAD.t5_weights[2] - 114 / 324))
        return err < 1e-15, f"weight sums and middle weight off by {err:.1e}"

    def exact():
        e = weno_exactness()
        return e <= 1e-11, f"max error {e:.2e} (limit 1e-11)"

    def weights():
        r = linear_weight_residual()
        return r <= 1e-12, f"max |solved - stored| {r:.2e} (limit 1e-12)"

    def orders():
        o = {k: integrator_order(k) for k in ("rk2", "rk3", "msstep3")}
        lim = {"rk2": 1.95, "rk3": 2.95, "msstep3": 2.95}
        return all(o[k] >= lim[k] for k in o), ", ".join(f"{k} {v:.3f}" for k, v in o.items())

    def mass():
        steps = 200 if quick else 1000
        d, _ = periodic_advection_mass(steps=steps)
        return d <= 1e-10, f"relative mass drift {d:.2e} over {steps} steps (limit 1e-10)"

    def positivity():
        m = positivity_probe()
        return m >= 0, f"min after one Euler step {m:.3e}"

    def chi1():
        s, lim = chi1_crosscheck()
        return s <= 1e-8 and lim <= 1e-6, f"simpson gap {s:.1e} (1e-8), cut-off limit gap {lim:.2e} (1e-6)"

    checks.append(_timed("quadrature tables", quad))
    checks.append(_timed("weno exactness", exact))
    checks.append(_timed("linear weights", weights))
    checks.append(_timed("integrator orders", orders))
    checks.append(_timed("mass conservation", mass))
    checks.append(_timed("positivity probe", positivity))
    checks.append(_timed("chi1 cross-check", chi1))
    if not quick:

        def conv():
            o = advection_order()
            return o >= 4.5, f"observed order {o:.3f} (limit 4.5)"

        checks.append(_timed("advection convergence", conv))
    return checks
