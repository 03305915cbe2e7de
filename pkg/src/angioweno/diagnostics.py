"""Post-processing: positivity and mass audits, sech^2 pulse fits, front speed
and observed convergence order."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares

from .grid import AveragedField, GridSpec

HALF_MAX_ARG = math.acosh(math.sqrt(2.0))  # sech^2(z) = 1/2


class FitError(RuntimeError):
    pass


def _values(field) -> np.ndarray:
    return np.asarray(field.values if isinstance(field, AveragedField) else field, dtype=float)


class Audit(NamedTuple):
    minimum: float
    mass: float

    def flagged(self, tol: float = 0.0) -> bool:
        """True when the minimum dips below ``-tol``."""
        return self.minimum < -tol


def min_and_mass(field, grid: GridSpec) -> Audit:
    v = _values(field)
    return Audit(float(v.min()), float(v.sum() * grid.dx * grid.dy))


def marginal_profile(rho, grid: GridSpec) -> np.ndarray:
    """Integrate over y, leaving a profile along x."""
    return _values(rho).sum(axis=1) * grid.dy


def soliton_profile(x1, amplitude: float, width_param: float, X: float):
    if not width_param > 0:
        raise ValueError("width_param must be positive")
    return amplitude / np.cosh(width_param * (np.asarray(x1, dtype=float) - X)) ** 2


@dataclass
class SolitonFit:
    amplitude: float
    width_param: float
    X: float
    r_squared: float
    speed_c: float | None = None
    nfev: int = 0


def _half_max_width(x, y, k) -> float:
    """Distance from the peak to where the profile first falls to half height."""
    half = 0.5 * y[k]
    dists = []
    for step in (-1, 1):
        j = k
        while 0 <= j + step < len(y) and y[j + step] > half:
            j += step
        if 0 <= j + step < len(y):
            x0, x1, y0, y1 = x[j], x[j + step], y[j], y[j + step]
            dists.append(abs(x0 + (half - y0) * (x1 - x0) / (y1 - y0) - x[k]))
    if not dists:
        return 0.25 * (x[-1] - x[0])
    return min(dists)


def fit_soliton(profile, x, max_nfev: int = 200) -> SolitonFit:
    """Least-squares fit of ``A sech^2(k (x - X))`` to a sampled profile.

    Initialised from the peak height, peak location and half-maximum width.
    """
    y = np.asarray(profile, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1 or len(y) < 4:
        raise ValueError("profile and x must be matching 1D arrays of length >= 4")
    if not np.all(np.isfinite(y)):
        raise FitError("profile contains non-finite values")
    k = int(np.argmax(y))
    if k == 0 or k == len(y) - 1 or not (y[k] > y[0] and y[k] > y[-1]):
        raise FitError("profile has no strict interior maximum")
    w0 = HALF_MAX_ARG / max(_half_max_width(x, y, k), 1e-12)
    p0 = np.array([y[k], w0, x[k]])

    def resid(p):
        return soliton_profile(x, p[0], p[1], p[2]) - y

    def jac(p):
        A, w, X = p
        z = w * (x - X)
        s2 = 1.0 / np.cosh(z) ** 2
        d = -2.0 * A * s2 * np.tanh(z)  # derivative of A sech^2 with respect to z
        return np.column_stack([s2, d * (x - X), -d * w])

    lo = [0.0, 1e-12, x[0] - (x[-1] - x[0])]
    hi = [np.inf, np.inf, x[-1] + (x[-1] - x[0])]
    res = least_squares(resid, p0, jac=jac, bounds=(lo, hi), max_nfev=max_nfev, x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitError(f"soliton fit did not converge after {res.nfev} evaluations: {res.message}")
    A, w, X = (float(v) for v in res.x)
    ss_res = float(np.sum(res.fun**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return SolitonFit(A, w, X, min(max(r2, 0.0), 1.0), nfev=int(res.nfev))


class SpeedEstimate(NamedTuple):
    c: float
    intercept: float
    residual: float  # root-mean-square misfit of the straight line


def front_speed(samples: Sequence[tuple[float, float]]) -> SpeedEstimate:
    """Least-squares slope of peak position against time."""
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise ValueError("front_speed needs at least three (t, X) pairs")
    t, X = data[:, 0], data[:, 1]
    tm, Xm = t.mean(), X.mean()
    dt = t - tm
    denom = float(dt @ dt)
    if denom == 0:
        raise ValueError("snapshot times must not all coincide")
    c = float(dt @ (X - Xm)) / denom
    r = X - Xm - c * dt
    return SpeedEstimate(c, float(Xm - c * tm), float(np.sqrt(np.mean(r**2))))


def convergence_order(errors: Sequence[float], h: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    if e.shape != h.shape or e.size < 2:
        raise ValueError("need at least two (h, error) pairs")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and resolutions must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("h must be strictly decreasing")
    lh, le = np.log(h), np.log(e)
    lh = lh - lh.mean()
    return float(lh @ (le - le.mean()) / (lh @ lh))


def l1_norm(values, grid: GridSpec | None = None, dx: float | None = None) -> float:
    """Discrete L1 norm over cells, weighted by cell area (or ``dx`` in 1D)."""
    v = np.abs(np.asarray(values, dtype=float))
    if grid is not None:
        return float(v.sum() * grid.dx * grid.dy)
    return float(v.sum() * (1.0 if dx is None else dx))


def linf_norm(values) -> float:
    return float(np.abs(np.asarray(values, dtype=float)).max())
