"""Strong-stability-preserving time integrators.

States are numpy arrays (or anything supporting ``+`` and scalar ``*``); the
right-hand side has the signature ``rhs(t, u)``.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

INTEGRATORS = ("euler", "rk2", "rk3", "msstep3")

#: CFL multiplier relative to forward Euler
SSP_FACTOR = {"euler": 1.0, "rk2": 1.0, "rk3": 1.0, "msstep3": 1.0 / 3.0}

#: levels the multistep formula reaches back over
MSSTEP_LEVELS = 4


class SolverAbort(RuntimeError):
    """Raised when the state becomes non-finite or violates positivity."""

    def __init__(self, step: int, t: float, reason: str):
        super().__init__(f"step {step} (t={t:.6g}): {reason}")
        self.step = step
        self.t = t
        self.reason = reason


class InsufficientHistory(ValueError):
    pass


@dataclass
class IntegratorConfig:
    kind: str = "msstep3"
    ssp_factor: float | None = None
    dt: float | None = None

    def __post_init__(self):
        if self.kind not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.kind!r}; choose from {INTEGRATORS}")
        if self.ssp_factor is None:
            self.ssp_factor = SSP_FACTOR[self.kind]
        if not 0 < self.ssp_factor <= 1:
            raise ValueError("ssp_factor must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class History:
    """Most recent (t, state, rhs) levels, oldest first."""

    levels: deque = field(default_factory=lambda: deque(maxlen=MSSTEP_LEVELS))

    def push(self, t: float, u, r) -> None:
        self.levels.append((t, u, r))

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def ready(self) -> bool:
        return len(self.levels) >= MSSTEP_LEVELS


def euler_step(u, r: Callable, dt: float, t: float = 0.0):
    if not dt > 0:
        raise ValueError("dt must be positive")
    return u + dt * r(t, u)


def rk2_step(u, r: Callable, dt: float, t: float = 0.0, r0=None):
    if not dt > 0:
        raise ValueError("dt must be positive")
    u1 = u + dt * (r(t, u) if r0 is None else r0)
    return 0.5 * u + 0.5 * u1 + 0.5 * dt * r(t + dt, u1)


def rk3_step(u, r: Callable, dt: float, t: float = 0.0, r0=None):
    """Shu-Osher third-order SSP Runge-Kutta step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u1 = u + dt * (r(t, u) if r0 is None else r0)
    u2 = 0.75 * u + 0.25 * u1 + 0.25 * dt * r(t + dt, u1)
    return u / 3.0 + 2.0 / 3.0 * u2 + 2.0 / 3.0 * dt * r(t + 0.5 * dt, u2)


def msstep3_step(history: History, dt: float):
    """Third-order SSP multistep update from levels n and n-3."""
    if not history.ready:
        raise InsufficientHistory(f"multistep needs {MSSTEP_LEVELS} stored levels, have {len(history)}")
    _, u_old, r_old = history.levels[0]
    _, u_n, r_n = history.levels[-1]
    return 16.0 / 27.0 * (u_n + 3.0 * dt * r_n) + 11.0 / 27.0 * (u_old + 12.0 / 11.0 * dt * r_old)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    dt: float = math.nan
    nsteps: int = 0


def snapshot_steps(times: Sequence[float], dt: float, nsteps: int) -> dict[int, float]:
    """Map each requested time to the nearest step index (ties go to the later step)."""
    out: dict[int, float] = {}
    for t in times:
        k = int(math.floor(t / dt + 0.5))
        out[min(max(k, 0), nsteps)] = t
    return out


def advance(
    u0,
    rhs: Callable,
    T_final: float,
    config: IntegratorConfig,
    *,
    t0: float = 0.0,
    snapshot_times: Sequence[float] = (),
    dt_auto: Callable[[float], float] | None = None,
    check: Callable | None = None,
    callback: Callable | None = None,
    on_snapshot: Callable | None = None,
    keep_states: bool = True,
) -> Trajectory:
    """Integrate ``u' = rhs(t, u)`` from ``t0`` to ``t0 + T_final`` with a fixed step.

    ``dt_auto(ssp_factor)`` supplies the step when ``config.dt`` is unset; the
    step is then shrunk so an integer number of steps lands on ``T_final``.
    ``check(step, t, u)`` may raise :class:`SolverAbort`; non-finite states
    always abort, as do ``FloatingPointError`` raised by ``rhs``.
    ``callback(step, t, u)`` sees every accepted state and
    ``on_snapshot(step, t_requested, t, u)`` every emitted snapshot.
    """
    traj = Trajectory()
    if T_final < 0:
        raise ValueError("T_final must be nonnegative")
    if T_final == 0:
        traj.times.append(t0)
        traj.states.append(u0)
        traj.steps.append(0)
        traj.dt = config.dt if config.dt is not None else math.nan
        return traj

    if config.dt is not None:
        dt = config.dt
        nsteps = int(math.ceil(T_final / dt - 1e-9))
    else:
        if dt_auto is None:
            raise ValueError("no dt given and no automatic step rule supplied")
        dt_max = dt_auto(config.ssp_factor)
        if not math.isfinite(dt_max):
            raise ValueError("automatic step is unbounded; supply dt explicitly")
        nsteps = int(math.ceil(T_final / dt_max))
        dt = T_final / nsteps
    traj.dt = dt
    wanted = snapshot_steps([s - t0 for s in snapshot_times], dt, nsteps)

    def emit(n, t, u):
        if n in wanted:
            traj.times.append(t)
            traj.states.append(np.array(u, copy=True) if keep_states else None)
            traj.steps.append(n)
            if on_snapshot is not None:
                on_snapshot(n, wanted[n] + t0, t, u)

    def accept(n, t, u):
        if not np.all(np.isfinite(u)):
            raise SolverAbort(n, t, "non-finite state")
        if check is not None:
            check(n, t, u)
        if callback is not None:
            callback(n, t, u)
        emit(n, t, u)

    u = u0
    t = t0
    accept(0, t, u)
    hist = History()
    for n in range(1, nsteps + 1):
        try:
            r_n = rhs(t, u)
            if config.kind == "msstep3":
                hist.push(t, u, r_n)
                u = msstep3_step(hist, dt) if hist.ready else rk3_step(u, rhs, dt, t, r0=r_n)
            elif config.kind == "rk3":
                u = rk3_step(u, rhs, dt, t, r0=r_n)
            elif config.kind == "rk2":
                u = rk2_step(u, rhs, dt, t, r0=r_n)
            else:
                u = u + dt * r_n
        except FloatingPointError as exc:
            raise SolverAbort(n, t, str(exc)) from exc
        t = t0 + n * dt
        accept(n, t, u)
    traj.nsteps = nsteps
    return traj
