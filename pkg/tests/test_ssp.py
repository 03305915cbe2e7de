import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from angioweno import diagnostics as dg
from angioweno import flux, ssp
from angioweno.grid import NGHOST


def decay(t, u):
    return -u


def zero(t, u):
    return 0.0 * u


def test_single_step_examples():
    assert ssp.euler_step(1.0, decay, 0.1) == pytest.approx(0.9, abs=1e-15)
    assert ssp.rk2_step(1.0, decay, 0.1) == pytest.approx(0.905, abs=1e-15)
    # hand substitution: u1 = 0.9, u2 = 0.75 + 0.25 * 0.81 = 0.9525, u = 1/3 + 2/3 * 0.9525 * 0.9
    assert ssp.rk3_step(1.0, decay, 0.1) == pytest.approx(1 / 3 + 2 / 3 * 0.9525 * 0.9, abs=1e-15)
    assert ssp.rk3_step(1.0, decay, 0.1) == pytest.approx(0.9048333333333333, abs=1e-10)
    assert abs(ssp.rk3_step(1.0, decay, 0.1) - math.exp(-0.1)) < 5e-6


@pytest.mark.parametrize("step", [ssp.euler_step, ssp.rk2_step, ssp.rk3_step])
def test_zero_rhs_leaves_state(step):
    u = np.array([1.5, -2.0, 3.25])
    np.testing.assert_array_equal(step(u, zero, 0.3), u)
    with pytest.raises(ValueError):
        step(u, zero, 0.0)


@given(lam=st.floats(-5, 5), dt=st.floats(1e-3, 0.5))
def test_rk3_is_cubic_taylor_polynomial(lam, dt):
    z = lam * dt
    assert ssp.rk3_step(1.0, lambda t, u: lam * u, dt) == pytest.approx(1 + z + z * z / 2 + z**3 / 6, rel=1e-13, abs=1e-13)


@given(lam=st.floats(-5, 5), dt=st.floats(1e-3, 0.5))
def test_rk2_is_quadratic_taylor_polynomial(lam, dt):
    z = lam * dt
    assert ssp.rk2_step(1.0, lambda t, u: lam * u, dt) == pytest.approx(1 + z + z * z / 2, rel=1e-13, abs=1e-13)


def _history(fn, rhs, dt, n=4):
    h = ssp.History()
    for k in range(n):
        t = k * dt
        h.push(t, fn(t), rhs(t, fn(t)))
    return h


def test_msstep3_examples():
    h = _history(lambda t: 2.5, zero, 0.1)
    assert ssp.msstep3_step(h, 0.1) == pytest.approx(2.5, abs=1e-15)
    h = _history(lambda t: t, lambda t, u: 1.0, 0.1)
    assert ssp.msstep3_step(h, 0.1) == pytest.approx(0.3 + 0.1, abs=1e-15)
    with pytest.raises(ssp.InsufficientHistory):
        ssp.msstep3_step(_history(lambda t: t, lambda t, u: 1.0, 0.1, n=3), 0.1)


def test_msstep3_coefficients_are_convex():
    assert 16 / 27 + 11 / 27 == pytest.approx(1.0, abs=1e-16)
    # as Euler substeps of size 3dt and (12/11)dt
    assert min(16 / 27, 11 / 27, 3.0, 12 / 11) > 0


def test_integrator_config_validation():
    assert ssp.IntegratorConfig("msstep3").ssp_factor == pytest.approx(1 / 3)
    assert ssp.IntegratorConfig("rk3").ssp_factor == 1.0
    for bad in (dict(kind="rk4"), dict(kind="rk3", ssp_factor=0.0), dict(kind="rk3", ssp_factor=1.5), dict(kind="rk3", dt=-1.0)):
        with pytest.raises(ValueError):
            ssp.IntegratorConfig(**bad)


def _order(kind, ns=(20, 40, 80, 160)):
    errs, hs = [], []
    for n in ns:
        traj = ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig(kind, dt=1.0 / n), snapshot_times=[1.0])
        errs.append(abs(traj.states[-1][0] - math.exp(-1.0)))
        hs.append(1.0 / n)
    return dg.convergence_order(errs, hs)


@pytest.mark.parametrize("kind,limit", [("euler", 0.95), ("rk2", 1.95), ("rk3", 2.95), ("msstep3", 2.95)])
def test_empirical_orders(kind, limit):
    assert _order(kind) >= limit


def test_advance_zero_horizon():
    u0 = np.array([3.0])
    traj = ssp.advance(u0, decay, 0.0, ssp.IntegratorConfig("rk3", dt=0.1))
    assert traj.times == [0.0] and traj.states[0] is u0 and traj.nsteps == 0


def test_advance_dense_rk3():
    traj = ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("rk3", dt=1e-3), snapshot_times=[1.0])
    assert abs(traj.states[-1][0] - math.exp(-1.0)) < 1e-9
    assert traj.times[-1] == pytest.approx(1.0, abs=1e-12)


def test_msstep3_tracks_rk3():
    gaps = []
    for n in (50, 100):
        cfg = dict(snapshot_times=[0.5, 1.0])
        a = ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("rk3", dt=1 / n), **cfg)
        b = ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("msstep3", dt=1 / n), **cfg)
        gaps.append(max(abs(x[0] - y[0]) for x, y in zip(a.states, b.states)))
    assert gaps[0] < 1e-5
    assert math.log2(gaps[0] / gaps[1]) > 2.8


@pytest.mark.parametrize("kind", ssp.INTEGRATORS)
def test_constant_rhs_gives_linear_growth(kind):
    traj = ssp.advance(np.array([0.5]), lambda t, u: np.array([2.0]), 1.0, ssp.IntegratorConfig(kind, dt=0.01), snapshot_times=[1.0])
    assert traj.states[-1][0] == pytest.approx(2.5, abs=1e-12)


def test_snapshot_nearest_step_and_callbacks():
    seen = []
    traj = ssp.advance(
        np.array([1.0]),
        decay,
        1.0,
        ssp.IntegratorConfig("rk3", dt=0.1),
        snapshot_times=[0.0, 0.34, 0.36, 1.0],
        on_snapshot=lambda n, tr, t, u: seen.append((n, tr)),
    )
    assert traj.steps == [0, 3, 4, 10]
    assert [s[1] for s in seen] == [0.0, 0.34, 0.36, 1.0]


def test_auto_step_lands_on_final_time():
    traj = ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("msstep3"), dt_auto=lambda f: 0.07 * f, snapshot_times=[1.0])
    assert traj.nsteps == math.ceil(1.0 / (0.07 / 3))
    assert traj.dt * traj.nsteps == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("rk3"))
    with pytest.raises(ValueError):
        ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("rk3"), dt_auto=lambda f: math.inf)


def test_non_finite_state_aborts_with_step():
    def blowup(t, u):
        return np.array([np.nan]) if t > 0.25 else -u

    with pytest.raises(ssp.SolverAbort) as exc:
        ssp.advance(np.array([1.0]), blowup, 1.0, ssp.IntegratorConfig("euler", dt=0.1))
    assert exc.value.step == 4


def test_rhs_floating_point_error_becomes_abort():
    def bad(t, u):
        raise FloatingPointError("non-finite rho right-hand side at cell (1, 2)")

    with pytest.raises(ssp.SolverAbort, match="cell"):
        ssp.advance(np.array([1.0]), bad, 1.0, ssp.IntegratorConfig("rk3", dt=0.1))


def test_check_hook_aborts():
    def check(n, t, u):
        if n == 2:
            raise ssp.SolverAbort(n, t, "positivity")

    with pytest.raises(ssp.SolverAbort, match="positivity"):
        ssp.advance(np.array([1.0]), decay, 1.0, ssp.IntegratorConfig("rk2", dt=0.1), check=check)


def _bump_rhs(n):
    dx = 1.0 / n

    def rhs(t, v):
        return flux.spatial_rhs_1d(np.pad(v, NGHOST, mode="wrap"), dx, speed=1.0, limiter=True)

    x = (np.arange(n) + 0.5) * dx
    u0 = np.where(np.abs(x - 0.5) < 0.2, 1.0, 0.0) * np.exp(-((x - 0.5) ** 2) / 0.01)
    return u0, rhs, dx


@settings(max_examples=10, deadline=None)
@given(n=st.integers(20, 60))
def test_ssp_positivity_probe(n):
    u0, rhs, dx = _bump_rhs(n)
    dt0 = flux.ADVECTIVE_CFL * dx  # one-dimensional Euler bound at unit speed
    assert (u0 + dt0 * rhs(0, u0)).min() >= 0
    for kind in ("rk2", "rk3", "msstep3"):
        mins = []
        cfg = ssp.IntegratorConfig(kind)
        ssp.advance(u0, rhs, 40 * dt0, cfg, dt_auto=lambda f: f * dt0, callback=lambda k, t, u: mins.append(u.min()))
        assert min(mins) >= 0, kind
