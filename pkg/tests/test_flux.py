import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from angioweno import flux, weno
from angioweno.grid import NGHOST, QUAD, average_field, build_grid, pad_periodic

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_upwind_examples():
    assert flux.upwind_flux(1.0, 2.0, 5.0) == 2.0
    assert flux.upwind_flux(-1.0, 2.0, 5.0) == -5.0
    assert flux.upwind_flux(0.0, 2.0, 5.0) == 0.0


def test_lax_friedrichs_examples():
    assert flux.lax_friedrichs_flux(1.0, 1.0, 3.0, 2.0) == pytest.approx(0.0, abs=1e-15)
    assert flux.lax_friedrichs_flux(0.0, 1.0, 3.0, 2.0) == pytest.approx(-2.0, abs=1e-15)
    with pytest.raises(ValueError):
        flux.lax_friedrichs_flux(1.0, 1.0, 3.0, 0.0)


@given(a=finite, u=finite, r=st.floats(1e-3, 1e3))
def test_fluxes_consistent(a, u, r):
    assert flux.upwind_flux(a, u, u) == pytest.approx(a * u, rel=1e-15, abs=1e-12)
    assert flux.lax_friedrichs_flux(a, u, u, r) == pytest.approx(a * u, rel=1e-12, abs=1e-9)


def test_numerical_flux_dispatch():
    assert flux.numerical_flux("upwind", -2.0, 1.0, 3.0) == -6.0
    with pytest.raises(ValueError):
        flux.numerical_flux("lax-friedrichs", 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        flux.numerical_flux("centered", 1.0, 1.0, 1.0)


@pytest.mark.parametrize("kind", flux.FLUX_KINDS)
def test_interface_sum_constant_state(kind):
    u = np.full((4, 3, 5, 3), 2.5)
    a = np.full((4, 3, 5, 3), -1.5)
    np.testing.assert_allclose(flux.interface_flux_sum(u, u, a, kind=kind, dx_over_dt=3.0), -3.75, rtol=1e-14)


def test_interface_sum_alternating_speed():
    a = np.where(np.indices((5, 3)).sum(0) % 2 == 0, 1.0, -1.0)[None, None]
    um, up = np.ones((1, 1, 5, 3)), np.zeros((1, 1, 5, 3))
    w = np.outer(QUAD.t5_weights, QUAD.gl3_weights)
    want = (w * (a[0, 0] > 0)).sum()
    assert flux.interface_flux_sum(um, up, a)[0, 0] == pytest.approx(want, rel=1e-14)
    # numba fast path agrees with the generic einsum path
    ref = np.einsum("...ab,a,b->...", flux.upwind_flux(a, um, up), QUAD.t5_weights, QUAD.gl3_weights)
    np.testing.assert_allclose(flux.interface_flux_sum(um, up, a), ref, rtol=1e-14)


def test_upwind_and_lf_close_on_smooth_data():
    a = np.ones((1, 1, 5, 3))
    um = np.full_like(a, 1.0)
    up = um + 1e-4
    diff = flux.interface_flux_sum(um, up, a, kind="lax-friedrichs", dx_over_dt=10.0) - flux.interface_flux_sum(um, up, a)
    # LF adds the mean jump and subtracts the dissipation term
    assert diff[0, 0] == pytest.approx(0.5 * 1e-4 - 0.5 * 10 * 1e-4, rel=1e-9)


def test_diffusion_examples():
    g = build_grid(1.0, 0.0, 1.0, 5, 6)
    xs = g.x0 + g.dx * (np.arange(-1, g.Nx + 1) + 0.5)
    xc = np.broadcast_to((xs**2)[:, None, None], (g.Nx + 2, g.Ny, 5)).copy()
    yc = np.zeros((g.Nx, g.Ny + 2, 5))
    np.testing.assert_allclose(flux.diffusion_term(xc, yc, 0.3, g), 0.6, rtol=1e-10)
    np.testing.assert_allclose(flux.diffusion_term(np.ones_like(xc), np.ones_like(yc), 0.3, g), 0.0, atol=1e-12)
    np.testing.assert_array_equal(flux.diffusion_term(xc, yc, 0.0, g), 0.0)
    with pytest.raises(ValueError):
        flux.diffusion_term(xc, yc, -1.0, g)


def test_source_examples():
    assert flux.source_term(np.zeros((5, 5))) == 0.0
    assert flux.source_term(np.full((5, 5), 3.5)) == pytest.approx(3.5, rel=1e-15)
    x = QUAD.t5_nodes[:, None] + 0 * QUAD.t5_nodes[None, :]
    assert flux.source_term(x**2) == pytest.approx(1 / 6, rel=1e-14)


@pytest.mark.parametrize("kind", flux.FLUX_KINDS)
def test_constant_state_is_steady(kind):
    g = build_grid(1.0, 0.0, 2.0, 8, 9)
    U = np.full((8 + 2 * NGHOST, 9 + 2 * NGHOST), 1.7)
    r = flux.spatial_rhs(U, g, adv=flux.AdvectionField.constant(0.7, -0.3), diffusivity=0.05, kind=kind, dt=0.01)
    np.testing.assert_allclose(r, 0.0, atol=1e-12)


def _mms_error(n, linear=False):
    g = build_grid(1.0, 0.0, 1.0, n, n)
    u = lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)  # noqa: E731
    d = 0.01
    k = 2 * np.pi

    def op(x, y):
        ux = k * np.cos(k * x) * np.sin(k * y)
        uy = k * np.sin(k * x) * np.cos(k * y)
        return -(ux + uy) + d * (-2 * k * k) * u(x, y)

    U = pad_periodic(average_field(u, g))
    r = flux.spatial_rhs(U, g, adv=flux.AdvectionField.constant(1.0, 1.0), diffusivity=d, linear=linear)
    return np.abs(r - average_field(op, g)).sum() * g.dx * g.dy


def test_manufactured_solution_order():
    e = [_mms_error(n) for n in (16, 32, 64)]
    orders = [math.log2(e[k] / e[k + 1]) for k in range(2)]
    assert orders[-1] >= 4.0


def test_source_hook_and_modes():
    g = build_grid(1.0, 0.0, 1.0, 10, 10)
    U = pad_periodic(average_field(lambda x, y: 1 + 0.1 * np.cos(2 * np.pi * x) + 0 * y, g))
    src = lambda u, x, y, t: 2.0 * u  # noqa: E731
    a = flux.spatial_rhs(U, g, source=src)
    b = flux.spatial_rhs(U, g, source=src, source_mode="cell_average")
    # tensor quadrature of reconstructed values carries the reconstruction truncation error
    np.testing.assert_allclose(a, 2 * U[NGHOST:-NGHOST, NGHOST:-NGHOST], rtol=1e-4)
    np.testing.assert_allclose(b, 2 * U[NGHOST:-NGHOST, NGHOST:-NGHOST], rtol=1e-15)
    with pytest.raises(ValueError):
        flux.spatial_rhs(U, g, source=src, source_mode="midpoint")


@settings(max_examples=30, deadline=None)
@given(
    vals=arrays(np.float64, (8, 9), elements=st.floats(0, 10)),
    a=st.floats(-2, 2),
    b=st.floats(-2, 2),
    kind=st.sampled_from(flux.FLUX_KINDS),
)
def test_periodic_fluxes_telescope(vals, a, b, kind):
    g = build_grid(1.0, 0.0, 1.0, 8, 9)
    r = flux.spatial_rhs(pad_periodic(vals), g, adv=flux.AdvectionField.constant(a, b), kind=kind, dt=0.01, limiter=True)
    assert abs(r.sum() * g.dx * g.dy) <= 1e-12 * max(1.0, np.abs(r).max())


@settings(max_examples=30, deadline=None)
@given(
    u=arrays(np.float64, (8, 8), elements=st.floats(-5, 5)),
    v=arrays(np.float64, (8, 8), elements=st.floats(-5, 5)),
    c=st.floats(-3, 3),
)
def test_linear_mode_is_linear(u, v, c):
    g = build_grid(1.0, 0.0, 1.0, 8, 8)
    kw = dict(adv=flux.AdvectionField.constant(0.8, 0.4), diffusivity=0.02, linear=True)
    lhs = flux.spatial_rhs(pad_periodic(u + c * v), g, **kw)
    rhs = flux.spatial_rhs(pad_periodic(u), g, **kw) + c * flux.spatial_rhs(pad_periodic(v), g, **kw)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(lhs).max()))


@settings(max_examples=25, deadline=None)
@given(
    vals=arrays(np.float64, (10, 10), elements=st.floats(0, 100)),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
)
def test_forward_euler_positivity_probe(vals, a, b):
    g = build_grid(1.0, 0.0, 1.0, 10, 10)
    U = np.pad(vals, NGHOST)
    dt = flux.cfl_max_dt(abs(a), abs(b), 0.0, g)
    if not math.isfinite(dt):
        return
    r = flux.spatial_rhs(U, g, adv=flux.AdvectionField.constant(a, b), limiter=True)
    assert (vals + dt * r).min() >= -1e-12 * max(1.0, vals.max())


def test_positive_bump_probe():
    g = build_grid(1.0, 0.0, 1.0, 30, 30)
    X, Y = np.meshgrid(g.x_centers, g.y_centers, indexing="ij")
    u = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.005)
    dt = flux.cfl_max_dt(1.0, 1.0, 0.0, g)
    r = flux.spatial_rhs(np.pad(u, NGHOST), g, adv=flux.AdvectionField.constant(1.0, 1.0), limiter=True)
    assert (u + dt * r).min() >= 0.0


def test_non_finite_rhs_flagged():
    g = build_grid(1.0, 0.0, 1.0, 6, 6)
    U = np.ones((12, 12))
    bad = flux.AdvectionField(lambda x, y, t: np.where(x > 0.5, np.nan, 1.0) + 0 * y, lambda x, y, t: 0 * x + 0 * y)
    with pytest.raises(FloatingPointError, match="cell"):
        flux.spatial_rhs(U, g, adv=bad)


def test_cfl_examples():
    g = build_grid(1.0, 0.0, 1.0, 50, 50)
    assert flux.cfl_max_dt(1.0, 1.0, 0.0, g) == pytest.approx(1e-4, rel=1e-14)
    d = 1 / (2 * 5.88)
    assert flux.cfl_max_dt(0.0, 0.0, d, g) == pytest.approx(8e-2 / (d * 5000), rel=1e-14)
    assert flux.cfl_max_dt(0.0, 0.0, d, g) == pytest.approx(1.88e-4, rel=2e-3)
    assert flux.cfl_max_dt(1.0, 1.0, d, g, 1 / 3) == pytest.approx(flux.cfl_max_dt(1.0, 1.0, d, g) / 3, rel=1e-15)
    assert flux.cfl_max_dt(0.0, 0.0, 0.0, g) == math.inf
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            flux.cfl_max_dt(1.0, 1.0, 0.0, g, bad)
    with pytest.raises(ValueError):
        flux.cfl_max_dt(-1.0, 0.0, 0.0, g)


def test_advection_field_sampling_shapes():
    g = build_grid(1.0, 0.0, 1.0, 6, 7)
    ax, by = flux.AdvectionField(lambda x, y, t: x + t, lambda x, y, t: y).sample(g, t=2.0)
    assert ax.shape == (7, 7, 5, 3) and by.shape == (6, 8, 5, 3)
    np.testing.assert_allclose(ax[3, 0, 0], g.x_interfaces[3] + QUAD.gl3_nodes * g.dx + 2.0)


def test_1d_rhs_matches_2d_for_x_only_data():
    n = 12
    g = build_grid(1.0, 0.0, 1.0, n, 6)
    x = g.x_centers
    u1 = 1 + 0.3 * np.sin(2 * np.pi * x)
    U = pad_periodic(np.repeat(u1[:, None], 6, axis=1))
    r2 = flux.spatial_rhs(U, g, adv=flux.AdvectionField.constant(1.0, 0.0), diffusivity=0.01)
    r1 = flux.spatial_rhs_1d(np.pad(u1, NGHOST, mode="wrap"), g.dx, speed=1.0, diffusivity=0.01)
    np.testing.assert_allclose(r2, r1[:, None] * np.ones((1, 6)), rtol=1e-10, atol=1e-12)
