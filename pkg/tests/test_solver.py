"""Explicit scheme: stencils, CFL guard, marching, diagnostics."""

import numpy as np
import pytest

from parabolab import operators as ops
from parabolab import solver
from parabolab.geometry import GridFunction, SpaceTimeGrid


def heat_spec(boundary="sin(pi*x1)*exp(-pi*pi*t)", source=0.0, t0=-0.25):
    return solver.ProblemSpec(ops.ScaledTrace(1.0, 1), source, (0.0,), (1.0,), t0, boundary)


def test_cfl_limit_formula():
    assert solver.cfl_limit(0.1, 2, 2.5) == pytest.approx(0.01 / 10.0)


def test_scheme_config_dt_resolution():
    cfg = solver.SchemeConfig(h=0.1, cfl_safety=0.8)
    assert cfg.resolve_dt(1, 1.0) == pytest.approx(0.8 * 0.005)
    with pytest.raises(solver.CflError):
        solver.SchemeConfig(h=0.1, dt=0.006).resolve_dt(1, 1.0)
    with pytest.raises(ValueError):
        solver.SchemeConfig(h=-1.0)


def test_discrete_hessian_exact_on_quadratic():
    D = np.array([[2.0, 0.5], [0.5, -1.0]])
    g = SpaceTimeGrid(2, (-1.0, -1.0), (1.0, 1.0), 0.25, 0.1, 3)
    u = GridFunction.from_callable(g, lambda X, t: 0.5 * np.einsum("...i,ij,...j->...", X, D, X))
    H = solver.discrete_hessian(u, (0, 4, 4))
    np.testing.assert_allclose(H, D, atol=1e-12)
    with pytest.raises(ValueError):
        solver.discrete_hessian(u, (0, 0, 4))


def test_hessian_field_matches_pointwise():
    rng = np.random.default_rng(0)
    g = SpaceTimeGrid(2, (-1.0, -1.0), (1.0, 1.0), 0.25, 0.1, 2)
    u = GridFunction(g, rng.standard_normal(g.shape))
    H = solver.hessian_field(u.values[0], g.h)
    for i in (1, 4, 7):
        for j in (1, 4, 7):
            np.testing.assert_allclose(H[i - 1, j - 1], solver.discrete_hessian(u, (0, i, j)))


def test_derivative_fields():
    g = SpaceTimeGrid(1, (0.0,), (1.0,), 0.25, 0.5, 3)
    u = GridFunction.from_callable(g, lambda X, t: 2.0 * X[..., 0] + 3.0 * t)
    np.testing.assert_allclose(solver.time_derivative_field(u), 3.0)
    np.testing.assert_allclose(solver.gradient_field(u.values[0], g.h, interior_only=False)[..., 0], 2.0)


def test_step_overwrites_boundary_and_guards_cfl():
    spec = heat_spec(boundary="1 + t")
    g = SpaceTimeGrid(1, (0.0,), (1.0,), 0.125, 0.125**2 / 4, 3)
    u0 = np.zeros(9)
    u1 = solver.step(u0, -0.25, spec, g, g.dt)
    assert u1[0] == pytest.approx(1.0 - 0.25 + g.dt)
    assert u1[-1] == pytest.approx(1.0 - 0.25 + g.dt)
    with pytest.raises(solver.CflError):
        solver.step(u0, -0.25, spec, g, 0.125**2)


def test_step_monotone():
    rng = np.random.default_rng(1)
    spec = solver.ProblemSpec(
        ops.PucciPlus(ops.EllipticityPair(1.0, 2.0), 1), 0.0, (0.0,), (1.0,), -0.25, 0.0
    )
    g = SpaceTimeGrid(1, (0.0,), (1.0,), 1 / 16, (1 / 16) ** 2 / 8, 3)
    for _ in range(10):
        u = rng.standard_normal(17)
        v = u + rng.uniform(0.0, 1.0, size=17)
        un = solver.step(u, -0.25, spec, g, g.dt)
        vn = solver.step(v, -0.25, spec, g, g.dt)
        assert np.all(un[1:-1] <= vn[1:-1] + 1e-12)


def test_solve_heat_accuracy():
    res = solver.solve(heat_spec(), solver.SchemeConfig(h=1 / 32, dt=(1 / 32) ** 2 / 4))
    g = res.u.grid
    X = g.coords()
    exact = np.stack(
        [np.exp(-np.pi**2 * t) * np.sin(np.pi * X[..., 0]) for t in g.times]
    )
    assert np.max(np.abs(res.u.values - exact)) < 5e-3
    assert res.n_steps * res.dt_march == pytest.approx(0.25)


def test_solve_n_store_subsampling():
    res = solver.solve(heat_spec(), solver.SchemeConfig(h=1 / 16), n_store=33)
    g = res.u.grid
    assert g.n_t == 33
    assert g.times[0] == pytest.approx(-0.25)
    assert g.times[-1] == 0.0
    # the stored initial slice is the boundary data at t0
    X = g.coords()
    np.testing.assert_allclose(
        res.u.values[0], np.exp(np.pi**2 * 0.25) * np.sin(np.pi * X[..., 0]), atol=1e-12
    )


def test_class_residual_near_zero_for_compatible_solution():
    res = solver.solve(heat_spec(), solver.SchemeConfig(h=1 / 32, dt=(1 / 32) ** 2 / 4))
    assert res.residual_lower < 0.05
    assert res.residual_upper < 0.05


def test_class_residual_flags_wrong_class():
    # u = 5t grows faster than any admissible drift with f = 0 allows
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.25, 0.01, 5)
    u = GridFunction.from_callable(g, lambda X, t: 5.0 * t + 0.0 * X[..., 0])
    lower, upper = solver.class_residual(u, 1.0, 1.0, 0.0)
    assert lower == pytest.approx(5.0)
    assert upper == pytest.approx(0.0)


def test_maximum_principle_zero_source():
    res = solver.solve(heat_spec(boundary="sin(2*pi*x1)"), solver.SchemeConfig(h=1 / 16))
    rep = solver.maximum_principle_check(res)
    assert rep.ok
    assert rep.excess <= 1e-12


def test_caloric_derivative_check():
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.125, 1 / 64, 65)
    u = GridFunction.from_callable(g, lambda X, t: X[..., 0] ** 2 + 2.0 * t)
    rep = solver.caloric_derivative_check(u, [0.5, 0.25], 0, (2,))
    assert rep.ok
    assert rep.spread == pytest.approx(1.0)
    v = GridFunction.from_callable(g, lambda X, t: X[..., 0] ** 2)
    with pytest.raises(ValueError):
        solver.caloric_derivative_check(v, [0.5], 0, (2,))
