"""Seminorm and norm estimators."""

import numpy as np
import pytest

from parabolab import operators as ops
from parabolab import regularity as reg
from parabolab import solver
from parabolab.geometry import GridFunction, Point, SpaceTimeGrid


def grid_1d(n=32, t_cells=None):
    t_cells = t_cells or n**2 // 4
    return SpaceTimeGrid(1, (-1.0,), (1.0,), 2.0 / n, 1.0 / t_cells, t_cells + 1)


def test_quadratic_polynomial_eval():
    P = reg.QuadraticPolynomial.build(1.0, [2.0], 3.0, [[4.0]])
    x = np.array([[0.5], [-1.0]])
    np.testing.assert_allclose(P(x, -1.0), [1.0 + 1.0 - 3.0 + 0.5, 1.0 - 2.0 - 3.0 + 2.0])
    # build symmetrizes the Hessian
    Q = reg.QuadraticPolynomial.build(0.0, [0.0, 0.0], 0.0, [[0.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(Q.hessian, [[0.0, 1.0], [1.0, 0.0]])


def test_decay_fit_recovers_power_law():
    scales = [0.5, 0.25, 0.125, 0.0625]
    fit = reg.decay_exponent_fit(scales, [3.0 * s**1.7 for s in scales])
    assert fit.exponent == pytest.approx(1.7)
    assert fit.constant == pytest.approx(3.0)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(ValueError):
        reg.decay_exponent_fit([0.5, 0.25], [1.0, 0.5])
    with pytest.raises(ValueError):
        reg.decay_exponent_fit(scales, [0.0, 0.0, 0.0, 0.0])


def test_holder_seminorm_lipschitz_field():
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.25, 0.25, 5)
    u = GridFunction.from_callable(g, lambda X, t: X[..., 0])
    # same-time pairs realize |dx| / (|dx| + sqrt(dt)) = 1 at alpha = 1
    assert reg.holder_seminorm(u, 1.0, np.ones(g.shape, dtype=bool)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        reg.holder_seminorm(u, 1.5, np.ones(g.shape, dtype=bool))


def test_holder_sampled_is_lower_bound():
    rng = np.random.default_rng(0)
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.125, 0.125, 9)
    u = GridFunction(g, rng.standard_normal(g.shape))
    mask = np.ones(g.shape, dtype=bool)
    full = reg.holder_seminorm(u, 0.5, mask)
    sampled = reg.holder_seminorm(u, 0.5, mask, pair_budget=500, seed=3)
    assert sampled <= full + 1e-12


def test_c2alpha_vanishes_on_quadratics():
    g = grid_1d(16)
    u = GridFunction.from_callable(g, lambda X, t: 0.5 * X[..., 0] ** 2 + 2.0 * t + X[..., 0])
    assert reg.c2alpha_seminorm(u, 0.5, np.ones(g.shape, dtype=bool)) == pytest.approx(0.0, abs=1e-9)


def test_campanato_kernel_and_positivity():
    g = grid_1d(16)
    radii = [0.5, 0.25, 0.125]
    quad = GridFunction.from_callable(g, lambda X, t: 0.2 * X[..., 0] ** 2 - 1.3 * t + 0.7 * X[..., 0] + 2.0)
    val, per = reg.campanato_seminorm(quad, 0.5, Point((0.0,), 0.0), radii)
    assert val < 1e-10
    assert [r for r, _, _ in per] == radii
    cubic = GridFunction.from_callable(g, lambda X, t: X[..., 0] ** 3)
    val_c, _ = reg.campanato_seminorm(cubic, 0.5, Point((0.0,), 0.0), radii)
    assert val_c > 0.05


def test_campanato_exact_not_worse_than_lstsq():
    g = grid_1d(16)
    u = GridFunction.from_callable(g, lambda X, t: np.sin(2 * X[..., 0]) * np.exp(t))
    ls, _ = reg.campanato_seminorm(u, 0.5, Point((0.0,), 0.0), [0.5, 0.25])
    ex, _ = reg.campanato_seminorm(u, 0.5, Point((0.0,), 0.0), [0.5, 0.25], method="exact")
    assert ex <= ls + 1e-9


def test_constrained_polyfit_linear_constraint():
    g = grid_1d(16)
    F = ops.ScaledTrace(1.0, 1)
    u = GridFunction.from_callable(g, lambda X, t: 0.5 * X[..., 0] ** 2 + t)
    P = reg.constrained_polyfit(u, Point((0.0,), 0.0), 0.5, F)
    assert P.C == pytest.approx(F.evaluate(np.zeros(1), 0.0, P.hessian), abs=1e-12)
    assert P.hessian[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert P.C == pytest.approx(1.0, abs=1e-9)


def test_constrained_polyfit_nonlinear_projection():
    g = grid_1d(16)
    F = ops.PucciPlus(ops.EllipticityPair(1.0, 2.0), 1)
    u = GridFunction.from_callable(g, lambda X, t: -0.5 * X[..., 0] ** 2 - t + 0.1 * X[..., 0] ** 3)
    P = reg.constrained_polyfit(u, Point((0.0,), 0.0), 0.5, F)
    assert abs(P.C - F.evaluate(np.zeros(1), 0.0, P.hessian)) < 1e-10


def test_dyadic_sequence_on_smooth_field():
    g = grid_1d(64)
    F = ops.ScaledTrace(1.0, 1)
    u = GridFunction.from_callable(g, lambda X, t: np.exp(-t) * np.sin(X[..., 0]))
    rep = reg.dyadic_polynomial_sequence(u, F, 0.5, 0.5, 4)
    assert rep.fit is not None
    # smooth non-quadratic fields decay at least at third order
    assert rep.fit.exponent > 2.5
    assert len(rep.entries) == 4
    assert {"schauder", "loglip"} <= set(rep.increments[0])
    with pytest.raises(ValueError):
        reg.dyadic_polynomial_sequence(u, F, 0.9, 0.5, 3)


def test_loglip_fit_plain_and_degenerate():
    g = grid_1d(32)
    radii = [0.5, 0.25, 0.125, 0.0625]
    quad = GridFunction.from_callable(g, lambda X, t: 0.7 * X[..., 0] ** 2)
    rep = reg.loglip_fit(quad, Point((0.0,), 0.0), radii)
    assert rep.preferred == "plain"
    assert rep.sse_plain < 1e-3
    lin = GridFunction.from_callable(g, lambda X, t: 2.0 * X[..., 0] + 1.0)
    assert reg.loglip_fit(lin, Point((0.0,), 0.0), radii).preferred == "degenerate"
    with pytest.raises(ValueError):
        reg.loglip_fit(quad, Point((0.0,), 0.0), [0.5, 0.25, 0.125])
    with pytest.raises(ValueError):
        reg.loglip_fit(quad, Point((0.0,), 0.0), [1.0, 0.5, 0.25, 0.125])


def test_loglip_fit_detects_log_modulus():
    # bounded source oscillating at parabolic scales produces the
    # r^2 log(1/r) modulus the plain model cannot match
    F = ops.PucciPlus(ops.EllipticityPair(1.0, 1.05), 1)
    spec = solver.ProblemSpec(F, "sign(x1*x1 + 4*t)", (-1.0,), (1.0,), -1.0, 0.0)
    res = solver.solve(spec, solver.SchemeConfig(h=2 / 256), n_store=1024)
    rep = reg.loglip_fit(res.u, Point((0.0,), 0.0), [0.5, 0.25, 0.125, 0.0625])
    assert rep.preferred == "log"
    assert rep.sse_log < rep.sse_plain


def test_sobolev_norm_against_quadrature_oracle():
    g = grid_1d(32, t_cells=64)
    u = GridFunction.from_callable(g, lambda X, t: X[..., 0])
    # |u|^2 integrates to 2/3 over [-1,1]x[-1,0]; |Du| = 1 integrates to 2
    val = reg.sobolev_norm(u, 2.0)
    assert val == pytest.approx(np.sqrt(2.0 / 3.0 + 2.0), rel=2e-3)
    with pytest.raises(ValueError):
        reg.sobolev_norm(u, 0.5)


def test_pbmo_norm_scaling_and_constants():
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.25, 0.125, 9)
    c = GridFunction.from_callable(g, lambda X, t: np.full(X[..., 0].shape, 3.0))
    mask = np.ones(g.shape, dtype=bool)
    assert reg.pbmo_norm(c, 2.0, mask, [0.5, 0.25]) == pytest.approx(0.0)
    u = GridFunction.from_callable(g, lambda X, t: X[..., 0] + np.sin(t))
    v = GridFunction(g, 2.0 * u.values)
    a = reg.pbmo_norm(u, 2.0, mask, [0.5, 0.25])
    b = reg.pbmo_norm(v, 2.0, mask, [0.5, 0.25])
    assert b == pytest.approx(2.0 * a)


def test_parabolic_maximal():
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.25, 0.125, 9)
    c = GridFunction.from_callable(g, lambda X, t: np.full(X[..., 0].shape, 2.0))
    assert reg.parabolic_maximal(c, Point((0.0,), 0.0), [0.5, 0.25]) == pytest.approx(2.0)
    w = GridFunction.from_callable(g, lambda X, t: X[..., 0])
    with pytest.raises(ValueError):
        reg.parabolic_maximal(w, Point((0.0,), 0.0), [0.5])
