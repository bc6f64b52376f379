"""Built-in property suites behind ``parabolab verify <suite>``.

Each suite returns (property name, passed, info) triples; the CLI prints
a table and exits nonzero on any failure.  These mirror the invariants the
test suite pins down, packaged for quick sanity runs on installed builds.
"""

from __future__ import annotations

import numpy as np

from . import goodsets, operators as ops, regularity, solver
from .geometry import GridFunction, Point, SpaceTimeGrid

__all__ = ["SUITES", "run_suite"]


def _operators_suite():
    rng = np.random.default_rng(11)
    results = []
    lam, Lam = 1.0, 2.5
    ok_refl = ok_hom = ok_order = True
    for _ in range(200):
        d = int(rng.integers(1, 4))
        M = ops.random_symmetric(rng, d)
        if abs(ops.pucci_plus(-M, lam, Lam) + ops.pucci_minus(M, lam, Lam)) > 1e-9:
            ok_refl = False
        c = float(rng.uniform(0.1, 5.0))
        if abs(ops.pucci_plus(c * M, lam, Lam) - c * ops.pucci_plus(M, lam, Lam)) > 1e-9:
            ok_hom = False
        A = ops.random_spd_with_aperture(rng, d, lam, Lam / lam - 1.0)
        tr = float(np.trace(A @ M))
        if not ops.pucci_minus(M, lam, Lam) - 1e-9 <= tr <= ops.pucci_plus(M, lam, Lam) + 1e-9:
            ok_order = False
    results.append(("pucci_reflection", ok_refl, ""))
    results.append(("pucci_homogeneity", ok_hom, ""))
    results.append(("pucci_ordering", ok_order, ""))

    variants = [
        ops.PucciPlus(ops.EllipticityPair(lam, Lam), 2),
        ops.PucciMinus(ops.EllipticityPair(lam, Lam), 2),
        ops.ScaledTrace(1.5, 2),
        ops.LinearCoefficient(np.diag([1.0, 2.0]), 2, ops.EllipticityPair(1.0, 2.0)),
        ops.NormalizedPLaplace(3.0, 2),
    ]
    ok_sand = True
    for F in variants:
        samples = [
            (np.zeros(2), 0.0, ops.random_symmetric(rng, 2), ops.random_symmetric(rng, 2))
            for _ in range(100)
        ]
        if not ops.check_pucci_sandwich(F, samples).ok:
            ok_sand = False
    results.append(("ellipticity_sandwich", ok_sand, ""))

    ok_ap = all(
        abs(ops.plaplace_pair(2.0 + s).aperture - s) < 1e-14 for s in np.linspace(0.05, 0.95, 10)
    )
    results.append(("p_laplace_aperture_above_2", ok_ap, ""))
    return results


def _solver_suite():
    results = []
    lam = 1.0
    F = ops.ScaledTrace(lam, 1)
    spec = solver.ProblemSpec(F, 0.0, (0.0,), (1.0,), -0.25, "sin(pi*x1)*exp(-pi*pi*t)")
    errors = []
    for h in (1 / 16, 1 / 32):
        res = solver.solve(spec, solver.SchemeConfig(h=h, dt=h * h / 4))
        g = res.u.grid
        X = g.coords()
        exact = np.stack([np.exp(-np.pi**2 * t) * np.sin(np.pi * X[..., 0]) for t in g.times])
        errors.append(float(np.max(np.abs(res.u.values - exact))))
    ratio = errors[0] / errors[1]
    results.append(("heat_convergence_ratio", 3.0 <= ratio <= 5.0, f"ratio={ratio:.2f}"))

    rng = np.random.default_rng(5)
    ok_mono = True
    g = SpaceTimeGrid(1, (0.0,), (1.0,), 1 / 16, (1 / 16) ** 2 / 4, 3)
    for _ in range(20):
        u0 = rng.standard_normal(17)
        v0 = u0 + rng.uniform(0, 1, size=17)
        pf = solver.ProblemSpec(ops.PucciPlus(ops.EllipticityPair(1.0, 2.0), 1), 0.0, (0.0,), (1.0,), -0.25, 0.0)
        u1 = solver.step(u0, -0.25, pf, g, g.dt)
        v1 = solver.step(v0, -0.25, pf, g, g.dt)
        interior = slice(1, -1)
        if np.any(u1[interior] > v1[interior] + 1e-12):
            ok_mono = False
    results.append(("step_monotonicity", ok_mono, ""))
    return results


def _regularity_suite():
    results = []
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 1 / 16, 1 / 64, 65)
    quad = GridFunction.from_callable(g, lambda X, t: 0.5 * X[..., 0] ** 2 + 2.0 * t)
    val, _ = regularity.campanato_seminorm(quad, 0.5, Point((0.0,), 0.0), [0.5, 0.25, 0.125])
    results.append(("campanato_kernel", val < 1e-10, f"value={val:.2e}"))

    cubic = GridFunction.from_callable(g, lambda X, t: X[..., 0] ** 3)
    s1 = regularity.holder_seminorm(cubic, 0.5, g.cube_mask(0.5))
    s2 = regularity.holder_seminorm(cubic, 0.5, g.cube_mask(1.0))
    results.append(("holder_region_monotone", s2 >= s1 - 1e-12, ""))

    fit = regularity.decay_exponent_fit([0.5, 0.25, 0.125, 0.0625], [r**2 for r in (0.5, 0.25, 0.125, 0.0625)])
    results.append(("decay_fit_identity", abs(fit.exponent - 2.0) < 1e-12 and fit.r_squared > 1 - 1e-12, ""))
    return results


def _goodsets_suite():
    results = []
    rng = np.random.default_rng(3)
    passed = 0
    trials = 200
    for i in range(trials):
        A, B, rho, m = goodsets.generate_covering_instance(1, 3, 1000 + i)
        if A.measure() <= rho * (m + 1) / m * B.measure() + 1e-12:
            passed += 1
    results.append(("covering_lemma", passed == trials, f"{passed}/{trials}"))

    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 1 / 8, 1 / 8, 9)
    u = GridFunction.from_callable(g, lambda X, t: 0.5 * X[..., 0] ** 2)
    gm = goodsets.good_set_mask(u, 1.0)
    good, bad = gm.measures()
    results.append(("smooth_bad_set_empty", bad == 0.0, f"|A|={bad:g}"))

    ok_sym = True
    vals = rng.standard_normal(g.shape)
    w = GridFunction(g, vals)
    wneg = GridFunction(g, -vals)
    for node in [(8, 8), (4, 4), (6, 10)]:
        below = goodsets.touches_from_below(w, node, 5.0)
        above = goodsets.touches_from_above(wneg, node, 5.0)
        if below != above:
            ok_sym = False
    results.append(("sign_symmetry", ok_sym, ""))
    return results


SUITES = {
    "operators": _operators_suite,
    "solver": _solver_suite,
    "regularity": _regularity_suite,
    "goodsets": _goodsets_suite,
}


def run_suite(name: str):
    return SUITES[name]()
