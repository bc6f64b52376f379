"""End-to-end acceptance criteria.

Each test covers one numbered criterion and prints a single PASS/FAIL
line.  Tolerances and runtime budgets are part of the criteria.
"""

import time

import numpy as np
import pytest

from parabolab import cli, goodsets, operators as ops, regularity as reg, solver
from parabolab.geometry import GridFunction, Point, SpaceTimeGrid


def report(num, name, ok, detail=""):
    line = f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def test_criterion_01_pucci_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    tol = 1e-9
    ok = True
    mats = {d: [ops.random_symmetric(rng, d) for _ in range(334)] for d in (1, 2, 3)}
    lam, Lam = 1.0, 2.0
    for d, batch in mats.items():
        for M in batch:
            if abs(ops.pucci_plus(-M, lam, Lam) + ops.pucci_minus(M, lam, Lam)) > tol:
                ok = False
            c = float(rng.uniform(0.1, 5.0))
            if abs(ops.pucci_plus(c * M, lam, Lam) - c * ops.pucci_plus(M, lam, Lam)) > tol:
                ok = False
        variants = [
            ops.PucciPlus(ops.EllipticityPair(lam, Lam), d),
            ops.PucciMinus(ops.EllipticityPair(lam, Lam), d),
            ops.ScaledTrace(1.3, d),
            ops.LinearCoefficient(
                ops.random_spd_with_aperture(rng, d, lam, 1.0), d, ops.EllipticityPair(lam, Lam)
            ),
            ops.Isaacs(
                [[ops.random_spd_with_aperture(rng, d, lam, 1.0) for _ in range(2)] for _ in range(2)],
                None,
                d,
                ops.EllipticityPair(lam, Lam),
            ),
            ops.NormalizedPLaplace(2.5, d),
        ]
        samples = [
            (np.zeros(d), 0.0, batch[2 * i], batch[2 * i + 1]) for i in range(len(batch) // 2)
        ]
        for F in variants:
            if not ops.check_pucci_sandwich(F, samples, tol=tol).ok:
                ok = False
    elapsed = time.perf_counter() - t0
    report(1, "pucci algebra", ok and elapsed < 5.0, f"n=1002, {elapsed:.2f}s")


def test_criterion_02_solver_convergence():
    t0 = time.perf_counter()
    errors = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        spec = solver.ProblemSpec(
            ops.ScaledTrace(1.0, 1), 0.0, (0.0,), (1.0,), -0.25, "sin(pi*x1)*exp(-pi*pi*t)"
        )
        res = solver.solve(spec, solver.SchemeConfig(h=h, dt=h * h / 4))
        g = res.u.grid
        X = g.coords()
        exact = np.stack([np.exp(-np.pi**2 * t) * np.sin(np.pi * X[..., 0]) for t in g.times])
        errors.append(float(np.max(np.abs(res.u.values - exact))))
    ratios = [errors[i] / errors[i + 1] for i in range(2)]
    ok = all(3.0 <= r <= 5.0 for r in ratios)
    elapsed = time.perf_counter() - t0
    report(2, "solver convergence", ok and elapsed < 30.0,
           f"ratios={[round(r, 2) for r in ratios]}, {elapsed:.1f}s")


def test_criterion_03_discrete_maximum_principle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    pool_1d = [
        ops.PucciPlus(ops.EllipticityPair(1.0, 2.0), 1),
        ops.PucciMinus(ops.EllipticityPair(1.0, 2.0), 1),
        ops.ScaledTrace(1.5, 1),
        ops.NormalizedPLaplace(2.5, 1),
        ops.LinearCoefficient([["1 + 0.4*abs(x1)"]], 1, ops.EllipticityPair(1.0, 1.4)),
    ]
    pool_2d = [
        ops.ScaledTrace(1.0, 2),
        ops.LinearCoefficient(
            [["1 + 0.3*x1*x1", 0.0], [0.0, "1 + 0.3*x2*x2"]], 2, ops.EllipticityPair(1.0, 1.3)
        ),
    ]
    worst = 0.0
    for i in range(20):
        d = 1 if i % 3 else 2
        F = (pool_1d if d == 1 else pool_2d)[int(rng.integers(len(pool_1d if d == 1 else pool_2d)))]
        a, b, c, k = rng.uniform(-2, 2, size=3).tolist() + [int(rng.integers(1, 4))]
        terms = f"{a:.4f}*sin({k}*x1 + {b:.4f}) + {c:.4f}*t"
        if d == 2:
            terms += f" + {b:.4f}*cos({k}*x2)"
        spec = solver.ProblemSpec(F, 0.0, (-1.0,) * d, (1.0,) * d, -0.25, terms)
        res = solver.solve(spec, solver.SchemeConfig(h=1 / 8 if d == 1 else 1 / 4))
        rep = solver.maximum_principle_check(res)
        worst = max(worst, rep.excess)
    ok = worst <= 1e-12
    elapsed = time.perf_counter() - t0
    report(3, "discrete maximum principle", ok and elapsed < 30.0,
           f"worst excess={worst:.2e}, {elapsed:.1f}s")


CORPUS = [
    ("heat1", lambda X, t: np.exp(-t) * np.sin(X[..., 0])),
    ("heat2", lambda X, t: np.exp(-4 * t) * np.sin(2 * X[..., 0])),
    ("heat3", lambda X, t: np.exp(-9 * t) * np.cos(3 * X[..., 0])),
    ("heat4", lambda X, t: np.exp(-16 * t) * np.sin(4 * X[..., 0])),
    ("x2t", lambda X, t: X[..., 0] ** 2 * t),
    ("xt2", lambda X, t: X[..., 0] * t**2 + X[..., 0] ** 2 * t),
    ("exp", lambda X, t: np.exp(X[..., 0] + 0.5 * t)),
    ("cos_t", lambda X, t: np.cos(X[..., 0]) * np.cos(t)),
    ("sin2t", lambda X, t: np.sin(X[..., 0]) * np.sin(2 * t)),
    ("cos4t", lambda X, t: np.cos(2 * X[..., 0]) * np.cos(4 * t)),
]


def test_criterion_04_campanato_kernel_and_equivalence():
    t0 = time.perf_counter()
    alpha = 0.5
    rng = np.random.default_rng(104)
    g0 = SpaceTimeGrid(1, (-1.0,), (1.0,), 1 / 16, 1 / 256, 257)
    kernel_ok = True
    for _ in range(5):
        A, B, C, D = rng.uniform(-2, 2, size=4)
        u = GridFunction.from_callable(g0, lambda X, t: 0.5 * D * X[..., 0] ** 2 + C * t + B * X[..., 0] + A)
        val, _ = reg.campanato_seminorm(u, alpha, Point((0.0,), 0.0), [0.5, 0.25, 0.125])
        if val > 1e-10:
            kernel_ok = False
    c_star = 10.0
    centers = [Point((x,), tt) for x in (-0.5, -0.25, 0.0, 0.25, 0.5) for tt in (0.0, -0.125, -0.25)]
    ratios = []
    for n in (32, 64):
        g = SpaceTimeGrid(1, (-1.0,), (1.0,), 2.0 / n, 4.0 / n**2, n**2 // 4 + 1)
        for _, f in CORPUS:
            u = GridFunction.from_callable(g, f)
            camp = max(reg.campanato_seminorm(u, alpha, c, [0.5, 0.25])[0] for c in centers)
            c2a = reg.c2alpha_seminorm(u, alpha, g.cube_mask(0.5), pair_budget=200_000)
            ratios.append(camp / c2a)
    equiv_ok = all(1.0 / c_star <= r <= c_star for r in ratios)
    elapsed = time.perf_counter() - t0
    report(4, "campanato kernel and equivalence", kernel_ok and equiv_ok and elapsed < 60.0,
           f"ratio range=[{min(ratios):.3f}, {max(ratios):.3f}], {elapsed:.1f}s")


def test_criterion_05_schauder_trend():
    t0 = time.perf_counter()
    details = {}
    for aperture in (0.05, 1.0):
        F = ops.PucciPlus(ops.EllipticityPair(1.0, 1.0 + aperture), 1)
        spec = solver.ProblemSpec(F, "-sqrt(abs(x1))", (-1.0,), (1.0,), -1.0, 0.0)
        res = solver.solve(spec, solver.SchemeConfig(h=2 / 256), n_store=1024)
        assert res.u.grid.shape == (1024, 257)
        rep = reg.dyadic_polynomial_sequence(res.u, F, 0.5, 0.5, 4)
        details[aperture] = (rep.fit.exponent, rep.fit.r_squared)
    expo, r2 = details[0.05]
    ok = expo >= 2.0 + 0.5 - 0.3 and r2 >= 0.95
    elapsed = time.perf_counter() - t0
    report(5, "schauder trend", ok and elapsed < 300.0,
           f"exponent={expo:.3f}, r2={r2:.4f}; aperture 1.0 logged exponent={details[1.0][0]:.3f}, {elapsed:.1f}s")


def test_criterion_06_loglip_trend():
    t0 = time.perf_counter()
    F = ops.PucciPlus(ops.EllipticityPair(1.0, 1.05), 1)
    radii = [0.5, 0.25, 0.125, 0.0625]
    prefs = {}
    for name, src in (("discontinuous", "sign(x1)"), ("smooth", "1 + x1")):
        spec = solver.ProblemSpec(F, src, (-1.0,), (1.0,), -1.0, 0.0)
        res = solver.solve(spec, solver.SchemeConfig(h=2 / 256), n_store=1024)
        rep = reg.loglip_fit(res.u, Point((0.0,), 0.0), radii)
        prefs[name] = (rep.preferred, rep.sse_plain, rep.sse_log)
    ok = prefs["discontinuous"][0] == "log" and prefs["smooth"][0] == "plain"
    elapsed = time.perf_counter() - t0
    report(6, "log-lip trend", ok and elapsed < 300.0,
           f"sign(x1) preferred={prefs['discontinuous'][0]} "
           f"(sse plain={prefs['discontinuous'][1]:.4f}, log={prefs['discontinuous'][2]:.4f}); "
           f"smooth preferred={prefs['smooth'][0]}, {elapsed:.1f}s")


def test_criterion_07_good_set_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(107)
    g = SpaceTimeGrid(1, (-1.0,), (1.0,), 0.25, 0.125, 9)
    ok = True
    for i in range(50):
        u = GridFunction(g, rng.standard_normal(g.shape))
        p, q = rng.uniform(-2, 2, size=2)
        aff = GridFunction.from_callable(g, lambda X, t: p * X[..., 0] + q * t)
        ua = GridFunction(g, u.values + aff.values)
        w = GridFunction(g, -u.values)
        node = (int(rng.integers(1, g.n_t)), int(rng.integers(1, g.n_space[0] - 1)))
        M = float(rng.uniform(0.5, 4.0))
        below = goodsets.touches_from_below(u, node, M)
        if below != goodsets.touches_from_below(ua, node, M):
            ok = False
        if below != goodsets.touches_from_above(w, node, M):
            ok = False
        if below and not goodsets.touches_from_below(u, node, 2 * M):
            ok = False
    empty_ok = True
    for a, b in ((1.0, 0.5), (-2.0, 1.0), (0.5, -1.5), (3.0, 0.0), (-0.5, 2.0)):
        u = GridFunction.from_callable(g, lambda X, t: 0.5 * a * X[..., 0] ** 2 + b * t)
        M = abs(a) / 2 + abs(b) + 0.5
        gm = goodsets.good_set_mask(u, M)
        if gm.measures()[1] != 0.0:
            empty_ok = False
    elapsed = time.perf_counter() - t0
    report(7, "good-set properties", ok and empty_ok and elapsed < 120.0, f"{elapsed:.1f}s")


def test_criterion_08_a_set_decay():
    t0 = time.perf_counter()
    F = ops.PucciPlus(ops.EllipticityPair(1.0, 1.1), 1)
    spec = solver.ProblemSpec(F, "-min(100, 4/sqrt(abs(x1) + 1e-6))", (-1.5,), (1.5,), -1.5, 0.0)
    res = solver.solve(spec, solver.SchemeConfig(h=3 / 192), n_store=193)
    uu = res.u.subsample(4, 8)
    openings = [2.0, 4.0, 8.0, 16.0]
    fit, measures = goodsets.a_decay(uu, openings)
    delta = None if fit is None else -fit.exponent
    ok = fit is not None and delta > 0 and fit.r_squared >= 0.9 and len(openings) >= 4
    elapsed = time.perf_counter() - t0
    report(8, "a-set decay", ok and elapsed < 300.0,
           f"delta={delta:.3f}, r2={fit.r_squared:.3f}, {elapsed:.1f}s" if fit else "A empty")


def test_criterion_09_stacked_covering():
    t0 = time.perf_counter()
    passed = 0
    for i in range(200):
        A, B, rho, m = goodsets.generate_covering_instance(1, 3, 900 + i)
        rep = goodsets.covering_lemma_verify(A, B, rho, m)
        if rep.hypotheses_hold and rep.conclusion_holds:
            passed += 1
    elapsed = time.perf_counter() - t0
    report(9, "stacked covering lemma", passed == 200 and elapsed < 60.0,
           f"{passed}/200, {elapsed:.1f}s")


def test_criterion_10_cordes_implication():
    t0 = time.perf_counter()
    rng = np.random.default_rng(110)
    eps0 = 0.1
    ok = True
    for i in range(500):
        d = 1 + i % 3
        lam = float(rng.uniform(0.5, 2.0))
        A = ops.random_spd_with_aperture(rng, d, lam, eps0 * 0.999)
        rep = ops.cordes_check(A, lam, eps0, [(np.zeros(d), 0.0)], d)
        if not (rep.ok and rep.n_samples == 1):
            ok = False
    elapsed = time.perf_counter() - t0
    report(10, "cordes implication", ok and elapsed < 5.0, f"n=500, {elapsed:.2f}s")


def test_criterion_11_p_laplace_aperture():
    t0 = time.perf_counter()
    ok = True
    for k in range(1, 11):
        for p in (2.0 + k / 16.0, 2.0 - k / 16.0):
            pair = ops.plaplace_pair(p)
            if pair != ops.EllipticityPair(min(1.0, p - 1.0), max(1.0, p - 1.0)):
                ok = False
            if pair.Lam - pair.lam != abs(p - 2.0):
                ok = False
            if p >= 2.0 and pair.aperture != p - 2.0:
                ok = False
    elapsed = time.perf_counter() - t0
    report(11, "p-laplace aperture", ok and elapsed < 1.0, f"gap |p-2| exact on 20 values, {elapsed:.3f}s")


DETERMINISM_CONFIG = """
seed = 7
problem.d = 1
problem.operator = pucci_plus
problem.lambda = 1.0
problem.Lambda = 1.05
problem.source = sin(3*x1)
problem.boundary = 0.0
problem.domain.lo = -1.0
problem.domain.hi = 1.0
problem.t0 = -0.25
scheme.h = 0.125
analyses = campanato, class_residual, max_principle
campanato.radii = 0.5, 0.25
sweep.parameter = aperture
sweep.values = 0.05, 0.1
"""


def test_criterion_12_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(DETERMINISM_CONFIG)
    outs = []
    for run in ("one", "two"):
        out = tmp_path / run
        assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
        outs.append((out / "results.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    elapsed = time.perf_counter() - t0
    report(12, "determinism", ok and elapsed < 600.0, f"{len(outs[0])} bytes, {elapsed:.1f}s")
