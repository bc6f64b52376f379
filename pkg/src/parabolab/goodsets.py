"""Paraboloid-touching classification and parabolic covering machinery.

A paraboloid of opening M is L(x, t) +/- M(|x|^2 + |t|) for an affine L.
Touching is tested against every supplied domain node (global domination),
which reduces to a small linear feasibility problem in the slope (B, C)
per node; scipy's LP solver decides feasibility, with a fast candidate
check (the discrete gradient) tried first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .geometry import GridFunction, node_measure
from .regularity import DecayFit, decay_exponent_fit, parabolic_maximal

__all__ = [
    "Paraboloid",
    "GoodSetMask",
    "touches_from_below",
    "touches_from_above",
    "good_set_mask",
    "a_decay",
    "alpha_beta_sequences",
    "covering_lemma_verify",
    "DyadicCellSet",
    "generate_covering_instance",
]

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Paraboloid:
    """L(x, t) - M (|x|^2 + |t|) for 'below', + for 'above'."""

    A: float
    B: tuple
    C: float
    opening: float
    sign: str  # "below" or "above"

    def __post_init__(self):
        if self.opening <= 0:
            raise ValueError("opening must be positive")
        if self.sign not in ("below", "above"):
            raise ValueError("sign must be 'below' or 'above'")

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        lin = self.A + x @ np.asarray(self.B) + self.C * t
        bump = self.opening * (np.sum(x * x, axis=-1) + np.abs(t))
        return lin - bump if self.sign == "below" else lin + bump


def _touch_arrays(u: GridFunction, domain_mask: np.ndarray):
    g = u.grid
    X = np.broadcast_to(g.coords(), g.shape + (g.d,))
    T = np.broadcast_to(g.times[(slice(None),) + (None,) * g.d], g.shape)
    return X[domain_mask], T[domain_mask], u.values[domain_mask]


def _touch_feasible(dx, dt, rhs, grad_candidate=None, tol=FEAS_TOL):
    """Feasibility of B . dx + C dt <= rhs over all rows; variables (B, C)."""
    A_ub = np.concatenate([dx, dt[:, None]], axis=1)
    if grad_candidate is not None:
        if np.all(A_ub @ grad_candidate <= rhs + tol):
            return True
    res = linprog(
        np.zeros(A_ub.shape[1]),
        A_ub=A_ub,
        b_ub=rhs + tol,
        bounds=[(None, None)] * A_ub.shape[1],
        method="highs",
    )
    return res.status == 0


def _touch_test(xs, ts, vals, p0_x, p0_t, u0, M, sign, grad_candidate=None):
    dx = xs - p0_x
    dt = ts - p0_t
    bump = M * (np.sum(dx * dx, axis=-1) + np.abs(dt))
    if sign == "below":
        rhs = vals - u0 + bump
    else:
        rhs = -(vals - u0 - bump)
    return _touch_feasible(dx, dt, rhs, grad_candidate)


def touches_from_below(u: GridFunction, p0, M: float, domain_mask: np.ndarray | None = None) -> bool:
    """True iff some paraboloid of opening M touches u from below at node p0."""
    return _touch_single(u, p0, M, "below", domain_mask)


def touches_from_above(u: GridFunction, p0, M: float, domain_mask: np.ndarray | None = None) -> bool:
    return _touch_single(u, p0, M, "above", domain_mask)


def _touch_single(u, p0, M, sign, domain_mask):
    g = u.grid
    if domain_mask is None:
        domain_mask = np.ones(g.shape, dtype=bool)
    if not domain_mask[tuple(p0)]:
        raise ValueError("p0 must lie in the domain")
    xs, ts, vals = _touch_arrays(u, domain_mask)
    X = g.coords()
    p0 = tuple(p0)
    p0_x = X[p0[1:]]
    p0_t = g.times[p0[0]]
    u0 = u.values[p0]
    cand = _gradient_candidate(u, p0)
    return _touch_test(xs, ts, vals, p0_x, p0_t, u0, M, sign, cand)


def _gradient_candidate(u: GridFunction, node):
    """(B, C) = (central spatial gradient, one-sided time slope) at the node."""
    g = u.grid
    k, idx = node[0], node[1:]
    B = np.zeros(g.d)
    for a, i in enumerate(idx):
        sl = u.values[k]
        if 0 < i < g.n_space[a] - 1:
            up = idx[:a] + (i + 1,) + idx[a + 1 :]
            dn = idx[:a] + (i - 1,) + idx[a + 1 :]
            B[a] = (sl[up] - sl[dn]) / (2 * g.h)
        else:
            return None
    if k + 1 < g.n_t:
        C = (u.values[k + 1][idx] - u.values[k][idx]) / g.dt
    elif k > 0:
        C = (u.values[k][idx] - u.values[k - 1][idx]) / g.dt
    else:
        return None
    return np.concatenate([B, [C]])


@dataclass
class GoodSetMask:
    """Per-node below/above touching masks at one opening M on the K-cube nodes."""

    opening: float
    below: np.ndarray = field(repr=False)
    above: np.ndarray = field(repr=False)
    cube_mask: np.ndarray = field(repr=False)
    grid: object = None

    @property
    def good(self) -> np.ndarray:
        return self.below & self.above & self.cube_mask

    @property
    def bad(self) -> np.ndarray:
        return (~self.below | ~self.above) & self.cube_mask

    def measures(self) -> tuple:
        g = self.grid
        return (
            node_measure(int(np.count_nonzero(self.good)), g),
            node_measure(int(np.count_nonzero(self.bad)), g),
        )

    def to_run_length(self) -> dict:
        flat = self.bad.reshape(-1)
        changes = np.flatnonzero(np.diff(flat.astype(np.int8)))
        return {
            "opening": self.opening,
            "shape": list(self.bad.shape),
            "first": bool(flat[0]) if flat.size else False,
            "breaks": changes.tolist(),
        }


def good_set_mask(u: GridFunction, M: float, domain_mask: np.ndarray | None = None, cube_r: float = 1.0) -> GoodSetMask:
    """Classify every K_{cube_r} node of u by paraboloid touching of opening M."""
    g = u.grid
    if domain_mask is None:
        domain_mask = np.ones(g.shape, dtype=bool)
    cube = g.cube_mask(cube_r) & domain_mask
    xs, ts, vals = _touch_arrays(u, domain_mask)
    X = g.coords()
    below = np.zeros(g.shape, dtype=bool)
    above = np.zeros(g.shape, dtype=bool)
    for node in map(tuple, np.argwhere(cube)):
        p0_x = X[node[1:]]
        p0_t = g.times[node[0]]
        u0 = u.values[node]
        cand = _gradient_candidate(u, node)
        below[node] = _touch_test(xs, ts, vals, p0_x, p0_t, u0, M, "below", cand)
        above[node] = _touch_test(xs, ts, vals, p0_x, p0_t, u0, M, "above", cand)
    return GoodSetMask(M, below, above, cube, g)


def a_decay(u: GridFunction, openings, domain_mask: np.ndarray | None = None, cube_r: float = 1.0):
    """Fit |A_M ∩ K_1| ~ C M^(-delta) over the listed openings.

    Returns (DecayFit with delta = -exponent, per-opening measures); if
    every measure vanishes returns (None, measures) meaning "A_M empty".
    """
    openings = sorted(openings)
    if len(openings) < 3:
        raise ValueError("need at least 3 openings")
    measures = []
    for M in openings:
        gm = good_set_mask(u, M, domain_mask, cube_r)
        measures.append(gm.measures()[1])
    if all(m == 0 for m in measures):
        return None, list(zip(openings, measures))
    fit = decay_exponent_fit(openings, measures)
    fit = DecayFit(fit.constant, fit.exponent, fit.r_squared, fit.scales, fit.values)
    return fit, list(zip(openings, measures))


@dataclass
class AlphaBetaReport:
    rows: list  # dicts: k, alpha_k, beta_k
    recursion_ok: list  # per-level bool of alpha_{k+1} <= rho (alpha_k + beta_k)
    envelope_ok: bool  # alpha_k <= rho^k + sum rho^(k-i) beta_i at all levels


def alpha_beta_sequences(u: GridFunction, f: GridFunction, M: float, C1: float, rho: float, k_max: int, domain_mask: np.ndarray | None = None, min_nodes: int = 100) -> AlphaBetaReport:
    """Good-set measures alpha_k against source-maximal measures beta_k.

    alpha_k = |A_{M^k} ∩ K_1|; beta_k = measure of K_1 nodes where the
    parabolic maximal average of f^(d+1) reaches (C1 M^k)^(d+1).
    """
    if M <= 1 or C1 <= 0 or not 0 < rho < 1:
        raise ValueError("need M > 1, C1 > 0, rho in (0, 1)")
    g = u.grid
    cube = g.cube_mask(1.0)
    if np.count_nonzero(cube) < min_nodes:
        raise ValueError("grid too coarse inside K_1")
    from .geometry import Point

    radii = [2.0**-j for j in range(0, 6)]
    fpow = GridFunction(f.grid, np.abs(f.values) ** (g.d + 1))
    X = g.coords()
    maximal = np.zeros(g.shape)
    for node in map(tuple, np.argwhere(cube)):
        pt = Point(tuple(X[node[1:]]), float(g.times[node[0]]))
        maximal[node] = parabolic_maximal(fpow, pt, radii)
    rows = []
    alphas, betas = [], []
    for k in range(1, k_max + 1):
        gm = good_set_mask(u, M**k, domain_mask)
        alpha_k = gm.measures()[1]
        beta_mask = cube & (maximal >= (C1 * M**k) ** (g.d + 1))
        beta_k = node_measure(int(np.count_nonzero(beta_mask)), g)
        rows.append({"k": k, "alpha": alpha_k, "beta": beta_k})
        alphas.append(alpha_k)
        betas.append(beta_k)
    recursion = [
        alphas[k] <= rho * (alphas[k - 1] + betas[k - 1]) + 1e-15 for k in range(1, k_max)
    ]
    envelope = True
    for k in range(1, k_max + 1):
        bound = rho**k + sum(rho ** (k - i) * betas[i - 1] for i in range(1, k))
        if alphas[k - 1] > bound + 1e-15:
            envelope = False
    return AlphaBetaReport(rows, recursion, envelope)


# ---------------------------------------------------------------------------
# Stacked covering lemma on dyadic cell sets


@dataclass
class DyadicCellSet:
    """Subset of K_1 as level-L dyadic cells; shape (2^L,)*d + (4^L,)."""

    d: int
    level: int
    cells: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, d: int, level: int) -> "DyadicCellSet":
        shape = (2**level,) * d + (4**level,)
        return cls(d, level, np.zeros(shape, dtype=bool))

    @property
    def cell_volume(self) -> float:
        return (2.0 / 2**self.level) ** self.d * (1.0 / 4**self.level)

    def measure(self) -> float:
        return float(np.count_nonzero(self.cells)) * self.cell_volume

    def block(self, level: int, xi, ti) -> tuple:
        """Index slice of the level-`level` dyadic cube in the cell array."""
        f = 2 ** (self.level - level)
        ft = 4 ** (self.level - level)
        sl = tuple(slice(i * f, (i + 1) * f) for i in xi)
        return sl + (slice(ti * ft, (ti + 1) * ft),)


def _iter_cubes(d: int, max_level: int):
    for k in range(1, max_level + 1):
        for ti in range(4**k):
            for flat in range(2 ** (d * k)):
                xi = tuple((flat >> (a * k)) & (2**k - 1) for a in range(d))
                yield k, xi, ti


def _stack_slice(cs: DyadicCellSet, k: int, xi, ti, m: int):
    """Cells of the stacked predecessor region, or None if it leaves K_1."""
    pxi = tuple(i // 2 for i in xi)
    pti = ti // 4
    f = 2 ** (cs.level - (k - 1))
    ft = 4 ** (cs.level - (k - 1))
    t_start = (pti + 1) * ft
    t_end = t_start + m * ft
    if t_end > 4**cs.level:
        return None
    sl = tuple(slice(i * f, (i + 1) * f) for i in pxi)
    return sl + (slice(t_start, t_end),)


@dataclass
class CoveringReport:
    hypotheses_hold: bool
    conclusion_holds: bool
    measure_a: float
    measure_b: float
    bound: float
    generated_pass: int
    generated_total: int


def covering_lemma_verify(A: DyadicCellSet, B: DyadicCellSet, rho: float, m: int, trials: int = 0, seed: int = 0) -> CoveringReport:
    """Exhaustively check the stacked covering statement on cell sets.

    Hypotheses: A ⊆ B ⊆ K_1, |A| <= rho |K_1|, and every dyadic cube K
    with |K ∩ A| > rho |K| has its stacked predecessor region inside B.
    Conclusion: |A| <= rho (m + 1) / m |B|.  With ``trials`` > 0 also
    generates that many random hypothesis-satisfying instances and checks
    the conclusion on each.
    """
    if A.d != B.d or A.level != B.level:
        raise ValueError("cell sets must share dimension and level")
    if np.any(A.cells & ~B.cells):
        raise ValueError("A must be a subset of B")
    if not 0 < rho <= 1 or m < 1:
        raise ValueError("need rho in (0, 1] and m >= 1")
    hyp = _check_hypotheses(A, B, rho, m)
    ma, mb = A.measure(), B.measure()
    bound = rho * (m + 1) / m * mb
    concl = (ma <= bound + 1e-12) if hyp else True
    passed = 0
    for i in range(trials):
        Ag, Bg, rg, mg = generate_covering_instance(A.d, A.level, seed + i)
        if Ag.measure() <= rg * (mg + 1) / mg * Bg.measure() + 1e-12:
            passed += 1
    return CoveringReport(hyp, concl, ma, mb, bound, passed, trials)


def _check_hypotheses(A: DyadicCellSet, B: DyadicCellSet, rho: float, m: int) -> bool:
    K1_vol = 2.0**A.d * 1.0
    if A.measure() > rho * K1_vol + 1e-12:
        return False
    for k, xi, ti in _iter_cubes(A.d, A.level):
        blk = A.block(k, xi, ti)
        n_in = int(np.count_nonzero(A.cells[blk]))
        cube_cells = A.cells[blk].size
        if n_in * 1.0 > rho * cube_cells + 1e-12:
            sl = _stack_slice(A, k, xi, ti, m)
            if sl is None or not np.all(B.cells[sl]):
                return False
    return True


def generate_covering_instance(d: int, level: int, seed: int):
    """Random (A, B, rho, m) satisfying the covering hypotheses.

    Starts from a random seed set and repairs it: cubes that exceed the
    density threshold either get their stack added to B (when it fits in
    K_1) or lose cells of A until the threshold holds.
    """
    rng = np.random.default_rng(seed)
    rho = float(rng.uniform(0.15, 0.75))
    m = int(rng.integers(1, 4))
    A = DyadicCellSet.empty(d, level)
    density = rng.uniform(0.05, 0.6)
    A.cells = rng.uniform(size=A.cells.shape) < density
    B = DyadicCellSet.empty(d, level)
    B.cells = A.cells.copy()
    K1_cells = A.cells.size
    for _ in range(200):
        # global density cap
        excess = int(np.count_nonzero(A.cells)) - int(rho * K1_cells)
        if excess > 0:
            on = np.argwhere(A.cells)
            drop = on[rng.permutation(len(on))[:excess]]
            A.cells[tuple(drop.T)] = False
            B.cells = B.cells | A.cells
        changed = False
        for k, xi, ti in _iter_cubes(d, level):
            blk = A.block(k, xi, ti)
            n_in = int(np.count_nonzero(A.cells[blk]))
            if n_in * 1.0 > rho * A.cells[blk].size + 1e-12:
                sl = _stack_slice(A, k, xi, ti, m)
                if sl is not None and rng.uniform() < 0.7:
                    if not np.all(B.cells[sl]):
                        B.cells[sl] = True
                        changed = True
                else:
                    keep = int(rho * A.cells[blk].size)
                    on = np.argwhere(A.cells[blk])
                    drop = on[rng.permutation(len(on))[keep:]]
                    sub = A.cells[blk]
                    sub[tuple(drop.T)] = False
                    A.cells[blk] = sub
                    changed = True
        if not changed:
            break
    B.cells = B.cells | A.cells
    assert _check_hypotheses(A, B, rho, m)
    return A, B, rho, m
