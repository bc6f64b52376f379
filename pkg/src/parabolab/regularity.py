"""Norm and seminorm estimators on grid functions.

Parabolic Holder seminorms, the quadratic-polynomial (Campanato style)
seminorm, constrained dyadic polynomial fits, Log-Lip modulus fits,
Sobolev and p-BMO norms, a parabolic maximal average, and the log-log
decay-exponent regression that turns "<= C rho^gamma" statements into
measurable fits.

All "sup over rho > 0" quantities are realized as maxima over explicit
geometric radius lists supplied by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GridFunction, Point
from .solver import gradient_field, hessian_field, time_derivative_field

__all__ = [
    "QuadraticPolynomial",
    "AffineFunction",
    "DecayFit",
    "PolySequenceReport",
    "LogLipReport",
    "holder_seminorm",
    "c2alpha_seminorm",
    "campanato_seminorm",
    "constrained_polyfit",
    "dyadic_polynomial_sequence",
    "loglip_fit",
    "sobolev_norm",
    "pbmo_norm",
    "parabolic_maximal",
    "decay_exponent_fit",
    "default_radii",
]

VALUE_FLOOR = 1e-15


def default_radii(k_max: int = 5) -> list:
    return [2.0**-k for k in range(1, k_max + 1)]


@dataclass(frozen=True)
class QuadraticPolynomial:
    """P(x, t) = x' D x / 2 + C t + B . x + A."""

    A: float
    B: tuple
    C: float
    D: tuple  # row tuples of the symmetric matrix

    @classmethod
    def build(cls, A, B, C, D) -> "QuadraticPolynomial":
        B = tuple(float(b) for b in np.atleast_1d(B))
        D = np.asarray(D, dtype=float)
        D = 0.5 * (D + D.T)
        return cls(float(A), B, float(C), tuple(tuple(row) for row in D))

    @property
    def d(self) -> int:
        return len(self.B)

    @property
    def hessian(self) -> np.ndarray:
        return np.asarray(self.D, dtype=float)

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        D = self.hessian
        quad = 0.5 * np.einsum("...i,ij,...j->...", x, D, x)
        lin = x @ np.asarray(self.B)
        return self.A + lin + self.C * np.asarray(t, dtype=float) + quad


@dataclass(frozen=True)
class AffineFunction:
    """L(x) = B . x + A (no time slope)."""

    A: float
    B: tuple

    def __call__(self, x, t=None):
        return self.A + np.asarray(x, dtype=float) @ np.asarray(self.B)


@dataclass(frozen=True)
class DecayFit:
    constant: float
    exponent: float
    r_squared: float
    scales: tuple
    values: tuple


def decay_exponent_fit(scales, values) -> DecayFit:
    """Least squares of log(value) on log(scale); exponent is the slope."""
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > VALUE_FLOOR
    scales, values = scales[keep], values[keep]
    if len(scales) < 3:
        raise ValueError("need at least 3 positive (scale, value) pairs")
    ls, lv = np.log(scales), np.log(values)
    slope, intercept = np.polyfit(ls, lv, 1)
    pred = slope * ls + intercept
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return DecayFit(float(np.exp(intercept)), float(slope), r2, tuple(scales), tuple(values))


# ---------------------------------------------------------------------------
# Holder seminorms


def _node_arrays(u: GridFunction, mask: np.ndarray):
    g = u.grid
    X = np.broadcast_to(g.coords(), g.shape + (g.d,))
    T = np.broadcast_to(g.times[(slice(None),) + (None,) * g.d], g.shape)
    return X[mask], T[mask], u.values[mask]


def _holder_from_arrays(xs, ts, vals, alpha, pair_budget, seed) -> float:
    m = len(vals)
    if m < 2:
        return 0.0
    if m * (m - 1) // 2 <= max(pair_budget, 1):
        i, j = np.triu_indices(m, k=1)
    else:
        # stratified: random pairs plus near-neighbour pairs at dyadic scales
        rng = np.random.default_rng(seed)
        order = np.lexsort((ts, *xs.T[::-1]))
        half = pair_budget // 2
        i = rng.integers(0, m, size=half)
        j = rng.integers(0, m, size=half)
        offs = 2 ** rng.integers(0, max(1, int(np.log2(m))), size=pair_budget - half)
        base = rng.integers(0, m, size=pair_budget - half)
        i2 = order[base]
        j2 = order[(base + offs) % m]
        i = np.concatenate([i, i2])
        j = np.concatenate([j, j2])
        keep = i != j
        i, j = i[keep], j[keep]
    dx = np.linalg.norm(xs[i] - xs[j], axis=-1)
    dist = dx + np.sqrt(np.abs(ts[i] - ts[j]))
    dv = np.abs(vals[i] - vals[j])
    good = dist > 0
    if not np.any(good):
        return 0.0
    return float(np.max(dv[good] / dist[good] ** alpha))


def holder_seminorm(u: GridFunction, alpha: float, mask: np.ndarray, pair_budget: int = 2_000_000, seed: int = 0) -> float:
    """Discrete parabolic Holder seminorm over the masked nodes.

    Full pair enumeration when it fits in the budget, otherwise a
    deterministic stratified sample; always a lower bound of the true
    discrete sup.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    if not np.any(mask):
        raise ValueError("empty region")
    xs, ts, vals = _node_arrays(u, mask)
    return _holder_from_arrays(xs, ts, vals, alpha, pair_budget, seed)


def _derived_fields(u: GridFunction):
    """(ut, H) with validity masks; ut on levels 0..n_t-2, H on interior nodes."""
    g = u.grid
    ut = time_derivative_field(u)
    H = np.stack([hessian_field(u.values[k], g.h) for k in range(g.n_t)])
    return ut, H


def c2alpha_seminorm(u: GridFunction, alpha: float, mask: np.ndarray, pair_budget: int = 2_000_000, seed: int = 0) -> float:
    """[d_t u]_{alpha} + max over Hessian components of [D^2 u]_{alpha}.

    Discrete derivatives: forward in time, compact central Hessian; the
    region shrinks to where the stencils exist.
    """
    g = u.grid
    d = g.d
    inner = tuple(slice(1, -1) for _ in range(d))
    ut, H = _derived_fields(u)

    X = g.coords()
    T = g.times
    # time-derivative nodes: all spatial nodes, levels 0..n_t-2
    ut_mask = mask[:-1]
    Xb = np.broadcast_to(X, (g.n_t - 1,) + g.shape[1:] + (d,))
    Tb = np.broadcast_to(T[:-1][(slice(None),) + (None,) * d], (g.n_t - 1,) + g.shape[1:])
    if not np.any(ut_mask):
        raise ValueError("region too thin for the time stencil")
    s_t = _holder_from_arrays(Xb[ut_mask], Tb[ut_mask], ut[ut_mask], alpha, pair_budget, seed)

    h_mask = mask[(slice(None),) + inner]
    if not np.any(h_mask):
        raise ValueError("region too thin for the Hessian stencil")
    Xi = np.broadcast_to(X[inner], (g.n_t,) + H.shape[1 : 1 + d] + (d,))
    Ti = np.broadcast_to(T[(slice(None),) + (None,) * d], (g.n_t,) + H.shape[1 : 1 + d])
    s_h = 0.0
    for a in range(d):
        for b in range(a, d):
            comp = H[..., a, b]
            s_h = max(
                s_h,
                _holder_from_arrays(Xi[h_mask], Ti[h_mask], comp[h_mask], alpha, pair_budget, seed),
            )
    return s_t + s_h


# ---------------------------------------------------------------------------
# Polynomial approximation


def _poly_design(xs: np.ndarray, ts: np.ndarray, with_time: bool = True):
    """Columns: 1, x_a, (t), x_a^2 / 2, x_a x_b (a < b)."""
    d = xs.shape[-1]
    cols = [np.ones(len(xs))]
    for a in range(d):
        cols.append(xs[:, a])
    if with_time:
        cols.append(ts)
    quad_index = []
    for a in range(d):
        cols.append(0.5 * xs[:, a] ** 2)
        quad_index.append((a, a))
    for a in range(d):
        for b in range(a + 1, d):
            cols.append(xs[:, a] * xs[:, b])
            quad_index.append((a, b))
    return np.stack(cols, axis=-1), quad_index


def _coeffs_to_poly(coeffs, d, quad_index, C=None) -> QuadraticPolynomial:
    A = coeffs[0]
    B = coeffs[1 : 1 + d]
    k = 1 + d
    if C is None:
        C = coeffs[k]
        k += 1
    D = np.zeros((d, d))
    for (a, b), c in zip(quad_index, coeffs[k:]):
        if a == b:
            D[a, a] = c
        else:
            D[a, b] = D[b, a] = c
    return QuadraticPolynomial.build(A, B, C, D)


def poly_dim(d: int) -> int:
    return 2 + d + d * (d + 1) // 2


def _best_poly_lstsq(xs, ts, vals, chebyshev_shift=True):
    M, quad_index = _poly_design(xs, ts)
    coeffs, *_ = np.linalg.lstsq(M, vals, rcond=None)
    P = _coeffs_to_poly(coeffs, xs.shape[-1], quad_index)
    resid = vals - P(xs, ts)
    if chebyshev_shift:
        shift = 0.5 * (resid.max() + resid.min())
        P = QuadraticPolynomial.build(P.A + shift, P.B, P.C, P.hessian)
        resid = resid - shift
    return P, float(np.max(np.abs(resid)))


def _best_poly_exact(xs, ts, vals):
    """Sup-norm best fit by linear programming (small cylinders only)."""
    from scipy.optimize import linprog

    M, quad_index = _poly_design(xs, ts)
    n, k = M.shape
    # variables: coeffs (k), s; minimize s subject to |vals - M c| <= s
    A_ub = np.block([[M, -np.ones((n, 1))], [-M, -np.ones((n, 1))]])
    b_ub = np.concatenate([vals, -vals])
    c = np.zeros(k + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * k + [(0, None)], method="highs")
    if not res.success:
        raise RuntimeError(f"sup-norm fit failed: {res.message}")
    P = _coeffs_to_poly(res.x[:k], xs.shape[-1], quad_index)
    return P, float(res.x[-1])


def campanato_seminorm(u: GridFunction, alpha: float, center: Point, radii, method: str = "lstsq"):
    """max over rho of inf over quadratics P of sup_{Q_rho} |u - P| / rho^(2+alpha).

    The inf uses least squares plus one sup-norm midrange shift; this
    overestimates the true inf by a bounded factor that cancels in decay
    fits.  ``method='exact'`` switches to the linear-programming sup fit.
    Returns (seminorm, per-radius list of (rho, sup_residual, P)).
    """
    g = u.grid
    per_radius = []
    best = 0.0
    for rho in sorted(radii, reverse=True):
        mask = g.cylinder_mask(center, rho)
        xs, ts, vals = _node_arrays(u, mask)
        if len(vals) < poly_dim(g.d):
            raise ValueError(f"cylinder rho={rho:g} has fewer nodes than dim(P)")
        rel = xs - np.asarray(center.x)
        relt = ts - center.t
        if method == "exact":
            P, sup = _best_poly_exact(rel, relt, vals)
        else:
            P, sup = _best_poly_lstsq(rel, relt, vals)
        ratio = sup / rho ** (2 + alpha)
        per_radius.append((rho, sup, P))
        best = max(best, ratio)
    return best, per_radius


def constrained_polyfit(u: GridFunction, center: Point, r: float, F, tol: float = 1e-10, max_iter: int = 100) -> QuadraticPolynomial:
    """Least-squares quadratic on Q_r(center) subject to C = F(0, 0, D).

    When F(0, 0, .) is linear in the Hessian the constraint is eliminated
    exactly; otherwise the time slope is updated by projected iteration.
    """
    g = u.grid
    d = g.d
    mask = g.cylinder_mask(center, r)
    xs, ts, vals = _node_arrays(u, mask)
    if len(vals) < poly_dim(d):
        raise ValueError("cylinder has fewer nodes than dim(P)")
    rel = xs - np.asarray(center.x)
    relt = ts - center.t

    def F00(D):
        return F.evaluate(np.zeros(d), 0.0, D)

    if getattr(F, "linear_in_hessian", False):
        M, quad_index = _poly_design(rel, relt, with_time=False)
        # fold C = l(D) into the quadratic columns: + l(basis) * t
        weights = []
        for a, b in quad_index:
            E = np.zeros((d, d))
            if a == b:
                E[a, a] = 1.0
            else:
                E[a, b] = E[b, a] = 1.0
            weights.append(F00(E))
        k0 = 1 + d
        M = M.copy()
        for idx, w in enumerate(weights):
            M[:, k0 + idx] += w * relt
        coeffs, *_ = np.linalg.lstsq(M, vals, rcond=None)
        P = _coeffs_to_poly(coeffs, d, quad_index, C=0.0)
        return QuadraticPolynomial.build(P.A, P.B, F00(P.hessian), P.hessian)

    # projected iteration for nonlinear F(0, 0, .)
    M_full, quad_index = _poly_design(rel, relt, with_time=True)
    coeffs, *_ = np.linalg.lstsq(M_full, vals, rcond=None)
    P = _coeffs_to_poly(coeffs, d, quad_index)
    C = F00(P.hessian)
    M_net, _ = _poly_design(rel, relt, with_time=False)
    for _ in range(max_iter):
        coeffs, *_ = np.linalg.lstsq(M_net, vals - C * relt, rcond=None)
        P = _coeffs_to_poly(coeffs, d, quad_index, C=C)
        C_new = F00(P.hessian)
        if abs(C_new - C) < tol:
            return QuadraticPolynomial.build(P.A, P.B, C_new, P.hessian)
        C = C_new
    raise RuntimeError("constrained fit did not converge")


@dataclass
class PolySequenceReport:
    rho: float
    alpha: float
    entries: list = field(default_factory=list)  # (k, P_k, sup_error)
    increments: list = field(default_factory=list)  # dicts with both weightings
    fit: DecayFit | None = None

    def to_record(self) -> dict:
        return {
            "rho": self.rho,
            "alpha": self.alpha,
            "errors": [(k, e) for k, _, e in self.entries],
            "increments": self.increments,
            "exponent": None if self.fit is None else self.fit.exponent,
            "r_squared": None if self.fit is None else self.fit.r_squared,
        }


def dyadic_polynomial_sequence(u: GridFunction, F, rho: float, alpha: float, k_max: int) -> PolySequenceReport:
    """Constrained fits on the shrinking cylinders Q_rho^k, k = 1..k_max.

    Records sup errors e_k, the coefficient increments under both the
    Schauder weighting rho^(k-1) (|C| + |D| term) and the Log-Lip
    weighting rho^(2(k-1)), and the decay fit of e_k against rho^k whose
    exponent estimates 2 + alpha.
    """
    if not 0 < rho <= 0.5:
        raise ValueError("rho must be in (0, 1/2]")
    g = u.grid
    origin = Point((0.0,) * g.d, 0.0)
    report = PolySequenceReport(rho=rho, alpha=alpha)
    prev = QuadraticPolynomial.build(0.0, np.zeros(g.d), 0.0, np.zeros((g.d, g.d)))
    scales, errors = [], []
    for k in range(1, k_max + 1):
        r = rho**k
        P = constrained_polyfit(u, origin, r, F)
        mask = g.cylinder_mask(origin, r)
        xs, ts, vals = _node_arrays(u, mask)
        e_k = float(np.max(np.abs(vals - P(xs, ts))))
        dA = abs(P.A - prev.A)
        dB = float(np.linalg.norm(np.subtract(P.B, prev.B)))
        dC = abs(P.C - prev.C)
        dD = float(np.linalg.norm(P.hessian - prev.hessian, ord=2))
        w1 = rho ** (k - 1)
        report.entries.append((k, P, e_k))
        report.increments.append(
            {
                "k": k,
                "dA": dA,
                "dB": dB,
                "dC": dC,
                "dD": dD,
                "schauder": dA + w1 * dB + w1 * (dC + dD),
                "loglip": dA + w1 * dB + w1**2 * (dC + dD),
            }
        )
        scales.append(r)
        errors.append(e_k)
        prev = P
    try:
        report.fit = decay_exponent_fit(scales, errors)
    except ValueError:
        report.fit = None
    return report


@dataclass(frozen=True)
class LogLipReport:
    c_plain: float
    c_log: float
    sse_plain: float
    sse_log: float
    preferred: str  # "plain", "log" or "degenerate"
    moduli: tuple  # (r, m(r)) pairs


def loglip_fit(u: GridFunction, center: Point, radii) -> LogLipReport:
    """Compare m(r) = sup_{Q_r} |u - first-order expansion| against
    C r^2 and C r^2 log(1/r) in log space."""
    if len(radii) < 4:
        raise ValueError("need at least 4 scales")
    g = u.grid
    node = u.origin_index() if center.x == (0.0,) * g.d and center.t == 0.0 else None
    if node is None:
        idx = tuple(int(round((c - lo) / g.h)) for c, lo in zip(center.x, g.lo))
        kt = int(round(center.t / g.dt)) + g.n_t - 1
        node = (kt,) + idx
    for a, i in enumerate(node[1:]):
        if not 0 < i < g.n_space[a] - 1:
            raise ValueError("center too close to the spatial boundary")
    u00 = u.values[node]
    sl = u.values[node[0]]
    Du00 = np.array(
        [np.gradient(sl, g.h, axis=a)[node[1:]] for a in range(g.d)]
    )
    moduli = []
    for r in sorted(radii, reverse=True):
        mask = g.cylinder_mask(center, r)
        xs, ts, vals = _node_arrays(u, mask)
        rel = xs - np.asarray(center.x)
        m_r = float(np.max(np.abs(vals - (u00 + rel @ Du00))))
        moduli.append((r, m_r))
    rs = np.array([r for r, _ in moduli])
    ms = np.array([m for _, m in moduli])
    if np.max(ms) < 1e-13:
        return LogLipReport(0.0, 0.0, 0.0, 0.0, "degenerate", tuple(moduli))
    if np.any(rs >= 1.0):
        raise ValueError("radii must be < 1 for the log model")
    keep = ms > VALUE_FLOOR
    rs, ms = rs[keep], ms[keep]
    lp = np.log(ms) - 2 * np.log(rs)
    c_plain = float(np.exp(lp.mean()))
    sse_plain = float(np.sum((lp - lp.mean()) ** 2))
    ll = np.log(ms) - 2 * np.log(rs) - np.log(np.log(1.0 / rs))
    c_log = float(np.exp(ll.mean()))
    sse_log = float(np.sum((ll - ll.mean()) ** 2))
    preferred = "log" if sse_log < sse_plain else "plain"
    return LogLipReport(c_plain, c_log, sse_plain, sse_log, preferred, tuple(moduli))


# ---------------------------------------------------------------------------
# Integral norms


def sobolev_norm(u: GridFunction, p: float, region_mask: np.ndarray | None = None) -> float:
    """Discrete W^{2,1,p} norm: [||u||^p + ||u_t||^p + ||Du||^p + ||D^2u||^p]^(1/p).

    Trapezoidal quadrature; u_t forward in time, Du one-sided second order
    at edges, D^2 u compact on the interior (Frobenius norm per node).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    g = u.grid
    if region_mask is None:
        region_mask = np.ones(g.shape, dtype=bool)
    if not np.any(region_mask):
        raise ValueError("empty region")
    w = g.quadrature_weights()

    def lp_term(vals, mask, weights):
        sel = mask & np.isfinite(vals)
        if not np.any(sel):
            return 0.0
        return float(np.sum(weights[sel] * np.abs(vals[sel]) ** p))

    total = lp_term(u.values, region_mask, w)

    ut = np.full(g.shape, np.nan)
    ut[:-1] = time_derivative_field(u)
    total += lp_term(ut, region_mask, w)

    Du = np.stack([gradient_field(u.values[k], g.h, interior_only=False) for k in range(g.n_t)])
    gmag = np.linalg.norm(Du, axis=-1)
    total += lp_term(gmag, region_mask, w)

    inner = tuple(slice(1, -1) for _ in range(g.d))
    Hmag = np.full(g.shape, np.nan)
    for k in range(g.n_t):
        H = hessian_field(u.values[k], g.h)
        Hmag[(k,) + inner] = np.linalg.norm(H.reshape(H.shape[: g.d] + (-1,)), axis=-1)
    total += lp_term(Hmag, region_mask, w)
    return total ** (1.0 / p)


def _masked_average(vals: np.ndarray, mask: np.ndarray) -> float:
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise ValueError("empty average region")
    return float(np.sum(vals[mask]) / n)


def pbmo_norm(g_fun: GridFunction, p: float, region_mask: np.ndarray, radii, center_stride: int = 4) -> float:
    """sup over sampled centers and radii of the L^p mean oscillation.

    Averages are node-count weighted (boundary nodes count fully); the
    center sample walks the region nodes with a fixed stride, so runs are
    deterministic.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    g = g_fun.grid
    idxs = np.argwhere(region_mask)
    if len(idxs) == 0:
        raise ValueError("empty region")
    centers = idxs[:: max(1, center_stride)]
    X = g.coords()
    worst = 0.0
    for c in centers:
        ct = g.times[c[0]]
        cx = X[tuple(c[1:])]
        for rho in radii:
            mask = g.cylinder_mask(Point(tuple(cx), float(ct)), rho) & region_mask
            if np.count_nonzero(mask) < 2:
                continue
            mean = _masked_average(g_fun.values, mask)
            osc = _masked_average(np.abs(g_fun.values - mean) ** p, mask) ** (1.0 / p)
            worst = max(worst, osc)
    return worst


def parabolic_maximal(g_fun: GridFunction, point: Point, radii) -> float:
    """max over radii of the average of g over Q_rho(point) within the grid."""
    if np.any(g_fun.values < -1e-12):
        raise ValueError("maximal average expects a nonnegative field")
    g = g_fun.grid
    best = 0.0
    for rho in radii:
        mask = g.cylinder_mask(point, rho)
        if not np.any(mask):
            continue
        best = max(best, _masked_average(g_fun.values, mask))
    return best
