"""Explicit monotone time stepping for du/dt - F(x, t, D^2 u) = f.

The scheme is forward Euler with central second differences; under the
CFL bound dt <= h^2 / (2 d Lambda) the update is order preserving, which
gives the discrete maximum principle used by the good-set experiments.
Cross derivatives use the four-point formula and are not wide-stencil
monotone; experiments keep d = 1 or diagonal-dominant coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expressions import compile_field
from .geometry import GridFunction, SpaceTimeGrid
from .operators import NormalizedPLaplace, Operator

__all__ = [
    "SchemeConfig",
    "ProblemSpec",
    "SolveResult",
    "CflError",
    "cfl_limit",
    "discrete_hessian",
    "hessian_field",
    "gradient_field",
    "time_derivative_field",
    "step",
    "solve",
    "class_residual",
    "maximum_principle_check",
    "caloric_derivative_check",
]


class CflError(RuntimeError):
    """Raised when a step is attempted above the monotone stability bound."""


def cfl_limit(h: float, d: int, Lam: float) -> float:
    """Largest dt keeping the explicit update monotone: h^2 / (2 d Lambda)."""
    return h * h / (2.0 * d * Lam)


@dataclass(frozen=True)
class SchemeConfig:
    h: float
    dt: float | None = None
    cfl_safety: float = 0.9

    def __post_init__(self):
        if self.h <= 0 or not 0 < self.cfl_safety <= 1:
            raise ValueError("invalid scheme parameters")

    def resolve_dt(self, d: int, Lam: float) -> float:
        limit = self.cfl_safety * cfl_limit(self.h, d, Lam)
        if self.dt is None:
            return limit
        if self.dt > cfl_limit(self.h, d, Lam) * (1 + 1e-12):
            raise CflError(
                f"dt={self.dt:g} violates the CFL bound {cfl_limit(self.h, d, Lam):g}"
            )
        return self.dt


@dataclass
class ProblemSpec:
    """Problem data on a box x (t0, 0] with parabolic boundary data g."""

    F: Operator
    source: object  # expression / number / callable (x, t) -> value
    lo: tuple
    hi: tuple
    t0: float
    boundary: object  # expression / number / callable (x, t) -> value

    def __post_init__(self):
        d = self.F.d
        self.lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        self.hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(self.lo) != d or len(self.hi) != d:
            raise ValueError("domain extent does not match operator dimension")
        if self.t0 >= 0:
            raise ValueError("initial time must be negative")
        self.source = self.source if callable(self.source) else compile_field(self.source, d)
        self.boundary = self.boundary if callable(self.boundary) else compile_field(self.boundary, d)


@dataclass
class SolveResult:
    u: GridFunction
    residual_lower: float
    residual_upper: float
    n_steps: int
    dt_march: float
    wall_seconds: float = 0.0
    boundary_mask: np.ndarray = field(default=None, repr=False)


def _interior(shape_space):
    return tuple(slice(1, -1) for _ in shape_space)


def discrete_hessian(u: GridFunction, node) -> np.ndarray:
    """Second central differences at one interior node of a time slice.

    ``node`` is (k, i1, ..., id).  Diagonal: (u_{+e} - 2u + u_{-e}) / h^2;
    off-diagonal: four-point cross formula.
    """
    k, idx = node[0], tuple(node[1:])
    d = u.grid.d
    h = u.grid.h
    for a, i in enumerate(idx):
        if not 0 < i < u.grid.n_space[a] - 1:
            raise ValueError("node has no full interior stencil")
    sl = u.values[k]
    H = np.empty((d, d))
    for a in range(d):
        up = idx[:a] + (idx[a] + 1,) + idx[a + 1 :]
        dn = idx[:a] + (idx[a] - 1,) + idx[a + 1 :]
        H[a, a] = (sl[up] - 2 * sl[idx] + sl[dn]) / h**2
        for b in range(a + 1, d):
            pp = list(idx)
            pp[a] += 1
            pp[b] += 1
            mm = list(idx)
            mm[a] -= 1
            mm[b] -= 1
            pm = list(idx)
            pm[a] += 1
            pm[b] -= 1
            mp = list(idx)
            mp[a] -= 1
            mp[b] += 1
            H[a, b] = H[b, a] = (
                sl[tuple(pp)] + sl[tuple(mm)] - sl[tuple(pm)] - sl[tuple(mp)]
            ) / (4 * h**2)
    return H


def hessian_field(slice_vals: np.ndarray, h: float) -> np.ndarray:
    """Compact discrete Hessian on the interior; shape (*interior, d, d)."""
    d = slice_vals.ndim
    inner = _interior(slice_vals.shape)
    H = np.empty(tuple(n - 2 for n in slice_vals.shape) + (d, d))
    for a in range(d):
        up = list(inner)
        dn = list(inner)
        up[a] = slice(2, None)
        dn[a] = slice(None, -2)
        H[..., a, a] = (slice_vals[tuple(up)] - 2 * slice_vals[inner] + slice_vals[tuple(dn)]) / h**2
        for b in range(a + 1, d):
            pp = list(inner)
            mm = list(inner)
            pm = list(inner)
            mp = list(inner)
            pp[a] = slice(2, None)
            pp[b] = slice(2, None)
            mm[a] = slice(None, -2)
            mm[b] = slice(None, -2)
            pm[a] = slice(2, None)
            pm[b] = slice(None, -2)
            mp[a] = slice(None, -2)
            mp[b] = slice(2, None)
            cross = (
                slice_vals[tuple(pp)]
                + slice_vals[tuple(mm)]
                - slice_vals[tuple(pm)]
                - slice_vals[tuple(mp)]
            ) / (4 * h**2)
            H[..., a, b] = cross
            H[..., b, a] = cross
    return H


def gradient_field(slice_vals: np.ndarray, h: float, interior_only: bool = True) -> np.ndarray:
    """First differences; central in the interior, one-sided second order at edges."""
    grads = np.gradient(slice_vals, h) if slice_vals.ndim > 1 else [np.gradient(slice_vals, h)]
    G = np.stack(grads, axis=-1)
    if interior_only:
        return G[_interior(slice_vals.shape)]
    return G


def time_derivative_field(u: GridFunction) -> np.ndarray:
    """Forward difference in time; shape (n_t - 1, *n_space)."""
    return np.diff(u.values, axis=0) / u.grid.dt


def _boundary_mask(n_space) -> np.ndarray:
    mask = np.zeros(n_space, dtype=bool)
    for a in range(len(n_space)):
        sl0 = [slice(None)] * len(n_space)
        sl0[a] = 0
        mask[tuple(sl0)] = True
        sl0[a] = -1
        mask[tuple(sl0)] = True
    return mask


def step(u_n: np.ndarray, t_n: float, spec: ProblemSpec, grid: SpaceTimeGrid, dt: float) -> np.ndarray:
    """One forward Euler step of a spatial slice; boundary overwritten by g."""
    d = grid.d
    if dt > cfl_limit(grid.h, d, spec.F.pair.Lam) * (1 + 1e-12):
        raise CflError("refusing to step above the CFL bound")
    X = grid.coords()
    inner = _interior(u_n.shape)
    H = hessian_field(u_n, grid.h)
    Xi = X[inner].reshape(-1, d)
    Hi = H.reshape(-1, d, d)
    grad = None
    if isinstance(spec.F, NormalizedPLaplace) and spec.F.direction is None:
        grad = gradient_field(u_n, grid.h).reshape(-1, d)
    Fv = spec.F.evaluate_many(Xi, t_n, Hi, grad=grad)
    fv = np.asarray(spec.source(Xi, t_n), dtype=float).reshape(-1)
    out = u_n.copy()
    out[inner] = u_n[inner] + dt * (Fv + fv).reshape(H.shape[:-2])
    bmask = _boundary_mask(u_n.shape)
    out[bmask] = spec.boundary(X[bmask], t_n + dt)
    if not np.all(np.isfinite(out)):
        raise RuntimeError("non-finite update; reduce dt or check the data")
    return out


def solve(spec: ProblemSpec, cfg: SchemeConfig, n_store: int | None = None) -> SolveResult:
    """March from t0 to 0 and report the solution with S-class residuals.

    The march uses a CFL-compliant dt (an integer number of steps per
    stored level); ``n_store`` limits the number of stored time levels by
    keeping every s-th slice, always including t = 0 and t0.
    """
    import time as _time

    t_start = _time.perf_counter()
    d = spec.F.d
    dt = cfg.resolve_dt(d, spec.F.pair.Lam)
    n_steps = int(np.ceil(-spec.t0 / dt - 1e-12))
    dt = -spec.t0 / n_steps
    if dt > cfl_limit(cfg.h, d, spec.F.pair.Lam) * (1 + 1e-12):
        n_steps += 1
        dt = -spec.t0 / n_steps
    stride = 1
    if n_store is not None and n_steps + 1 > n_store:
        stride = int(np.ceil(n_steps / (n_store - 1)))
        n_steps = stride * (n_store - 1)
        dt = -spec.t0 / n_steps

    grid_march = SpaceTimeGrid(d, spec.lo, spec.hi, cfg.h, dt, n_steps + 1)
    X = grid_march.coords()
    u = np.asarray(spec.boundary(X, spec.t0), dtype=float)
    stored = [u.copy()]
    times = grid_march.times
    for k in range(n_steps):
        u = step(u, times[k], spec, grid_march, dt)
        if (k + 1) % stride == 0:
            stored.append(u.copy())
    grid_out = SpaceTimeGrid(d, spec.lo, spec.hi, cfg.h, dt * stride, len(stored))
    gf = GridFunction(grid_out, np.stack(stored))
    f_inf = float(np.max(np.abs(spec.source(X.reshape(-1, d), 0.0))))
    lower, upper = class_residual(gf, spec.F.pair.lam, spec.F.pair.Lam, f_inf)
    bmask = _boundary_mask(grid_out.n_space)
    return SolveResult(
        u=gf,
        residual_lower=lower,
        residual_upper=upper,
        n_steps=n_steps,
        dt_march=dt,
        wall_seconds=_time.perf_counter() - t_start,
        boundary_mask=bmask,
    )


def class_residual(u: GridFunction, lam: float, Lam: float, f_inf: float) -> tuple[float, float]:
    """Discrete S* membership report.

    Returns (max lower violation, max upper violation) over interior
    nodes of du/dt - M+(D^2 u) - ||f||_inf <= 0 <= du/dt - M-(D^2 u) + ||f||_inf,
    with forward time differences matching the marching direction.
    """
    g = u.grid
    ut = time_derivative_field(u)  # (n_t - 1, *space)
    lower = 0.0
    upper = 0.0
    inner = _interior(g.n_space)
    for k in range(g.n_t - 1):
        H = hessian_field(u.values[k], g.h).reshape(-1, g.d, g.d)
        eigs = np.linalg.eigvalsh(H) if g.d > 1 else H[:, 0, :]
        pos = np.sum(np.where(eigs > 0, eigs, 0.0), axis=-1)
        neg = np.sum(np.where(eigs < 0, eigs, 0.0), axis=-1)
        mplus = lam * neg + Lam * pos
        mminus = lam * pos + Lam * neg
        utk = ut[k][inner].reshape(-1)
        lower = max(lower, float(np.max(utk - mplus - f_inf, initial=0.0)))
        upper = max(upper, float(np.max(-(utk - mminus + f_inf), initial=0.0)))
    return lower, upper


@dataclass(frozen=True)
class MaxPrincipleReport:
    ok: bool
    interior_sup: float
    boundary_sup: float
    excess: float


def maximum_principle_check(result: SolveResult, tol: float = 1e-12) -> MaxPrincipleReport:
    """sup over all nodes of u <= sup over the parabolic boundary of u + tol.

    Exact assertion for f = 0; for nonzero sources the excess is reported
    without asserting a constant.
    """
    vals = result.u.values
    bmask = result.boundary_mask
    boundary_sup = max(float(np.max(vals[0])), float(np.max(vals[:, bmask])))
    interior_sup = float(np.max(vals))
    excess = interior_sup - boundary_sup
    return MaxPrincipleReport(excess <= tol, interior_sup, boundary_sup, excess)


@dataclass(frozen=True)
class CaloricDerivativeReport:
    ok: bool
    ratios: dict
    spread: float


def caloric_derivative_check(h_fun: GridFunction, radii, k: int, beta) -> CaloricDerivativeReport:
    """Interior derivative estimate diagnostic for caloric functions.

    For each R computes |d_t^k D^beta h(0,0)| * R^(2k + |beta|) / sup_{Q_R} |h|
    and asserts the ratio between the largest and smallest value over the
    dyadic family is <= 100.  Requires k <= 1 and |beta| <= 2.
    """
    beta = tuple(int(b) for b in np.atleast_1d(beta))
    g = h_fun.grid
    if k > 1 or sum(beta) > 2 or len(beta) != g.d:
        raise ValueError("supported orders: k <= 1, |beta| <= 2")
    resid = _heat_residual(h_fun)
    if resid > 50 * (g.h**2 + g.dt):
        raise ValueError(f"input is not caloric to scheme tolerance (residual {resid:g})")
    val = _mixed_derivative_at_origin(h_fun, k, beta)
    ratios = {}
    for R in radii:
        mask = g.cylinder_mask(_origin_point(g), R)
        if not np.any(mask):
            continue
        sup = float(np.max(np.abs(h_fun.values[mask])))
        if sup == 0:
            continue
        ratios[R] = abs(val) * R ** (2 * k + sum(beta)) / sup
    vals = [v for v in ratios.values() if v > 0]
    spread = (max(vals) / min(vals)) if vals else 1.0
    return CaloricDerivativeReport(spread <= 100.0, ratios, spread)


def _origin_point(grid: SpaceTimeGrid):
    from .geometry import Point

    return Point((0.0,) * grid.d, 0.0)


def _heat_residual(h_fun: GridFunction) -> float:
    g = h_fun.grid
    ut = time_derivative_field(h_fun)
    inner = _interior(g.n_space)
    worst = 0.0
    for k in range(g.n_t - 1):
        H = hessian_field(h_fun.values[k], g.h)
        lap = np.trace(H, axis1=-2, axis2=-1)
        worst = max(worst, float(np.max(np.abs(ut[k][inner] - lap))))
    return worst


def _mixed_derivative_at_origin(h_fun: GridFunction, k: int, beta) -> float:
    g = h_fun.grid
    vals = h_fun.values
    node = h_fun.origin_index()
    if k == 1:
        # second-order backward difference at the final level
        kT = node[0]
        sl = (
            1.5 * vals[kT] - 2.0 * vals[kT - 1] + 0.5 * vals[kT - 2]
        ) / g.dt
    else:
        sl = vals[node[0]]
    idx = node[1:]
    for a, order in enumerate(beta):
        for _ in range(order):
            sl = np.gradient(sl, g.h, axis=a)
    return float(sl[idx])
