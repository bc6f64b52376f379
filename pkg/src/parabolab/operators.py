"""Uniformly elliptic operators F(x, t, M) and structural checks.

Variants: Pucci extremal operators, scaled trace, linear operators with
variable coefficients, finite sup-inf Isaacs families, and the normalized
p-Laplacian with a frozen gradient direction.

Norm convention: ``norm_sym`` below is the operator norm (largest absolute
eigenvalue).  Any equivalent matrix norm changes constants only, not the
fitted exponents downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import compile_field

__all__ = [
    "EllipticityPair",
    "Operator",
    "PucciPlus",
    "PucciMinus",
    "ScaledTrace",
    "LinearCoefficient",
    "Isaacs",
    "NormalizedPLaplace",
    "pucci_plus",
    "pucci_minus",
    "eigenvalues",
    "norm_sym",
    "ellipticity_aperture",
    "plaplace_pair",
    "check_uniform_ellipticity",
    "check_pucci_sandwich",
    "oscillation",
    "cordes_check",
    "compile_matrix_field",
    "random_symmetric",
    "random_psd",
    "random_spd_with_aperture",
]

SYM_TOL = 1e-12
GRAD_FLOOR = 1e-8


def _assert_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    if np.max(np.abs(M - np.swapaxes(M, -1, -2))) > max(SYM_TOL, SYM_TOL * np.max(np.abs(M), initial=1.0)):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def eigenvalues(M: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (batched over leading axes)."""
    M = _assert_symmetric(M)
    if M.shape[-1] == 1:
        return M[..., 0, :]
    return np.linalg.eigvalsh(M)


def norm_sym(M: np.ndarray) -> float:
    """Operator norm: largest absolute eigenvalue."""
    return float(np.max(np.abs(eigenvalues(M)), axis=-1))


@dataclass(frozen=True)
class EllipticityPair:
    lam: float
    Lam: float

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ValueError("need 0 < lambda <= Lambda")

    @property
    def aperture(self) -> float:
        return self.Lam / self.lam - 1.0


def ellipticity_aperture(pair: EllipticityPair) -> float:
    """Lambda / lambda - 1."""
    return pair.aperture


def plaplace_pair(p: float) -> EllipticityPair:
    """Ellipticity constants (min{1, p-1}, max{1, p-1}) of the normalized p-Laplacian."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return EllipticityPair(min(1.0, p - 1.0), max(1.0, p - 1.0))


def _pucci(eigs: np.ndarray, lam: float, Lam: float, plus: bool) -> np.ndarray:
    pos = np.sum(np.where(eigs > 0, eigs, 0.0), axis=-1)
    neg = np.sum(np.where(eigs < 0, eigs, 0.0), axis=-1)
    if plus:
        return lam * neg + Lam * pos
    return lam * pos + Lam * neg


def pucci_plus(M: np.ndarray, lam: float, Lam: float) -> float:
    """M+ = lam * sum(e_i < 0) + Lam * sum(e_i > 0)."""
    EllipticityPair(lam, Lam)
    return float(_pucci(eigenvalues(M), lam, Lam, plus=True))


def pucci_minus(M: np.ndarray, lam: float, Lam: float) -> float:
    """M- = lam * sum(e_i > 0) + Lam * sum(e_i < 0)."""
    EllipticityPair(lam, Lam)
    return float(_pucci(eigenvalues(M), lam, Lam, plus=False))


def compile_matrix_field(spec, d: int):
    """Compile a d x d coefficient field.

    ``spec`` may be a constant matrix or a d x d nest of numbers /
    expression strings; returns ``a(x, t)`` with shape (..., d, d).
    """
    arr = np.asarray(spec, dtype=object)
    if arr.shape != (d, d):
        raise ValueError(f"coefficient field must be {d}x{d}")
    try:
        const = np.asarray(spec, dtype=float)
    except (TypeError, ValueError):
        const = None
    if const is not None:
        const = _assert_symmetric(const)

        def constant(x, t, _a=const):
            shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(t))
            return np.broadcast_to(_a, shape + (d, d)).astype(float)

        return constant

    entries = [[compile_field(arr[i, j], d) for j in range(d)] for i in range(d)]

    def field(x, t):
        rows = [np.stack([entries[i][j](x, t) for j in range(d)], axis=-1) for i in range(d)]
        a = np.stack(rows, axis=-2)
        return _assert_symmetric(a)

    return field


class Operator:
    """Base class: immutable after construction, `evaluate` is pure.

    The reducibility normalization F(0, 0, 0) = 0 is applied automatically
    by subtracting the raw value at the origin.
    """

    pair: EllipticityPair
    linear_in_hessian = False
    tag = "operator"

    def _raw(self, x, t, M):
        raise NotImplementedError

    def _finalize(self):
        d = self.d
        off = float(self._raw(np.zeros(d), 0.0, np.zeros((d, d))))
        object.__setattr__(self, "_offset", off)

    def evaluate(self, x, t, M, grad=None) -> float:
        M = _assert_symmetric(M)
        if grad is not None:
            return float(self._raw(np.asarray(x, float), t, M, grad) - self._offset)
        return float(self._raw(np.asarray(x, float), t, M) - self._offset)

    def evaluate_many(self, X, t, H, grad=None) -> np.ndarray:
        """Vectorized evaluation: X (N, d), H (N, d, d) -> (N,)."""
        return self._raw_many(np.asarray(X, float), t, np.asarray(H, float), grad) - self._offset

    def _raw_many(self, X, t, H, grad=None):
        out = np.empty(len(X))
        tt = np.broadcast_to(t, (len(X),))
        for i in range(len(X)):
            if grad is not None:
                out[i] = self._raw(X[i], tt[i], H[i], grad[i])
            else:
                out[i] = self._raw(X[i], tt[i], H[i])
        return out


@dataclass(frozen=True)
class PucciPlus(Operator):
    pair: EllipticityPair
    d: int = 1
    tag = "pucci_plus"

    def __post_init__(self):
        self._finalize()

    def _raw(self, x, t, M):
        return _pucci(eigenvalues(M), self.pair.lam, self.pair.Lam, plus=True)

    def _raw_many(self, X, t, H, grad=None):
        return _pucci(eigenvalues(H), self.pair.lam, self.pair.Lam, plus=True)


@dataclass(frozen=True)
class PucciMinus(Operator):
    pair: EllipticityPair
    d: int = 1
    tag = "pucci_minus"

    def __post_init__(self):
        self._finalize()

    def _raw(self, x, t, M):
        return _pucci(eigenvalues(M), self.pair.lam, self.pair.Lam, plus=False)

    def _raw_many(self, X, t, H, grad=None):
        return _pucci(eigenvalues(H), self.pair.lam, self.pair.Lam, plus=False)


@dataclass(frozen=True)
class ScaledTrace(Operator):
    """F(M) = c * Tr(M); the lambda-heat operator."""

    c: float
    d: int = 1
    tag = "scaled_trace"
    linear_in_hessian = True

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "pair", EllipticityPair(self.c, self.c))
        self._finalize()

    def _raw(self, x, t, M):
        return self.c * np.trace(np.asarray(M, float))

    def _raw_many(self, X, t, H, grad=None):
        return self.c * np.trace(H, axis1=-2, axis2=-1)


class LinearCoefficient(Operator):
    """F(x, t, M) = Tr(a(x, t) M) with a symmetric (lam, Lam)-elliptic field."""

    tag = "linear"
    linear_in_hessian = True

    def __init__(self, a, d: int, pair: EllipticityPair):
        self.d = d
        self.pair = pair
        self.a = compile_matrix_field(a, d)
        self._finalize()

    def _raw(self, x, t, M):
        return np.trace(self.a(x, t) @ np.asarray(M, float))

    def _raw_many(self, X, t, H, grad=None):
        a = self.a(X, np.broadcast_to(t, (len(X),)))
        return np.einsum("...ij,...ji->...", a, H)


class Isaacs(Operator):
    """sup over beta, inf over gamma of Tr(a_gb(x, t) M) - f_gb(x, t).

    ``a`` and ``f`` are nested lists indexed [beta][gamma]; families are
    finite and enumerated.
    """

    tag = "isaacs"

    def __init__(self, a, f, d: int, pair: EllipticityPair):
        if not a or not all(row for row in a):
            raise ValueError("Isaacs families must be nonempty")
        self.d = d
        self.pair = pair
        self.a = [[compile_matrix_field(ag, d) for ag in row] for row in a]
        if f is None:
            f = [[0.0] * len(row) for row in a]
        self.f = [[compile_field(fg, d) for fg in row] for row in f]
        if [len(r) for r in self.f] != [len(r) for r in self.a]:
            raise ValueError("a and f families must have matching shapes")
        self._finalize()

    def _raw(self, x, t, M):
        M = np.asarray(M, float)
        vals = []
        for arow, frow in zip(self.a, self.f):
            inner = [np.trace(ag(x, t) @ M) - fg(x, t) for ag, fg in zip(arow, frow)]
            vals.append(np.min(inner, axis=0))
        return np.max(vals, axis=0)

    def _raw_many(self, X, t, H, grad=None):
        tt = np.broadcast_to(t, (len(X),))
        vals = []
        for arow, frow in zip(self.a, self.f):
            inner = [
                np.einsum("...ij,...ji->...", ag(X, tt), H) - fg(X, tt)
                for ag, fg in zip(arow, frow)
            ]
            vals.append(np.min(inner, axis=0))
        return np.max(vals, axis=0)


class NormalizedPLaplace(Operator):
    """Tr(M) + (p - 2) <M nu, nu> with nu the unit gradient direction.

    The direction is data: either a fixed field nu(x, t) supplied here, or
    the solver's current discrete gradient passed per evaluation.  Below
    the |Du| floor the operator falls back to the trace (p = 2 value).
    """

    tag = "p_laplace"

    def __init__(self, p: float, d: int, direction=None):
        self.p = float(p)
        self.d = d
        self.pair = plaplace_pair(p)
        self.direction = direction  # callable (x, t) -> (..., d) or None
        self._offset = 0.0

    def _unit(self, nu):
        nu = np.asarray(nu, float)
        nrm = np.linalg.norm(nu, axis=-1, keepdims=True)
        ok = nrm >= GRAD_FLOOR
        safe = np.where(ok, nrm, 1.0)
        return np.where(ok, nu / safe, 0.0), ok[..., 0]

    def _raw(self, x, t, M, grad=None):
        M = np.asarray(M, float)
        if grad is None:
            if self.direction is None:
                raise ValueError("NormalizedPLaplace needs a direction")
            grad = self.direction(x, t)
        nu, ok = self._unit(grad)
        quad = np.einsum("...i,...ij,...j->...", nu, M, nu)
        tr = np.trace(M, axis1=-2, axis2=-1)
        return tr + np.where(ok, (self.p - 2.0) * quad, 0.0)

    def _raw_many(self, X, t, H, grad=None):
        if grad is None and self.direction is not None:
            grad = self.direction(X, np.broadcast_to(t, (len(X),)))
        return self._raw(X, t, H, grad)


@dataclass(frozen=True)
class EllipticityReport:
    ok: bool
    worst_low: float  # most negative slack of F(M+N) - F(M) - lam ||N||
    worst_high: float  # most negative slack of Lam ||N|| - (F(M+N) - F(M))
    n_samples: int


def check_uniform_ellipticity(F: Operator, lam, Lam, samples, tol=1e-9) -> EllipticityReport:
    """Sample check of lam ||N|| <= F(x,t,M+N) - F(x,t,M) <= Lam ||N||.

    ``samples`` is a list of (x, t, M, N) with N PSD nonzero; the norm is
    the operator norm.  Note the upper bound in this single-norm form
    generally forces Lam >= d * lambda_max for trace-like operators in
    d >= 2; the two-sided Pucci sandwich check is `check_pucci_sandwich`.
    """
    worst_low = np.inf
    worst_high = np.inf
    for x, t, M, N in samples:
        N = _assert_symmetric(N)
        ev = eigenvalues(N)
        if np.min(ev) < -1e-10 or np.max(np.abs(ev)) == 0:
            raise ValueError("sample N must be PSD and nonzero")
        nn = float(np.max(np.abs(ev)))
        diff = F.evaluate(x, t, np.asarray(M, float) + N) - F.evaluate(x, t, M)
        worst_low = min(worst_low, diff - lam * nn)
        worst_high = min(worst_high, Lam * nn - diff)
    ok = worst_low >= -tol and worst_high >= -tol
    return EllipticityReport(ok, float(worst_low), float(worst_high), len(samples))


def check_pucci_sandwich(F: Operator, samples, tol=1e-9) -> EllipticityReport:
    """Sample check of M-(M - N) <= F(M) - F(N) <= M+(M - N) at F's own pair.

    ``samples`` is a list of (x, t, M, N) with M, N symmetric (no sign
    restriction); this is the equivalent ellipticity formulation and holds
    with the declared constants for every variant.
    """
    lam, Lam = F.pair.lam, F.pair.Lam
    worst_low = np.inf
    worst_high = np.inf
    for x, t, M, N in samples:
        D = _assert_symmetric(np.asarray(M, float) - np.asarray(N, float))
        kw = {}
        if isinstance(F, NormalizedPLaplace) and F.direction is None:
            kw["grad"] = np.ones(F.d)
        diff = F.evaluate(x, t, M, **kw) - F.evaluate(x, t, N, **kw)
        lo = pucci_minus(D, lam, Lam)
        hi = pucci_plus(D, lam, Lam)
        worst_low = min(worst_low, diff - lo)
        worst_high = min(worst_high, hi - diff)
    ok = worst_low >= -tol and worst_high >= -tol
    return EllipticityReport(ok, float(worst_low), float(worst_high), len(samples))


@dataclass(frozen=True)
class OscillationReport:
    base_point: tuple
    point: tuple
    sup_value: float
    n_samples: int
    r_max: float


def oscillation(F: Operator, x0, t0, x, t, r_max=10.0, n_samples=200, seed=0) -> OscillationReport:
    """Sampled sup over ||M|| <= r_max of |F(x,t,M) - F(x0,t0,M)| / (||M|| + 1).

    The sample set always contains M = 0 and +/- r_max times rank-one
    frames, so the estimate is a monotone lower bound of the true sup.
    """
    d = F.d
    rng = np.random.default_rng(seed)
    mats = [np.zeros((d, d))]
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = 1.0
        mats += [r_max * e, -r_max * e]
    mats += [r_max * np.eye(d), -r_max * np.eye(d)]
    while len(mats) < n_samples:
        A = rng.standard_normal((d, d))
        S = 0.5 * (A + A.T)
        nrm = norm_sym(S)
        if nrm > 0:
            mats.append(S * (r_max * rng.uniform(0, 1) / nrm))
    sup = 0.0
    x0 = np.asarray(x0, float)
    x = np.asarray(x, float)
    for M in mats[:n_samples]:
        nn = norm_sym(M)
        sup = max(sup, abs(F.evaluate(x, t, M) - F.evaluate(x0, t0, M)) / (nn + 1.0))
    return OscillationReport(tuple(x0) + (t0,), tuple(x) + (t,), float(sup), n_samples, r_max)


@dataclass(frozen=True)
class CordesReport:
    ok: bool
    worst_deviation: float
    threshold: float
    n_samples: int


def cordes_check(a_field, lam: float, eps0: float, sample_points, d: int) -> CordesReport:
    """Check that aperture < eps0 forces max_ij |a_ij / lam - delta_ij| < 2 eps0.

    ``sample_points`` is a list of (x, t); each sampled matrix must be
    symmetric with eigenvalues >= lam.  Points whose sampled aperture is
    >= eps0 are skipped (the implication is vacuous there).
    """
    a = a_field if callable(a_field) else compile_matrix_field(a_field, d)
    worst = 0.0
    used = 0
    for x, t in sample_points:
        A = _assert_symmetric(a(np.asarray(x, float), t))
        ev = eigenvalues(A)
        if np.min(ev) < lam - 1e-12:
            raise ValueError("sampled coefficient matrix is not (lam, .)-elliptic")
        if np.max(ev) / lam - 1.0 >= eps0:
            continue
        dev = float(np.max(np.abs(A / lam - np.eye(d))))
        worst = max(worst, dev)
        used += 1
    return CordesReport(worst < 2 * eps0, worst, 2 * eps0, used)


def random_symmetric(rng, d: int, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((d, d)) * scale
    return 0.5 * (A + A.T)


def random_psd(rng, d: int, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((d, d)) * scale
    return A @ A.T + 1e-6 * scale**2 * np.eye(d)


def random_spd_with_aperture(rng, d: int, lam: float, max_aperture: float) -> np.ndarray:
    """Random SPD matrix with eigenvalues in [lam, lam (1 + max_aperture))."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = lam * (1.0 + max_aperture * rng.uniform(0, 1, size=d) * 0.999)
    return Q @ np.diag(eigs) @ Q.T
