"""Space-time geometry: points, parabolic cylinders/cubes, grids, dyadic tree.

Conventions.  A parabolic cylinder Q_r(x0, t0) is B_r(x0) x (t0 - r^2, t0]
(closed ball in space, half-open in time at the bottom).  The parabolic
cube K_r is [-r, r]^d x [-r^2, 0], closed.  Dyadic cubes refine K_1 by
halving every spatial side and quartering the time side, so each cube has
2^(d + 2) children.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Point",
    "ParabolicCylinder",
    "ParabolicCube",
    "SpaceTimeGrid",
    "GridFunction",
    "DyadicCube",
    "Region",
    "parabolic_distance",
    "contains",
    "subdivide",
    "predecessor",
    "stack",
    "measure",
    "node_measure",
]

MAX_DIM = 3


@dataclass(frozen=True)
class Point:
    """Space-time point (x, t) with x of length d <= 3."""

    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if not 1 <= len(x) <= MAX_DIM:
            raise ValueError(f"dimension must be in 1..{MAX_DIM}, got {len(x)}")
        if not all(np.isfinite(x)) or not np.isfinite(self.t):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return len(self.x)


def parabolic_distance(p: Point, q: Point) -> float:
    """|x_p - x_q| + sqrt(|t_p - t_q|)."""
    if p.d != q.d:
        raise ValueError("dimension mismatch")
    dx = np.subtract(p.x, q.x)
    return float(np.linalg.norm(dx) + np.sqrt(abs(p.t - q.t)))


@dataclass(frozen=True)
class ParabolicCylinder:
    """Q_r(x0, t0) = B_r(x0) x (t0 - r^2, t0]."""

    center: Point
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class ParabolicCube:
    """K_r = [-r, r]^d x [-r^2, 0]."""

    r: float
    d: int = 1

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("half-side must be positive")
        if not 1 <= self.d <= MAX_DIM:
            raise ValueError("dimension out of range")


@dataclass(frozen=True)
class Region:
    """Axis-aligned box: product of d spatial intervals and one time interval.

    Interval endpoints are stored closed; membership treats the time
    interval as given by `t_open_bottom`.
    """

    x_bounds: tuple  # ((lo, hi), ...) per axis
    t_bounds: tuple  # (lo, hi)
    t_open_bottom: bool = False

    @property
    def d(self) -> int:
        return len(self.x_bounds)

    def volume(self) -> float:
        v = self.t_bounds[1] - self.t_bounds[0]
        for lo, hi in self.x_bounds:
            v *= hi - lo
        return v


def contains(region, p: Point) -> bool:
    """Set membership for cylinders, cubes, dyadic cubes and box regions."""
    if isinstance(region, ParabolicCylinder):
        c = region.center
        if c.d != p.d:
            raise ValueError("dimension mismatch")
        dx = np.linalg.norm(np.subtract(p.x, c.x))
        return dx <= region.r and c.t - region.r**2 < p.t <= c.t
    if isinstance(region, ParabolicCube):
        if region.d != p.d:
            raise ValueError("dimension mismatch")
        r = region.r
        return all(-r <= xi <= r for xi in p.x) and -(r**2) <= p.t <= 0
    if isinstance(region, DyadicCube):
        region = region.bounds
    if isinstance(region, Region):
        if region.d != p.d:
            raise ValueError("dimension mismatch")
        lo_ok = region.t_bounds[0] < p.t if region.t_open_bottom else region.t_bounds[0] <= p.t
        if not (lo_ok and p.t <= region.t_bounds[1]):
            return False
        return all(lo <= xi <= hi for (lo, hi), xi in zip(region.x_bounds, p.x))
    raise TypeError(f"unsupported region type {type(region).__name__}")


@dataclass(frozen=True)
class DyadicCube:
    """Level-k node of the parabolic dyadic tree over K_1.

    Spatial index i_a in [0, 2^k) per axis, time index j in [0, 4^k).
    The level-0 cube is K_1 itself.
    """

    d: int
    level: int
    xi: tuple = ()
    ti: int = 0

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIM:
            raise ValueError("dimension out of range")
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        xi = tuple(int(i) for i in self.xi) if self.xi else (0,) * self.d
        if len(xi) != self.d:
            raise ValueError("spatial index length mismatch")
        n = 2**self.level
        if any(not 0 <= i < n for i in xi) or not 0 <= self.ti < 4**self.level:
            raise ValueError("index out of range for level")
        object.__setattr__(self, "xi", xi)

    @property
    def bounds(self) -> Region:
        side = 2.0 / 2**self.level
        tlen = 1.0 / 4**self.level
        xb = tuple((-1.0 + i * side, -1.0 + (i + 1) * side) for i in self.xi)
        tb = (-1.0 + self.ti * tlen, -1.0 + (self.ti + 1) * tlen)
        return Region(xb, tb)


def subdivide(K: DyadicCube) -> list[DyadicCube]:
    """The 2^(d + 2) children: spatial sides halved, time side quartered."""
    out = []
    for dt in range(4):
        for flat in range(2**K.d):
            off = [(flat >> a) & 1 for a in range(K.d)]
            xi = tuple(2 * i + o for i, o in zip(K.xi, off))
            out.append(DyadicCube(K.d, K.level + 1, xi, 4 * K.ti + dt))
    return out


def predecessor(K: DyadicCube) -> DyadicCube:
    """The unique cube whose subdivision contains K."""
    if K.level == 0:
        raise ValueError("level-0 cube has no predecessor")
    return DyadicCube(K.d, K.level - 1, tuple(i // 2 for i in K.xi), K.ti // 4)


def stack(K: DyadicCube, m: int) -> Region:
    """Stack m copies of the predecessor of K forward in time.

    If the predecessor is (a, b) x L in time x space, the result is
    (b, b + m(b - a)) x L.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    pred = predecessor(K).bounds
    a, b = pred.t_bounds
    return Region(pred.x_bounds, (b, b + m * (b - a)), t_open_bottom=True)


def measure(S) -> float:
    """(d+1)-Lebesgue measure of a cube/region set union.

    Dyadic cubes are reduced to their deepest-level descendants so that
    overlapping cubes from different levels are not double counted.
    """
    items = list(S) if not isinstance(S, (DyadicCube, ParabolicCube, Region)) else [S]
    if not items:
        return 0.0
    if all(isinstance(c, DyadicCube) for c in items):
        kmax = max(c.level for c in items)
        cells = set()
        for c in items:
            f = 2 ** (kmax - c.level)
            ft = 4 ** (kmax - c.level)
            ranges = [range(i * f, (i + 1) * f) for i in c.xi]
            for j in range(c.ti * ft, (c.ti + 1) * ft):
                idx = [()]
                for r in ranges:
                    idx = [p + (i,) for p in idx for i in r]
                cells.update((p, j) for p in idx)
        cell_vol = (2.0 / 2**kmax) ** items[0].d * (1.0 / 4**kmax)
        return len(cells) * cell_vol
    total = 0.0
    for c in items:
        if isinstance(c, ParabolicCube):
            total += (2 * c.r) ** c.d * c.r**2
        elif isinstance(c, Region):
            total += c.volume()
        else:
            raise TypeError(f"unsupported element {type(c).__name__}")
    return total


def node_measure(count: int, grid: "SpaceTimeGrid") -> float:
    """Measure of a node set by cell counting: count * h^d * dt."""
    return count * grid.h**grid.d * grid.dt


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor-product grid; the last time level is t = 0."""

    d: int
    lo: tuple
    hi: tuple
    h: float
    dt: float
    n_t: int

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIM:
            raise ValueError("dimension out of range")
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != self.d or len(hi) != self.d:
            raise ValueError("extent length mismatch")
        if self.h <= 0 or self.dt <= 0 or self.n_t < 2:
            raise ValueError("invalid steps")
        for a, b in zip(lo, hi):
            n = (b - a) / self.h
            if abs(n - round(n)) > 1e-9 or round(n) < 2:
                raise ValueError("spatial extent must be a multiple of h with >= 2 cells")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n_space(self) -> tuple:
        return tuple(int(round((b - a) / self.h)) + 1 for a, b in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple:
        return (self.n_t,) + self.n_space

    def axis(self, a: int) -> np.ndarray:
        n = self.n_space[a]
        return self.lo[a] + self.h * np.arange(n)

    @property
    def times(self) -> np.ndarray:
        return self.dt * (np.arange(self.n_t) - (self.n_t - 1))

    def coords(self) -> np.ndarray:
        """Spatial coordinates, shape (*n_space, d)."""
        axes = [self.axis(a) for a in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def cell_measure(self) -> float:
        return self.h**self.d * self.dt

    def cylinder_mask(self, center: Point, r: float) -> np.ndarray:
        """Boolean node mask of Q_r(center), shape self.shape."""
        X = self.coords()
        dx = np.linalg.norm(X - np.asarray(center.x), axis=-1)
        sp = dx <= r + 1e-12
        tmask = (self.times > center.t - r**2 - 1e-12) & (self.times <= center.t + 1e-12)
        return tmask[(slice(None),) + (None,) * self.d] & sp[None]

    def cube_mask(self, r: float) -> np.ndarray:
        """Boolean node mask of K_r, shape self.shape."""
        X = self.coords()
        sp = np.all(np.abs(X) <= r + 1e-12, axis=-1)
        tmask = (self.times >= -(r**2) - 1e-12) & (self.times <= 1e-12)
        return tmask[(slice(None),) + (None,) * self.d] & sp[None]

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal cell weights, shape self.shape; sums to the box volume."""
        ws = []
        for n in (self.n_t,) + self.n_space:
            w = np.ones(n)
            w[0] = w[-1] = 0.5
            ws.append(w)
        out = ws[0][(slice(None),) + (None,) * self.d].copy()
        for a, w in enumerate(ws[1:]):
            shape = [1] * (self.d + 1)
            shape[a + 1] = -1
            out = out * w.reshape(shape)
        return out * self.cell_measure


@dataclass
class GridFunction:
    """Real field with one value per grid node; shape (n_t, *n_space)."""

    grid: SpaceTimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        self.values = v

    @classmethod
    def from_callable(cls, grid: SpaceTimeGrid, func) -> "GridFunction":
        X = grid.coords()
        vals = np.stack([func(X, t) for t in grid.times])
        return cls(grid, vals)

    def origin_index(self) -> tuple:
        """Index of the node nearest (0, 0); last time level is t = 0."""
        idx = tuple(int(round(-a / self.grid.h)) for a in self.grid.lo)
        return (self.grid.n_t - 1,) + idx

    def subsample(self, space_stride: int, time_stride: int) -> "GridFunction":
        """Coarsen keeping the last time level; strides must divide the node counts."""
        for n in self.grid.n_space:
            if (n - 1) % space_stride:
                raise ValueError("space stride must divide the cell count")
        nt = self.grid.n_t
        keep_t = np.arange(nt - 1, -1, -time_stride)[::-1]
        sl = (keep_t,) + tuple(slice(None, None, space_stride) for _ in range(self.grid.d))
        g = SpaceTimeGrid(
            self.grid.d,
            self.grid.lo,
            self.grid.hi,
            self.grid.h * space_stride,
            self.grid.dt * time_stride,
            len(keep_t),
        )
        return GridFunction(g, self.values[sl])
