"""Finite-support densities.

A :class:`Grid` carries support points together with positive reference
weights.  On a discretized continuum the weights are cell widths and
``mass / weight`` is the density value; on a discrete score set the weights
are all one and the same formulas give Shannon quantities.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateDensityError, GridError, GridMismatchError, OutOfRangeError

DomainKind = Literal["continuum", "discrete"]

DEFAULT_COUNT = 2001


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    weights: np.ndarray
    kind: DomainKind = "continuum"

    def __post_init__(self):
        pts = _frozen(self.points)
        wts = _frozen(self.weights)
        if pts.ndim != 1 or pts.shape != wts.shape:
            raise GridError("points and weights must be 1-d arrays of equal length")
        if pts.size < 2:
            raise GridError("a grid needs at least two points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise GridError("grid points must be finite and strictly increasing")
        if not np.all(np.isfinite(wts)) or np.any(wts <= 0):
            raise GridError("grid weights must be positive and finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])

    def max_entropy(self) -> float:
        """Entropy of the uniform density, ln(sum of weights)."""
        return float(np.log(self.weights.sum()))

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            np.array_equal(self.points, other.points) and np.array_equal(self.weights, other.weights)
        )

    def __len__(self):
        return self.size


def make_grid(
    lo: float | None = None,
    hi: float | None = None,
    count: int = DEFAULT_COUNT,
    *,
    points: Sequence[float] | None = None,
) -> Grid:
    """Build a uniform continuum grid on ``[lo, hi]`` or a discrete grid on ``points``.

    Continuum grids get the uniform spacing ``(hi - lo) / (count - 1)`` as
    every weight; discrete sets are deduplicated and use the counting measure.
    """
    if points is not None:
        if lo is not None or hi is not None:
            raise GridError("give either lo/hi/count or points, not both")
        pts = np.unique(np.asarray(points, dtype=np.float64))
        if pts.size < 2:
            raise GridError("a discrete grid needs at least two distinct points")
        return Grid(pts, np.ones_like(pts), "discrete")
    if lo is None or hi is None:
        raise GridError("continuum grid needs lo and hi")
    lo, hi, count = float(lo), float(hi), int(count)
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise GridError(f"need finite lo < hi, got [{lo}, {hi}]")
    if count < 2:
        raise GridError("count must be at least 2")
    pts = np.linspace(lo, hi, count)
    return Grid(pts, np.full(count, (hi - lo) / (count - 1)), "continuum")


def integer_grid(lo: int, hi: int) -> Grid:
    return make_grid(points=np.arange(int(lo), int(hi) + 1))


@dataclass(frozen=True, eq=False)
class Density:
    grid: Grid
    masses: np.ndarray

    def __post_init__(self):
        m = _frozen(self.masses)
        if m.shape != self.grid.points.shape:
            raise GridMismatchError("masses do not match the grid size")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise DegenerateDensityError("masses must be finite and non-negative")
        if abs(m.sum() - 1.0) > 1e-12:
            raise DegenerateDensityError(f"masses sum to {m.sum()!r}, not 1")
        object.__setattr__(self, "masses", m)

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @property
    def values(self) -> np.ndarray:
        """Density values with respect to the reference measure."""
        return self.masses / self.grid.weights

    def __len__(self):
        return self.grid.size


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    variance: float
    entropy: float


def normalize(raw, grid: Grid) -> Density:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != grid.points.shape:
        raise GridMismatchError("mass vector does not match the grid size")
    if not np.all(np.isfinite(raw)):
        raise DegenerateDensityError("masses must be finite")
    if np.any(raw < 0):
        raise DegenerateDensityError("masses must be non-negative")
    total = raw.sum()
    if not total > 0:
        raise DegenerateDensityError("cannot normalize an all-zero mass vector")
    m = raw / total
    # absorb the last rounding error so the sum invariant holds to 1e-12
    return Density(grid, m / m.sum())


def from_log_masses(log_raw, grid: Grid) -> Density:
    """Normalize ``exp(log_raw)`` without overflow."""
    log_raw = np.asarray(log_raw, dtype=np.float64)
    top = np.max(log_raw)
    if not np.isfinite(top):
        raise DegenerateDensityError("log masses have no finite maximum")
    return normalize(np.exp(log_raw - top), grid)


def point_mass(grid: Grid, x: float) -> Density:
    idx = nearest_index(grid, np.array([x]))[0]
    m = np.zeros(grid.size)
    m[idx] = 1.0
    return Density(grid, m)


def uniform(grid: Grid) -> Density:
    return normalize(grid.weights, grid)


def entropy(f: Density) -> float:
    p = f.masses
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz] / f.grid.weights[nz])))


def moments(f: Density) -> MomentSummary:
    x = f.points
    mean = float(f.masses @ x)
    var = float(f.masses @ (x - mean) ** 2)
    return MomentSummary(mean, max(var, 0.0), entropy(f))


def cdf(f: Density) -> np.ndarray:
    # rounding can overshoot 1 before trailing zero-mass atoms
    c = np.minimum(np.cumsum(f.masses), 1.0)
    c[-1] = 1.0
    return c


def midpoint_cdf(f: Density) -> np.ndarray:
    """F_i - p_i / 2: the CDF level at the centre of each atom."""
    return cdf(f) - 0.5 * f.masses


def quantile(f: Density, u):
    """Smallest support point whose cumulative mass is at least ``u``."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr < 0) or np.any(u_arr > 1) or np.any(np.isnan(u_arr)):
        raise ValueError("quantile levels must lie in [0, 1]")
    idx = quantile_index(cdf(f), u_arr)
    out = f.points[idx]
    return float(out) if np.ndim(u) == 0 else out


def quantile_index(cumulative: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cumulative, u, side="left")
    return np.minimum(idx, cumulative.size - 1)


def tv_distance(f: Density, g: Density) -> float:
    if not f.grid.same_as(g.grid):
        raise GridMismatchError("TV distance needs both densities on one grid")
    return float(0.5 * np.abs(f.masses - g.masses).sum())


def nearest_index(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Index of the nearest grid point; exact midpoints go to the lower index."""
    pts = grid.points
    values = np.asarray(values, dtype=np.float64)
    hi = np.clip(np.searchsorted(pts, values, side="left"), 1, pts.size - 1)
    lo = hi - 1
    pick_lo = (values - pts[lo]) <= (pts[hi] - values)
    return np.where(pick_lo, lo, hi)


def empirical_density(samples, grid: Grid) -> Density:
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise DegenerateDensityError("no samples")
    outside = int(np.count_nonzero((s < grid.lo) | (s > grid.hi) | ~np.isfinite(s)))
    if outside:
        raise OutOfRangeError(outside, s.size)
    counts = np.bincount(nearest_index(grid, s), minlength=grid.size).astype(np.float64)
    return normalize(counts, grid)


# ---------------------------------------------------------------------------
# CSV: x,weight,mass with 17 significant digits (bit-exact round trip)
# ---------------------------------------------------------------------------


def density_to_csv(f: Density, path=None) -> str:
    buf = io.StringIO()
    buf.write("x,weight,mass\n")
    for x, w, m in zip(f.points, f.grid.weights, f.masses):
        buf.write(f"{x:.17g},{w:.17g},{m:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        from ._io import atomic_write_text

        atomic_write_text(path, text)
    return text


def density_from_csv(source) -> Density:
    """Read a density written by :func:`density_to_csv` (path or CSV text)."""
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, newline="", encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["x", "weight", "mass"]:
        raise ValueError("density CSV must have header x,weight,mass")
    xs, ws, ms = [], [], []
    for row in reader:
        xs.append(float(row["x"]))
        ws.append(float(row["weight"]))
        ms.append(float(row["mass"]))
    ws_arr = np.array(ws)
    kind: DomainKind = "discrete" if np.all(ws_arr == 1.0) else "continuum"
    return Density(Grid(np.array(xs), ws_arr, kind), np.array(ms))
