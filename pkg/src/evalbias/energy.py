"""Risk-averse losses and the expected-loss energy ``I(x)``.

For a base loss ``l`` and shift ``v0`` the risk-averse loss is
``alpha * l(x, v + v0)`` when ``x >= v + v0`` and ``l(x, v + v0)`` otherwise.
The energy of an estimate ``x`` is its expected loss under the true
density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import special

from . import kernels
from ._io import atomic_write_text
from .density import Density, Grid
from .errors import DomainError, GridMismatchError
from .families import Exponential, FamilyParams, Gaussian, Laplace, Pareto

LossFamily = Literal["squared", "log-ratio", "linear", "abs-deviation", "neg-log-density", "custom-table"]

LOSS_FAMILIES = ("squared", "log-ratio", "linear", "abs-deviation", "neg-log-density", "custom-table")
_CODES = {"squared": 0, "log-ratio": 1, "linear": 2, "abs-deviation": 3, "neg-log-density": 4}


@dataclass(frozen=True, eq=False)
class LossSpec:
    family: LossFamily = "squared"
    alpha: float = 1.0
    shift: float = 0.0
    anchor: float = 0.0
    reference: Density | None = None
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in LOSS_FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be a positive finite number")
        if self.family == "neg-log-density" and self.reference is None:
            raise ValueError("neg-log-density loss needs a reference density")
        if self.family == "custom-table":
            if self.table is None:
                raise ValueError("custom-table loss needs a table")
            if self.shift != 0.0:
                raise ValueError("custom-table losses are defined on the grid product and take no shift")
            t = np.array(self.table, dtype=np.float64)
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    def with_params(self, alpha: float | None = None, shift: float | None = None) -> "LossSpec":
        return LossSpec(
            self.family,
            self.alpha if alpha is None else alpha,
            self.shift if shift is None else shift,
            self.anchor,
            self.reference,
            self.table,
        )


def _log_ref(ref: Density, pts) -> np.ndarray:
    """ln of the reference density, linearly interpolated between grid points."""
    pts = np.asarray(pts, dtype=np.float64)
    g = ref.grid
    if np.any(pts < g.lo - 1e-12 * max(1.0, abs(g.lo))) or np.any(pts > g.hi + 1e-12 * max(1.0, abs(g.hi))):
        raise DomainError("neg-log-density loss evaluated outside the reference grid")
    vals = np.interp(pts, g.points, ref.values)
    if np.any(vals <= 0):
        raise DomainError("neg-log-density loss hit a zero reference density")
    return np.log(vals)


def eval_loss(spec: LossSpec, x: float, v: float) -> float:
    """``l_alpha(x, v)`` including the shift."""
    u = v + spec.shift
    fam = spec.family
    if fam == "squared":
        base = (x - u) ** 2
    elif fam == "log-ratio":
        if x <= 0 or u <= 0:
            raise DomainError(f"log-ratio loss needs positive arguments, got ({x}, {u})")
        base = math.log(x) - math.log(u)
    elif fam == "linear":
        base = x - u
    elif fam == "abs-deviation":
        base = abs(x - spec.anchor) - abs(u - spec.anchor)
    elif fam == "neg-log-density":
        lnf = _log_ref(spec.reference, [u, x])
        base = float(lnf[0] - lnf[1])
    else:
        raise DomainError("custom-table losses are defined on the grid product; use energy_table")
    return spec.alpha * base if x >= u else base


@dataclass(frozen=True, eq=False)
class EnergyTable:
    grid: Grid
    values: np.ndarray
    argmin_index: int

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.grid.points.shape:
            raise GridMismatchError("energy values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("energy is not finite on the whole grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x_star(self) -> float:
        return float(self.grid.points[self.argmin_index])

    @property
    def offset(self) -> np.ndarray:
        return self.values - self.values[self.argmin_index]

    def to_csv(self, path=None) -> str:
        lines = ["x,I"] + [f"{x:.17g},{i:.17g}" for x, i in zip(self.grid.points, self.values)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text


def make_energy(grid: Grid, values) -> EnergyTable:
    values = np.asarray(values, dtype=np.float64)
    return EnergyTable(grid, values, int(np.argmin(values)))


def _separable_terms(spec: LossSpec, x: np.ndarray, u: np.ndarray):
    """Factor the base loss as sum_k A_k(x) * B_k(u)."""
    fam = spec.family
    if fam == "squared":
        c = float(np.mean(u))  # centring keeps x**2 - 2xu + u**2 well conditioned
        xc, uc = x - c, u - c
        return [(xc * xc, np.ones_like(uc)), (-2.0 * xc, uc), (np.ones_like(xc), uc * uc)]
    if fam == "log-ratio":
        if np.any(x <= 0):
            raise DomainError("log-ratio loss needs a positive evaluation grid")
        if np.any(u <= 0):
            raise DomainError("log-ratio loss: shifted support crosses zero")
        return [(np.log(x), np.ones_like(u)), (-np.ones_like(x), np.log(u))]
    if fam == "linear":
        return [(x, np.ones_like(u)), (-np.ones_like(x), u)]
    if fam == "abs-deviation":
        a = spec.anchor
        return [(np.abs(x - a), np.ones_like(u)), (-np.ones_like(x), np.abs(u - a))]
    if fam == "neg-log-density":
        return [(-_log_ref(spec.reference, x), np.ones_like(u)), (np.ones_like(x), _log_ref(spec.reference, u))]
    raise ValueError(f"{fam} is not separable")


def energy_parts(spec: LossSpec, f_D: Density, eval_grid: Grid | None = None):
    """Split the energy as ``I = alpha * below + above``.

    ``below`` collects the pairs with ``x >= v + v0`` (overestimates) and
    ``above`` the rest; both are independent of ``alpha``, which lets a
    grid search reuse them across every alpha value.
    """
    grid = f_D.grid if eval_grid is None else eval_grid
    if spec.family == "custom-table":
        return _table_parts(spec, f_D, grid)
    x = grid.points
    keep = f_D.masses > 0
    u = f_D.points[keep] + spec.shift
    p = f_D.masses[keep]
    k = np.searchsorted(u, x, side="right")  # number of u_j <= x_i
    below = np.zeros(x.size)
    above = np.zeros(x.size)
    for a_x, b_u in _separable_terms(spec, x, u):
        cum = np.concatenate(([0.0], np.cumsum(p * b_u)))
        low = cum[k]
        below += a_x * low
        above += a_x * (cum[-1] - low)
    return below, above


def _table_parts(spec: LossSpec, f_D: Density, grid: Grid):
    table = spec.table
    if table.shape != (grid.size, f_D.grid.size):
        raise GridMismatchError(f"custom table must have shape {(grid.size, f_D.grid.size)}, got {table.shape}")
    over = grid.points[:, None] >= f_D.points[None, :]
    weighted = table * f_D.masses[None, :]
    return np.where(over, weighted, 0.0).sum(axis=1), np.where(over, 0.0, weighted).sum(axis=1)


def energy_table(spec: LossSpec, f_D: Density, eval_grid: Grid | None = None) -> EnergyTable:
    """Energy of every point of ``eval_grid`` (default: the grid of ``f_D``)."""
    grid = f_D.grid if eval_grid is None else eval_grid
    below, above = energy_parts(spec, f_D, grid)
    return make_energy(grid, spec.alpha * below + above)


def energy_table_direct(spec: LossSpec, f_D: Density, eval_grid: Grid | None = None) -> EnergyTable:
    """Same as :func:`energy_table` by the literal double sum (numba kernel)."""
    grid = f_D.grid if eval_grid is None else eval_grid
    if spec.family == "custom-table":
        return energy_table(spec, f_D, grid)
    x = np.ascontiguousarray(grid.points)
    u = np.ascontiguousarray(f_D.points + spec.shift)
    p = np.ascontiguousarray(f_D.masses)
    code = _CODES[spec.family]
    lnf_x = np.zeros(x.size)
    lnf_u = np.zeros(u.size)
    if code == 1:
        pos = p > 0
        if np.any(x <= 0) or np.any(u[pos] <= 0):
            raise DomainError("log-ratio loss needs positive arguments")
        u = np.where(pos, u, 1.0)
    if code == 4:
        lnf_x = _log_ref(spec.reference, x)
        pos = p > 0
        lnf_u = np.zeros(u.size)
        lnf_u[pos] = _log_ref(spec.reference, u[pos])
    values = kernels.energy_direct(code, x, u, p, spec.alpha, spec.anchor, lnf_x, lnf_u)
    return make_energy(grid, values)


# ---------------------------------------------------------------------------
# closed forms for the four families (each with its natural loss)
# ---------------------------------------------------------------------------


def closed_energy(params: FamilyParams, alpha: float, x):
    """Analytic ``I(x)`` for a family paired with its natural loss.

    gaussian/squared, pareto/log-ratio, exponential/linear and
    laplace/abs-deviation anchored at the location ``a``.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    if isinstance(params, Gaussian):
        s2 = params.sigma**2
        w = (x_arr - params.m) / params.sigma
        g = (w * w + 1) * special.ndtr(w) + w * np.exp(-0.5 * w * w) / math.sqrt(2 * math.pi)
        out = (alpha - 1) * s2 * g + s2 * (w * w + 1)
    elif isinstance(params, Pareto):
        if np.any(x_arr < 1):
            raise DomainError("pareto energy is defined for x >= 1")
        b = params.beta
        out = alpha * np.log(x_arr) + (alpha - 1) / (b * x_arr**b) - alpha / b
    elif isinstance(params, Exponential):
        if np.any(x_arr < 0):
            raise DomainError("exponential energy is defined for x >= 0")
        lam = params.lam
        out = (alpha * (lam * x_arr - 1) + (alpha - 1) * np.exp(-lam * x_arr)) / lam
    elif isinstance(params, Laplace):
        b = params.b
        w = (x_arr - params.a) / b
        right = alpha * b * (w - 1) + b * (alpha - 1) / 2 * np.exp(-np.abs(w))
        left = -b * (w + 1) + b * (1 - alpha) / 2 * np.exp(-np.abs(w))
        out = np.where(w >= 0, right, left)
    else:
        raise TypeError(f"no closed-form energy for {type(params).__name__}")
    return float(out) if np.ndim(x) == 0 else out


def natural_loss(params: FamilyParams, alpha: float = 1.0, shift: float = 0.0) -> LossSpec:
    if isinstance(params, Gaussian):
        return LossSpec("squared", alpha, shift)
    if isinstance(params, Pareto):
        return LossSpec("log-ratio", alpha, shift)
    if isinstance(params, Exponential):
        return LossSpec("linear", alpha, shift)
    if isinstance(params, Laplace):
        return LossSpec("abs-deviation", alpha, shift, anchor=params.a)
    raise TypeError(type(params).__name__)
