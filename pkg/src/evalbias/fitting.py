"""Grid-search fitting by total-variation distance, plus two baseline bias models.

All densities in a fit share one grid.  Model outputs, the target and the
baselines' re-binned transforms are compared point by point.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import special

from . import kernels
from ._io import atomic_write_text
from .density import Density, Grid, entropy, normalize, tv_distance
from .energy import LossSpec, energy_parts, energy_table
from .errors import DomainError, EmptySearchError, GridMismatchError
from .gibbs import TIE_TOL, solve

TV_TIE = 1e-12
REFINE_FACTOR = 5
KERNEL_HALF_WIDTH = 8.0  # implicit-variance noise kernel is truncated at +/- 8 sigma

BaselineModel = Literal["multiplicative", "implicit-variance"]


def default_shifts(grid: Grid, stride: int = 4) -> np.ndarray:
    """Every ``stride``-th grid point, with 0 always included."""
    return np.unique(np.concatenate((grid.points[::stride], [0.0])))


@dataclass(frozen=True, eq=False)
class SearchSpace:
    alpha_values: np.ndarray
    tau_values: np.ndarray
    shift_values: np.ndarray

    def __post_init__(self):
        for name in ("alpha_values", "tau_values", "shift_values"):
            v = np.unique(np.asarray(getattr(self, name), dtype=np.float64))
            if v.size == 0 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a nonempty list of finite numbers")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.alpha_values <= 0):
            raise ValueError("alpha values must be positive")

    @classmethod
    def default(cls, grid: Grid, *, n_alpha: int = 50, n_tau: int = 50, shift_stride: int = 4) -> "SearchSpace":
        return cls(np.logspace(-4, 2, n_alpha), np.linspace(0.1, 10, n_tau), default_shifts(grid, shift_stride))

    def replace(self, *, alpha_values=None, tau_values=None, shift_values=None) -> "SearchSpace":
        return SearchSpace(
            self.alpha_values if alpha_values is None else alpha_values,
            self.tau_values if tau_values is None else tau_values,
            self.shift_values if shift_values is None else shift_values,
        )

    def including(self, alpha: float, tau: float) -> "SearchSpace":
        """Same space with ``alpha`` and ``tau`` added, so the slices through them are restrictions of it."""
        return self.replace(
            alpha_values=np.append(self.alpha_values, alpha),
            tau_values=np.append(self.tau_values, tau),
        )

    @property
    def size(self) -> int:
        return self.alpha_values.size * self.tau_values.size * self.shift_values.size


@dataclass(frozen=True, eq=False)
class FitResult:
    alpha: float
    tau: float
    shift: float
    tv_train: float
    tv_test: float | None
    fitted: Density
    gamma_star: float
    loss_family: str
    report: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "model": "optprog",
            "loss": self.loss_family,
            "alpha": self.alpha,
            "tau": self.tau,
            "shift": self.shift,
            "gamma_star": self.gamma_star,
            "tv_train": self.tv_train,
            "tv_test": self.tv_test,
        }

    def report_csv(self, path=None) -> str:
        """Every evaluated (alpha, tau, shift) with its training TV."""
        if self.report is None:
            raise ValueError("fit was run without keep_report=True")
        return _write_rows(["alpha", "tau", "shift", "tv"], self.report, path)


@dataclass(frozen=True, eq=False)
class BaselineFit:
    model: BaselineModel
    scale: float  # rho for multiplicative, sigma for implicit-variance
    shift: float
    tv_train: float
    tv_test: float | None
    fitted: Density

    def __post_init__(self):
        if self.model == "multiplicative" and not self.scale > 0:
            raise ValueError("rho must be positive")
        if self.model == "implicit-variance" and self.scale < 0:
            raise ValueError("sigma must be non-negative")

    def to_dict(self) -> dict:
        name = "rho" if self.model == "multiplicative" else "sigma"
        return {"model": self.model, name: self.scale, "shift": self.shift, "tv_train": self.tv_train, "tv_test": self.tv_test}


def _write_rows(header: Sequence[str], rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in r])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text


def _check_shared(f_D: Density, target: Density, test: Density | None):
    if not f_D.grid.same_as(target.grid):
        raise GridMismatchError("f_D and the target must share one grid")
    if test is not None and not test.grid.same_as(target.grid):
        raise GridMismatchError("the test density must share the target grid")


# ---------------------------------------------------------------------------
# optimization-model fit
# ---------------------------------------------------------------------------


def _template(loss_family: str, f_D: Density, loss: LossSpec | None) -> LossSpec:
    if loss is not None:
        return loss
    if loss_family == "neg-log-density":
        return LossSpec("neg-log-density", reference=f_D)
    return LossSpec(loss_family)


def scan_space(template: LossSpec, f_D: Density, target: Density, space: SearchSpace):
    """TV and gamma* for every triple, shaped (alpha, tau, shift); NaN where skipped.

    Skipped triples are infeasible tau values and shifts that push the loss
    out of its domain.
    """
    grid = target.grid
    logw = grid.log_weights
    h_max = grid.max_entropy()
    alphas, taus, shifts = space.alpha_values, space.tau_values, space.shift_values
    tv = np.full((alphas.size, taus.size, shifts.size), np.nan)
    gam = np.full_like(tv, np.nan)
    for k, shift in enumerate(shifts):
        if template.family == "custom-table" and shift != 0.0:
            continue
        try:
            below, above = energy_parts(template.with_params(shift=float(shift)), f_D, grid)
        except DomainError:
            continue
        e = alphas[:, None] * below[None, :] + above[None, :]
        if not np.all(np.isfinite(e)):
            continue
        e -= e.min(axis=1, keepdims=True)
        h_min = np.array([kernels.entropy_limits(row, logw, TIE_TOL)[0] for row in e])
        tv[:, :, k], gam[:, :, k] = kernels.scan_tv(e, logw, taus, target.masses, h_min, h_max)
    return tv, gam


def _lexicographic_best(tv: np.ndarray) -> tuple[int, ...]:
    if not np.any(np.isfinite(tv)):
        raise EmptySearchError("no feasible parameter combination in the search space")
    best = np.nanmin(tv)
    # argwhere walks the array in C order, which is the lexicographic order of the axes
    return tuple(int(i) for i in np.argwhere(tv <= best + TV_TIE)[0])


def _report_rows(space: SearchSpace, tv: np.ndarray) -> np.ndarray:
    ia, it, js = np.nonzero(np.isfinite(tv))
    return np.column_stack((space.alpha_values[ia], space.tau_values[it], space.shift_values[js], tv[ia, it, js]))


def _neighbour_box(values: np.ndarray, i: int, log: bool) -> np.ndarray:
    if values.size == 1:
        return values.copy()
    lo, hi = values[max(i - 1, 0)], values[min(i + 1, values.size - 1)]
    steps = (min(i + 1, values.size - 1) - max(i - 1, 0)) * REFINE_FACTOR + 1
    box = np.geomspace(lo, hi, steps) if log else np.linspace(lo, hi, steps)
    return np.unique(np.concatenate((box, [values[i]])))


def refine_space(space: SearchSpace, index: tuple[int, int, int]) -> SearchSpace:
    """Local box spanning the neighbours of ``index`` at 5x the coarse resolution."""
    ia, it, js = index
    return SearchSpace(
        _neighbour_box(space.alpha_values, ia, log=True),
        _neighbour_box(space.tau_values, it, log=False),
        _neighbour_box(space.shift_values, js, log=False),
    )


def fit_optprog(
    f_D: Density,
    target: Density,
    loss_family: str = "squared",
    space: SearchSpace | None = None,
    *,
    loss: LossSpec | None = None,
    test: Density | None = None,
    refine: bool = False,
    keep_report: bool = False,
) -> FitResult:
    """Exhaustive TV minimization over (alpha, tau, shift).

    Ties within 1e-12 go to the smallest alpha, then tau, then shift.  With
    ``refine`` a 5x finer box around the coarse minimizer is searched too
    and the better of the two results is kept (the box contains the coarse
    point, so refinement never loses).
    """
    _check_shared(f_D, target, test)
    template = _template(loss_family, f_D, loss)
    if space is None:
        space = SearchSpace.default(target.grid)
    tv, _ = scan_space(template, f_D, target, space)
    idx = _lexicographic_best(tv)
    report = _report_rows(space, tv) if keep_report else None
    best_space, best_idx, best_tv = space, idx, tv[idx]
    if refine:
        fine = refine_space(space, idx)
        tv_fine, _ = scan_space(template, f_D, target, fine)
        fidx = _lexicographic_best(tv_fine)
        if tv_fine[fidx] < best_tv - TV_TIE:
            best_space, best_idx, best_tv = fine, fidx, tv_fine[fidx]
        if keep_report:
            report = np.vstack((report, _report_rows(fine, tv_fine)))
    ia, it, js = best_idx
    alpha = float(best_space.alpha_values[ia])
    tau = float(best_space.tau_values[it])
    shift = float(best_space.shift_values[js])
    sol = solve(energy_table(template.with_params(alpha=alpha, shift=shift), f_D, target.grid), tau)
    return FitResult(
        alpha=alpha,
        tau=tau,
        shift=shift,
        tv_train=tv_distance(sol.density, target),
        tv_test=None if test is None else tv_distance(sol.density, test),
        fitted=sol.density,
        gamma_star=sol.gamma_star,
        loss_family=template.family,
        report=report,
    )


# ---------------------------------------------------------------------------
# baseline transforms
# ---------------------------------------------------------------------------


def cell_edges(grid: Grid) -> np.ndarray:
    """Nearest-point cell boundaries; the outer cells extend half a spacing."""
    x = grid.points
    edges = np.empty(x.size + 1)
    edges[1:-1] = 0.5 * (x[1:] + x[:-1])
    edges[0] = x[0] - 0.5 * (x[1] - x[0])
    edges[-1] = x[-1] + 0.5 * (x[-1] - x[-2])
    return edges


def _rebin(values: np.ndarray, masses: np.ndarray, grid: Grid) -> np.ndarray:
    """Nearest-point binning of weighted values; mass outside the outer cells is dropped."""
    edges = cell_edges(grid)
    inside = (values >= edges[0]) & (values <= edges[-1]) & (masses > 0)
    if not np.any(inside):
        raise DomainError("all mass maps outside the target grid")
    # side='left' sends an exact midpoint to the lower cell, matching nearest_index
    idx = np.clip(np.searchsorted(edges, values[inside], side="left") - 1, 0, grid.size - 1)
    return np.bincount(idx, weights=masses[inside], minlength=grid.size)


def transform_multiplicative(f_D: Density, rho: float, shift: float, target_grid: Grid) -> Density:
    """Law of ``rho * v + shift`` re-binned to ``target_grid``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return normalize(_rebin(rho * f_D.points + shift, f_D.masses, target_grid), target_grid)


def _smoothed_cdf(f_D: Density, sigma: float, y: np.ndarray, chunk: int = 512) -> np.ndarray:
    """G(y) = sum_j p_j Phi((y - v_j) / sigma) with the kernel cut at +/- 8 sigma."""
    keep = f_D.masses > 0
    v, p = f_D.points[keep], f_D.masses[keep]
    out = np.empty(y.size)
    for start in range(0, y.size, chunk):
        z = (y[start : start + chunk, None] - v[None, :]) / sigma
        phi = np.where(z > KERNEL_HALF_WIDTH, 1.0, np.where(z < -KERNEL_HALF_WIDTH, 0.0, special.ndtr(z)))
        out[start : start + chunk] = phi @ p
    return out


def _implicit_masses(f_D: Density, sigma: float, shifts: np.ndarray, grid: Grid) -> np.ndarray:
    """Raw re-binned masses for every shift, shape (shift, point)."""
    edges = cell_edges(grid)
    y = edges[None, :] - shifts[:, None]
    # shifts on the grid lattice reuse the same edge offsets; evaluate G once per distinct offset
    quantum = max(1e-9 * float(np.min(np.diff(grid.points))), 1e-13 * float(np.max(np.abs(y))))
    _, first, inverse = np.unique(np.round(y.ravel() / quantum), return_index=True, return_inverse=True)
    g = _smoothed_cdf(f_D, sigma, y.ravel()[first])[inverse].reshape(y.shape)
    return np.maximum(np.diff(g, axis=1), 0.0)


def transform_implicit(f_D: Density, sigma: float, shift: float, target_grid: Grid) -> Density:
    """Law of ``v + shift + sigma * Z`` with standard normal Z, re-binned to ``target_grid``.

    Each cell receives the exact Gaussian probability of its nearest-point
    interval.  ``sigma = 0`` is a pure shift.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return transform_multiplicative(f_D, 1.0, shift, target_grid)
    raw = _implicit_masses(f_D, float(sigma), np.array([float(shift)]), target_grid)[0]
    if not raw.sum() > 0:
        raise DomainError("all mass maps outside the target grid")
    return normalize(raw, target_grid)


@dataclass(frozen=True, eq=False)
class BaselineSpace:
    scale_values: np.ndarray
    shift_values: np.ndarray

    def __post_init__(self):
        for name in ("scale_values", "shift_values"):
            v = np.unique(np.asarray(getattr(self, name), dtype=np.float64))
            if v.size == 0 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a nonempty list of finite numbers")
            object.__setattr__(self, name, v)

    @classmethod
    def default(cls, model: BaselineModel, grid: Grid, shift_stride: int = 4) -> "BaselineSpace":
        if model == "multiplicative":
            scales = np.linspace(0.02, 1.0, 50)
        elif model == "implicit-variance":
            scales = np.logspace(-2, 1, 50)
        else:
            raise ValueError(f"unknown baseline model {model!r}")
        return cls(scales, default_shifts(grid, shift_stride))


def _tv_rows(raw: np.ndarray, target: np.ndarray) -> np.ndarray:
    total = raw.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        tv = 0.5 * np.abs(raw / total[:, None] - target[None, :]).sum(axis=1)
    tv[~(total > 0)] = np.nan
    return tv


def scan_baseline(model: BaselineModel, f_D: Density, target: Density, space: BaselineSpace) -> np.ndarray:
    """TV for every (scale, shift); NaN where all mass leaves the grid."""
    grid = target.grid
    tv = np.full((space.scale_values.size, space.shift_values.size), np.nan)
    for i, scale in enumerate(space.scale_values):
        if model == "multiplicative":
            if not scale > 0:
                continue
            raw = np.zeros((space.shift_values.size, grid.size))
            for k, shift in enumerate(space.shift_values):
                try:
                    raw[k] = _rebin(scale * f_D.points + shift, f_D.masses, grid)
                except DomainError:
                    pass
        elif model == "implicit-variance":
            if scale < 0:
                continue
            if scale == 0:
                raw = np.zeros((space.shift_values.size, grid.size))
                for k, shift in enumerate(space.shift_values):
                    try:
                        raw[k] = _rebin(f_D.points + shift, f_D.masses, grid)
                    except DomainError:
                        pass
            else:
                raw = _implicit_masses(f_D, float(scale), space.shift_values, grid)
        else:
            raise ValueError(f"unknown baseline model {model!r}")
        tv[i] = _tv_rows(raw, target.masses)
    return tv


def fit_baseline(
    model: BaselineModel,
    f_D: Density,
    target: Density,
    search: BaselineSpace | None = None,
    *,
    test: Density | None = None,
) -> BaselineFit:
    """Grid search over (scale, shift) with the same lexicographic tie rule as :func:`fit_optprog`."""
    _check_shared(f_D, target, test)
    if search is None:
        search = BaselineSpace.default(model, target.grid)
    tv = scan_baseline(model, f_D, target, search)
    i, k = _lexicographic_best(tv)
    scale, shift = float(search.scale_values[i]), float(search.shift_values[k])
    if model == "multiplicative":
        fitted = transform_multiplicative(f_D, scale, shift, target.grid)
    else:
        fitted = transform_implicit(f_D, scale, shift, target.grid)
    return BaselineFit(
        model=model,
        scale=scale,
        shift=shift,
        tv_train=tv_distance(fitted, target),
        tv_test=None if test is None else tv_distance(fitted, test),
        fitted=fitted,
    )


# ---------------------------------------------------------------------------
# evaluation protocol
# ---------------------------------------------------------------------------


def train_test_split(samples, fraction: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; the first ceil(fraction * n) samples train.  Both parts stay nonempty."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError("need at least two samples to split")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n_train = min(max(math.ceil(fraction * s.size - 1e-9), 1), s.size - 1)
    perm = np.random.default_rng(seed).permutation(s.size)
    return s[perm[:n_train]], s[perm[n_train:]]


MODEL_COLUMNS = ("optprog", "alpha=1", "tau=ent", "multiplicative", "implicit-variance")


@dataclass(frozen=True, eq=False)
class ModelComparison:
    fits: dict
    entropy_f_D: float

    def tv(self, column: str, split: str = "test") -> float:
        r = self.fits[column]
        v = r.tv_test if split == "test" else r.tv_train
        return r.tv_train if v is None else v

    def to_dict(self) -> dict:
        return {"entropy_f_D": self.entropy_f_D, "models": {k: v.to_dict() for k, v in self.fits.items()}}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text

    def table_csv(self, path=None) -> str:
        rows = [(c, self.tv(c, "train"), self.tv(c, "test")) for c in MODEL_COLUMNS if c in self.fits]
        return _write_rows(["model", "tv_train", "tv_test"], rows, path)


def compare_models(
    f_D: Density,
    target: Density,
    loss_family: str = "squared",
    space: SearchSpace | None = None,
    *,
    test: Density | None = None,
    baseline_spaces: dict | None = None,
    refine: bool = False,
    keep_report: bool = False,
) -> ModelComparison:
    """Full search, the alpha = 1 and tau = Ent(f_D) slices, and both baselines.

    The full search runs over ``space`` with alpha = 1 and tau = Ent(f_D)
    added, so its TV never exceeds either slice.
    """
    ent = entropy(f_D)
    space = (SearchSpace.default(target.grid) if space is None else space).including(1.0, ent)
    baseline_spaces = baseline_spaces or {}
    fits = {
        "optprog": fit_optprog(f_D, target, loss_family, space, test=test, refine=refine, keep_report=keep_report),
        "alpha=1": fit_optprog(f_D, target, loss_family, space.replace(alpha_values=[1.0]), test=test),
        "tau=ent": fit_optprog(f_D, target, loss_family, space.replace(tau_values=[ent]), test=test),
    }
    for model in ("multiplicative", "implicit-variance"):
        fits[model] = fit_baseline(model, f_D, target, baseline_spaces.get(model), test=test)
    return ModelComparison(fits, ent)
