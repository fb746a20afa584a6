"""Entropy-constrained expected-loss minimization on a grid.

The optimum is the Gibbs density ``f*(x) = exp(-I(x) / gamma*) / Z*`` whose
entropy equals ``tau``; ``gamma*`` is found by root-finding on the entropy,
which is strictly increasing in the temperature.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._io import atomic_write_text
from .density import Density, Grid, entropy, from_log_masses, point_mass
from .energy import EnergyTable, LossSpec, energy_table
from .errors import BracketError, DegenerateArgminWarning, InfeasibleTauError

ENTROPY_TOL = 1e-12
MAX_ITER = 200
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GibbsSolution:
    density: Density
    gamma_star: float
    log_partition: float
    err: float
    achieved_entropy: float
    phi_star: float
    tau: float
    iterations: int = 0

    def gibbs_residual(self) -> float:
        """|tau - err / gamma* - ln Z*|."""
        return abs(self.tau - self.err / self.gamma_star - self.log_partition)

    def to_dict(self) -> dict:
        return {
            "gamma_star": self.gamma_star,
            "log_partition": self.log_partition,
            "err": self.err,
            "entropy": self.achieved_entropy,
            "tau": self.tau,
            "phi_star": self.phi_star,
            "density": {
                "x": self.density.points.tolist(),
                "weight": self.density.grid.weights.tolist(),
                "mass": self.density.masses.tolist(),
            },
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text


@dataclass(frozen=True, eq=False)
class InstanceSpec:
    f_D: Density
    loss: LossSpec
    tau: float
    eval_grid: Grid | None = None

    @property
    def grid(self) -> Grid:
        return self.f_D.grid if self.eval_grid is None else self.eval_grid


def gibbs_density(energy: EnergyTable, gamma: float) -> Density:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return from_log_masses(energy.grid.log_weights - energy.offset / gamma, energy.grid)


def entropy_range(energy: EnergyTable) -> tuple[float, float]:
    """(H_min, H_max): the entropy limits as gamma -> 0+ and gamma -> inf."""
    h_min, h_max, _ = kernels.entropy_limits(energy.offset, energy.grid.log_weights, TIE_TOL)
    return h_min, h_max


def check_feasible(energy: EnergyTable, tau: float) -> tuple[float, float, int]:
    h_min, h_max, n_min = kernels.entropy_limits(energy.offset, energy.grid.log_weights, TIE_TOL)
    if not (h_min + kernels.FEAS_MARGIN < tau < h_max - kernels.FEAS_MARGIN):
        raise InfeasibleTauError(tau, h_min, h_max)
    return h_min, h_max, n_min


def solve(energy: EnergyTable, tau: float, *, tol: float = ENTROPY_TOL, maxiter: int = MAX_ITER) -> GibbsSolution:
    """Find the Gibbs density of ``energy`` with entropy ``tau``.

    Raises :class:`InfeasibleTauError` unless ``H_min < tau < H_max`` with a
    1e-9 margin, and :class:`BracketError` if no temperature bracket is
    found within 120 doublings of [1e-8, 1e8].
    """
    tau = float(tau)
    _, _, n_min = check_feasible(energy, tau)
    if n_min > 1:
        warnings.warn(
            f"{n_min} grid points share the minimum energy", DegenerateArgminWarning, stacklevel=2
        )
    e = np.ascontiguousarray(energy.offset)
    logw = np.ascontiguousarray(energy.grid.log_weights)
    gamma, _, iters, status = kernels.solve_gamma(e, logw, tau, -1.0, tol, maxiter)
    if status == kernels.BRACKET_NOT_FOUND:
        raise BracketError(f"no temperature bracket found for tau={tau!r}")
    if status == kernels.NOT_CONVERGED:
        warnings.warn(f"entropy root-finding stopped after {iters} iterations", RuntimeWarning, stacklevel=2)
    return _assemble(energy, gamma, tau, iters)


def _assemble(energy: EnergyTable, gamma: float, tau: float, iters: int) -> GibbsSolution:
    logw = energy.grid.log_weights
    z = logw - energy.offset / gamma
    zmax = z.max()
    log_z_offset = zmax + math.log(np.exp(z - zmax).sum())
    density = from_log_masses(z, energy.grid)
    i_min = float(energy.values[energy.argmin_index])
    log_partition = log_z_offset - i_min / gamma
    err = float(density.masses @ energy.values)
    return GibbsSolution(
        density=density,
        gamma_star=float(gamma),
        log_partition=float(log_partition),
        err=err,
        achieved_entropy=entropy(density),
        phi_star=float(gamma * (log_partition - 1.0)),
        tau=tau,
        iterations=iters,
    )


def optimality_residual(energy: EnergyTable, sol: GibbsSolution, floor: float = 1e-300) -> float:
    """max |I(x) + gamma*(1 + ln f*(x)) + phi*| over points with f*(x) > floor."""
    f = sol.density.values
    ok = f > floor
    r = energy.values[ok] + sol.gamma_star * (1 + np.log(f[ok])) + sol.phi_star
    return float(np.max(np.abs(r)))


def solve_instance(inst: InstanceSpec, **kw) -> GibbsSolution:
    return solve(energy_table(inst.loss, inst.f_D, inst.grid), inst.tau, **kw)


def solve_point_utility(v: float, alpha: float, tau: float, grid: Grid, **kw) -> GibbsSolution:
    """Squared-loss solution for a single individual with true utility ``v``."""
    f_D = point_mass(grid, v)
    return solve(energy_table(LossSpec("squared", alpha), f_D, grid), tau, **kw)


def point_utility_mean(v: float, alpha: float, gamma_star: float) -> float:
    """Mean of the single-individual two-piece Gaussian at temperature gamma*."""
    return v - math.sqrt(gamma_star / math.pi) * (math.sqrt(alpha) - 1) / math.sqrt(alpha)
