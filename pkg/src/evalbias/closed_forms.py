"""Analytic alpha = 1 solutions and special constructions used as oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .density import Density, Grid
from .energy import make_energy
from .errors import BracketError, DomainError
from .families import Exponential, FamilyParams, Gaussian, Laplace, Pareto, discretize
from .gibbs import GibbsSolution, solve

BETA_LO = 1.0 + 1e-9
BETA_HI = 1e9


@dataclass(frozen=True)
class AnalyticSolution:
    family: FamilyParams
    tau_used: float

    def density(self, grid: Grid, method: str = "point") -> Density:
        return discretize(self.family, grid, method)


def gaussian_entropy(variance: float) -> float:
    return 0.5 * (1.0 + math.log(2 * math.pi * variance))


def pareto_entropy(beta: float) -> float:
    return 1.0 + 1.0 / beta - math.log(beta)


def pareto_beta_for_tau(tau: float) -> float:
    """Root of the strictly decreasing map beta -> 1 + 1/beta - ln beta on [1+1e-9, 1e9]."""
    lo_val = pareto_entropy(BETA_LO) - tau
    hi_val = pareto_entropy(BETA_HI) - tau
    if not (lo_val > 0 > hi_val):
        raise BracketError(
            f"tau={tau!r} admits no Pareto exponent in [{BETA_LO}, {BETA_HI:g}]; "
            f"need {pareto_entropy(BETA_HI):.6g} < tau < {pareto_entropy(BETA_LO):.6g}"
        )
    return float(optimize.brentq(lambda b: pareto_entropy(b) - tau, BETA_LO, BETA_HI, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def analytic_alpha1(family: FamilyParams, tau: float) -> AnalyticSolution:
    """Output family at alpha = 1 under the family's natural loss.

    Gaussian keeps its mean with variance e^(2 tau - 1) / (2 pi); Pareto
    becomes Pareto(beta_tau); Exponential gets mean e^(tau - 1); Laplace
    keeps its location with scale e^(tau - 1) / 2.  Only the Gaussian and
    Laplace locations depend on the input parameters.
    """
    tau = float(tau)
    if isinstance(family, Gaussian):
        out: FamilyParams = Gaussian(family.m, math.sqrt(math.exp(2 * tau - 1) / (2 * math.pi)))
    elif isinstance(family, Pareto):
        out = Pareto(pareto_beta_for_tau(tau))
    elif isinstance(family, Exponential):
        out = Exponential(math.exp(1.0 - tau))
    elif isinstance(family, Laplace):
        out = Laplace(family.a, math.exp(tau - 1) / 2)
    else:
        raise TypeError(f"no closed-form solution for {type(family).__name__}")
    return AnalyticSolution(out, tau)


def implicit_variance_instance(mu: float, sigma0: float, sigma: float) -> tuple[float, float]:
    """Entropy targets whose Gaussian solutions are N(mu, sigma0^2) and N(mu, sigma0^2 + sigma^2).

    ``mu`` only fixes the location of both solutions.
    """
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return gaussian_entropy(sigma0**2), gaussian_entropy(sigma0**2 + sigma**2)


def pareto_limit_energy(beta: float, points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if np.any(x < 1):
        raise DomainError("the large-alpha Pareto limit is defined on x >= 1")
    return np.log(x) + 1.0 / (beta * x**beta)


def pareto_limit(beta: float, tau: float, grid: Grid) -> GibbsSolution:
    """Large-alpha limit K exp(-C (ln x + 1/(beta x^beta))) with C = 1 / gamma*."""
    if not beta > 1:
        raise ValueError("pareto beta must exceed 1")
    return solve(make_energy(grid, pareto_limit_energy(beta, grid.points)), tau)


def pareto_limit_density(beta: float, tau: float, grid: Grid) -> Density:
    return pareto_limit(beta, tau, grid).density
