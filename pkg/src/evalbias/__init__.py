"""Entropy-constrained model of biased evaluations."""

from ._accel import backend
from .density import (
    Density,
    Grid,
    MomentSummary,
    cdf,
    density_from_csv,
    density_to_csv,
    empirical_density,
    entropy,
    integer_grid,
    make_grid,
    moments,
    normalize,
    point_mass,
    quantile,
    tv_distance,
    uniform,
)
from .energy import EnergyTable, LossSpec, closed_energy, energy_table, eval_loss, natural_loss
from .errors import (
    BracketError,
    DegenerateArgminWarning,
    DomainError,
    EmptySearchError,
    EvalBiasError,
    InfeasibleTauError,
    UnsatisfiableRuleError,
)
from .families import Exponential, Gaussian, Laplace, Pareto, discretize, family_grid
from .gibbs import GibbsSolution, InstanceSpec, gibbs_density, solve, solve_instance, solve_point_utility

__version__ = "0.1.0"
