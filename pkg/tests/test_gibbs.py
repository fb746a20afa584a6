import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evalbias import kernels
from evalbias.closed_forms import analytic_alpha1, gaussian_entropy, pareto_entropy
from evalbias.density import entropy, make_grid, moments, normalize, tv_distance, uniform
from evalbias.energy import LossSpec, energy_table, make_energy, natural_loss
from evalbias.errors import DegenerateArgminWarning, InfeasibleTauError
from evalbias.families import Exponential, Gaussian, Laplace, Pareto, discretize, family_grid
from evalbias.gibbs import (
    InstanceSpec,
    check_feasible,
    entropy_range,
    gibbs_density,
    optimality_residual,
    point_utility_mean,
    solve,
    solve_instance,
    solve_point_utility,
)
from evalbias.verify import random_instances

GAUSS = Gaussian(0.0, 1.0)


@pytest.fixture(scope="module")
def gauss_energy():
    grid = family_grid(GAUSS)
    return energy_table(LossSpec("squared"), discretize(GAUSS, grid))


def _random_energy(seed, n=60, discrete=False):
    r = np.random.default_rng(seed)
    grid = make_grid(points=np.sort(r.uniform(-5, 5, n))) if discrete else make_grid(-5.0, 5.0, n)
    return make_energy(grid, r.normal(size=n) * 3 + grid.points**2)


# -- gibbs_density -------------------------------------------------------


def test_constant_energy_gives_reference_uniform():
    grid = make_grid(0.0, 1.0, 11)
    d = gibbs_density(make_energy(grid, np.full(11, 7.0)), 0.3)
    assert np.allclose(d.masses, uniform(grid).masses)


def test_parabola_at_gamma_two_is_standard_normal():
    grid = family_grid(GAUSS)
    d = gibbs_density(make_energy(grid, grid.points**2), 2.0)
    assert tv_distance(d, discretize(GAUSS, grid)) <= 1e-3


def test_zero_temperature_concentrates():
    e = _random_energy(3)
    d = gibbs_density(e, 1e-8)
    assert d.masses[e.argmin_index] >= 1 - 1e-6


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_gibbs_density_rejects_gamma(gamma):
    with pytest.raises(ValueError):
        gibbs_density(_random_energy(0), gamma)


def test_huge_energies_do_not_overflow():
    grid = make_grid(0.0, 1.0, 5)
    d = gibbs_density(make_energy(grid, [1e6, 1e6 + 1, 1e6 + 2, 1e6 + 3, 1e6 + 4]), 1e-4)
    assert d.masses[0] == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_entropy_strictly_increasing_in_gamma(seed, discrete):
    e = _random_energy(seed, discrete=discrete)
    # below gap / 20 the runner-up mass drops under one ulp and the entropy is flat in floating point
    gap = np.partition(e.offset, 1)[1]
    ents = [entropy(gibbs_density(e, g)) for g in np.geomspace(gap / 20, 100 * np.ptp(e.values), 20)]
    assert np.all(np.diff(ents) > 0)


# -- solve: examples -------------------------------------------------------


def test_gaussian_solution(gauss_energy):
    tau = gaussian_entropy(1.0)
    sol = solve(gauss_energy, tau)
    assert tv_distance(sol.density, discretize(GAUSS, gauss_energy.grid)) <= 1e-3
    assert moments(sol.density).variance == pytest.approx(math.exp(2 * tau - 1) / (2 * math.pi), abs=1e-3)
    assert sol.gamma_star == pytest.approx(2.0, rel=1e-3)


def test_near_uniform_on_counting_grid():
    grid = make_grid(points=np.arange(10))
    sol = solve(make_energy(grid, np.arange(10) * 1e-3), math.log(10) - 1e-3)
    assert tv_distance(sol.density, uniform(grid)) < 0.05
    assert sol.achieved_entropy == pytest.approx(math.log(10) - 1e-3, abs=1e-10)


def test_pareto_solution():
    tau = pareto_entropy(2.0)
    out = analytic_alpha1(Pareto(3.0), tau)
    grid = family_grid(out.family, spacing=0.005)
    sol = solve(energy_table(LossSpec("log-ratio"), discretize(Pareto(3.0), grid)), tau)
    assert tv_distance(sol.density, out.density(grid)) <= 5e-3


def test_exponential_instance():
    # a grid mean on [0, inf) is biased low by up to half a spacing at the edge cell
    grid = make_grid(0.0, 60.0, 300001)
    sol = solve_instance(InstanceSpec(discretize(Exponential(1.0), grid, "cell"), LossSpec("linear"), 1.0))
    assert moments(sol.density).mean == pytest.approx(1.0, abs=1e-3)


def test_laplace_instance():
    lap = Laplace(0.0, 1.0)
    grid = family_grid(lap)
    sol = solve_instance(InstanceSpec(discretize(lap, grid), LossSpec("abs-deviation"), 1 + math.log(2)))
    assert tv_distance(sol.density, discretize(lap, grid)) <= 1e-3


@pytest.mark.parametrize("fam", [GAUSS, Pareto(3.0), Exponential(2.0), Laplace(1.0, 0.5)], ids=repr)
def test_recovery_loss_returns_f_D(fam):
    f_D = discretize(fam, family_grid(fam))
    sol = solve_instance(InstanceSpec(f_D, LossSpec("neg-log-density", reference=f_D), entropy(f_D)))
    assert tv_distance(sol.density, f_D) <= 1e-3


def test_eval_grid_instance():
    f_D = normalize([1, 2, 1], make_grid(points=[-1.0, 0.0, 1.0]))
    grid = make_grid(-3.0, 3.0, 601)
    inst = InstanceSpec(f_D, LossSpec("squared"), 1.0, grid)
    assert inst.grid is grid
    assert solve_instance(inst).density.grid is grid


# -- solve: errors and warnings -------------------------------------------


def test_tau_at_max_entropy_is_infeasible(gauss_energy):
    h_max = gauss_energy.grid.max_entropy()
    with pytest.raises(InfeasibleTauError):
        solve(gauss_energy, h_max)
    with pytest.raises(InfeasibleTauError):
        solve(gauss_energy, h_max - 1e-10)
    solve(gauss_energy, h_max - 1e-3)


def test_tau_below_min_entropy_is_infeasible():
    grid = make_grid(points=np.arange(5))
    e = make_energy(grid, [3.0, 1.0, 0.0, 1.0, 3.0])
    assert entropy_range(e) == pytest.approx((0.0, math.log(5)))
    with pytest.raises(InfeasibleTauError):
        solve(e, 0.0)
    with pytest.raises(InfeasibleTauError):
        solve(e, -0.5)
    assert solve(e, 1e-6).achieved_entropy == pytest.approx(1e-6, abs=1e-10)


def test_infeasible_error_carries_range():
    grid = make_grid(points=np.arange(4))
    with pytest.raises(InfeasibleTauError) as exc:
        check_feasible(make_energy(grid, [0, 1, 2, 3]), 5.0)
    assert exc.value.h_max == pytest.approx(math.log(4))


def test_degenerate_argmin_warns_but_solves():
    grid = make_grid(points=np.arange(5))
    e = make_energy(grid, [1.0, 0.0, 0.0, 1.0, 2.0])
    assert entropy_range(e)[0] == pytest.approx(math.log(2))
    with pytest.warns(DegenerateArgminWarning):
        sol = solve(e, 1.0)
    assert sol.achieved_entropy == pytest.approx(1.0, abs=1e-10)


# -- invariants ------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.floats(0.02, 0.98), st.booleans())
def test_solution_invariants(seed, frac, discrete):
    e = _random_energy(seed, discrete=discrete)
    h_min, h_max = entropy_range(e)
    tau = max(h_min, h_max - 10) + frac * (h_max - max(h_min, h_max - 10))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateArgminWarning)
        sol = solve(e, tau)
    assert sol.gamma_star > 0
    assert abs(sol.achieved_entropy - tau) <= 1e-10
    assert sol.gibbs_residual() <= 1e-8
    assert optimality_residual(e, sol) <= 1e-6 * max(1.0, float(np.abs(e.values).max()))
    assert sol.phi_star == pytest.approx(sol.gamma_star * (sol.log_partition - 1))


def test_gibbs_identity_on_family_instances():
    for energy, tau, _ in random_instances():
        assert solve(energy, tau).gibbs_residual() <= 1e-8


def test_optimizer_witness(gauss_energy, rng):
    """No density with entropy at least tau beats the solution's expected loss."""
    tau = 1.0
    sol = solve(gauss_energy, tau)
    grid = gauss_energy.grid
    checked = 0
    while checked < 50:
        mix = rng.uniform(0.0, 1.0)
        # perturb towards the uniform density so the entropy constraint holds
        noise = normalize(rng.random(grid.size) + 1e-3, grid)
        g = normalize((1 - mix) * sol.density.masses + mix * noise.masses, grid)
        g = normalize(0.5 * g.masses + 0.5 * uniform(grid).masses, grid) if entropy(g) < tau else g
        if entropy(g) < tau:
            continue
        checked += 1
        assert g.masses @ gauss_energy.values >= sol.err - 1e-12


@pytest.mark.parametrize("fam", [GAUSS, Exponential(1.0)], ids=repr)
def test_err_nondecreasing_in_alpha(fam):
    f_D = discretize(fam, family_grid(fam), "cell")
    errs = [solve(energy_table(natural_loss(fam, a), f_D), 1.0).err for a in (0.1, 0.5, 1, 2, 4, 16)]
    assert np.all(np.diff(errs) >= -1e-12)


def test_concentration_for_small_tau():
    fam = Gaussian(0.5, 1.0)
    grid = make_grid(-5.0, 6.0, 11001)
    e = energy_table(LossSpec("squared", 2.0), discretize(fam, grid))
    for tau in (-3.0, -4.0):
        f = solve(e, tau).density.values
        i_star = e.argmin_index
        x_star = grid.points[i_star]
        for side in (-1, 1):
            j = int(np.argmin(np.abs(grid.points - (x_star + side))))
            assert f[j] / f[i_star] < 0.01


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_variance_lower_bound(alpha):
    grid = make_grid(-30.0, 30.0, 6001)
    e = energy_table(LossSpec("squared", alpha), discretize(GAUSS, grid))
    for tau in np.linspace(0.0, 2.5, 10):
        bound = math.exp(2 * tau - 1) / (2 * math.pi)
        assert moments(solve(e, tau).density).variance >= bound * (1 - 1e-3)


# -- single individual -----------------------------------------------------


def test_point_utility_alpha_one_is_centred():
    grid = make_grid(-10.0, 10.0, 2001)
    for tau in (0.0, 1.0, 2.0):
        assert moments(solve_point_utility(0.0, 1.0, tau, grid).density).mean == pytest.approx(0.0, abs=1e-12)
        assert moments(solve_point_utility(1.0, 1.0, tau, grid).density).mean == pytest.approx(1.0, abs=1e-3)


def test_point_utility_alpha_four():
    grid = make_grid(-10.0, 10.0, 2001)
    sol = solve_point_utility(0.0, 4.0, 1.0, grid)
    mean = moments(sol.density).mean
    assert mean == pytest.approx(-0.5 * math.sqrt(sol.gamma_star / math.pi), abs=1e-3)
    assert mean == pytest.approx(point_utility_mean(0.0, 4.0, sol.gamma_star), abs=1e-3)
    assert mean < 0


# -- serialization ---------------------------------------------------------


def test_solution_json(tmp_path, gauss_energy):
    sol = solve(gauss_energy, 1.2)
    sol.to_json(tmp_path / "s.json")
    data = json.loads((tmp_path / "s.json").read_text())
    assert set(data) >= {"gamma_star", "log_partition", "err", "entropy", "density"}
    assert data["gamma_star"] == sol.gamma_star
    assert np.array_equal(data["density"]["mass"], sol.density.masses)


# -- numba and numpy root finders agree -----------------------------------


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_solver_backends_agree(seed, frac):
    e = _random_energy(seed, n=200)
    h_min, h_max = entropy_range(e)
    lo = max(h_min, h_max - 8)
    tau = lo + frac * (h_max - lo)
    off = np.ascontiguousarray(e.offset)
    logw = np.ascontiguousarray(e.grid.log_weights)
    g_nb, *_, s_nb = kernels.solve_gamma_numba(off, logw, tau, -1.0, 1e-12, 200)
    g_np, *_, s_np = kernels.solve_gamma_numpy(off, logw, tau, -1.0, 1e-12, 200)
    assert s_nb == s_np == kernels.OK
    assert g_nb == pytest.approx(g_np, rel=1e-9)
    for a, b in zip(kernels.gibbs_stats_numba(off, logw, g_nb), kernels.gibbs_stats_numpy(off, logw, g_nb)):
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
