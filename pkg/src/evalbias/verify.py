"""Acceptance checks.

Each check returns a :class:`CheckResult`; ``run_checks("fast")`` covers the
closed-form oracles and ``run_checks("full")`` adds fitting, the synthetic
network pipeline and the selection oracles.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .closed_forms import analytic_alpha1, gaussian_entropy, implicit_variance_instance, pareto_entropy, pareto_limit
from .data import NetworkGenConfig, generate_biased_ba, support_grid
from .density import Density, empirical_density, entropy, make_grid, moments, normalize, tv_distance
from .energy import LossSpec, energy_table, natural_loss
from .errors import DegenerateArgminWarning
from .families import Exponential, Gaussian, Laplace, Pareto, discretize, family_grid
from .fitting import SearchSpace, compare_models, fit_optprog, train_test_split
from .gibbs import entropy_range, gibbs_density, solve, solve_point_utility
from .selection import SelectionConfig, constrained_topk, group_floors, run_selection, utility_ratio

# Network-row values reported for comparison only (not gated)
REFERENCE_NETWORK_TV = {"optprog": 0.03, "multiplicative": 0.05, "implicit-variance": 0.22}


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _warm_up():
    g = make_grid(-1, 1, 11)
    solve(energy_table(LossSpec("squared"), normalize(np.ones(11), g)), 0.3)


# ---------------------------------------------------------------------------


def check_gaussian() -> tuple[bool, str]:
    _warm_up()
    t0 = time.perf_counter()
    fam = Gaussian(0.0, 1.0)
    grid = family_grid(fam)
    f_D = discretize(fam, grid)
    tau = gaussian_entropy(1.0)
    sol = solve(energy_table(LossSpec("squared"), f_D), tau)
    elapsed = time.perf_counter() - t0
    tv = tv_distance(sol.density, analytic_alpha1(fam, tau).density(grid))
    var_err = abs(moments(sol.density).variance - math.exp(2 * tau - 1) / (2 * math.pi))
    ok = tv <= 1e-3 and var_err <= 1e-3 and elapsed < 1.0
    return ok, f"tv={tv:.2e} |var-target|={var_err:.2e} solve={elapsed:.3f}s"


def check_pareto() -> tuple[bool, str]:
    parts, ok = [], True
    for beta_tau in (1.5, 2.0, 3.0):
        tau = pareto_entropy(beta_tau)
        out = analytic_alpha1(Pareto(3.0), tau)
        grid = family_grid(out.family, spacing=0.005)  # the heavy tail needs the fine spacing
        f_D = discretize(Pareto(3.0), grid)
        sol = solve(energy_table(LossSpec("log-ratio"), f_D), tau)
        tv = tv_distance(sol.density, out.density(grid))
        ok &= tv <= 5e-3
        parts.append(f"beta={beta_tau:g}: tv={tv:.2e}")
    return ok, "; ".join(parts)


def check_exponential_laplace() -> tuple[bool, str]:
    parts, ok = [], True
    for fam in (Exponential(1.0), Laplace(0.0, 1.0)):
        grid = family_grid(fam)
        f_D = discretize(fam, grid)
        worst = 0.0
        for tau in (0.5, 1.0, 1.5):
            sol = solve(energy_table(natural_loss(fam), f_D), tau)
            worst = max(worst, tv_distance(sol.density, analytic_alpha1(fam, tau).density(grid)))
        ok &= worst <= 1e-3
        parts.append(f"{fam.family}: max tv={worst:.2e}")
    return ok, "; ".join(parts)


def check_recovery() -> tuple[bool, str]:
    parts, ok = [], True
    for fam in (Gaussian(0.0, 1.0), Pareto(3.0)):
        grid = family_grid(fam)
        f_D = discretize(fam, grid)
        sol = solve(energy_table(LossSpec("neg-log-density", reference=f_D), f_D), entropy(f_D))
        tv = tv_distance(sol.density, f_D)
        ok &= tv <= 1e-3
        parts.append(f"{fam.family}: tv={tv:.2e} gamma*={sol.gamma_star:.6f}")
    return ok, "; ".join(parts)


def random_instances(count: int = 20, seed: int = 0):
    """Seeded (energy, tau, alpha) triples over the four families with alpha in [1e-3, 10]."""
    rng = np.random.default_rng(seed)
    fams = [Gaussian(0.0, 1.0), Pareto(3.0), Exponential(1.0), Laplace(0.0, 1.0)]
    out = []
    for i in range(count):
        fam = fams[i % 4]
        alpha = float(10 ** rng.uniform(-3, 1))
        grid = family_grid(fam)
        energy = energy_table(natural_loss(fam, alpha), discretize(fam, grid, "cell"))
        h_min, h_max = entropy_range(energy)
        lo = max(h_min, h_max - 12.0)  # far below this the solution is a point mass to machine precision
        tau = float(lo + (h_max - lo) * rng.uniform(0.02, 0.98))
        out.append((energy, tau, alpha))
    return out


def check_gibbs_identity() -> tuple[bool, str]:
    worst = 0.0
    for energy, tau, _ in random_instances():
        worst = max(worst, solve(energy, tau).gibbs_residual())
    return worst <= 1e-8, f"max |tau - err/gamma* - ln Z*| = {worst:.2e} over 20 instances"


def check_single_individual() -> tuple[bool, str]:
    grid = make_grid(-10, 10, 2001)
    parts, ok = [], True
    for alpha in (1.0, 4.0, 9.0):
        sol = solve_point_utility(0.0, alpha, 1.0, grid)
        predicted = -math.sqrt(sol.gamma_star / math.pi) * (math.sqrt(alpha) - 1) / math.sqrt(alpha)
        err = abs(moments(sol.density).mean - predicted)
        ok &= err <= 1e-3
        parts.append(f"alpha={alpha:g}: |mean-pred|={err:.1e}")
    return ok, "; ".join(parts)


def _monotone_energies(seed: int = 1):
    """Losses that are non-negative on overestimates, the premise of alpha-monotonicity.

    The anchored abs-deviation loss is excluded: |x - a| - |v - a| is negative
    for v < x < a, so raising alpha can lower the energy there.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for fam in (Gaussian(0.0, 1.0), Pareto(3.0), Exponential(1.0)):
        grid = family_grid(fam)
        cases.append((natural_loss(fam), discretize(fam, grid, "cell")))
    laplace = Laplace(0.0, 1.0)
    cases.append((LossSpec("squared"), discretize(laplace, family_grid(laplace), "cell")))
    for _ in range(4):
        grid = make_grid(points=np.sort(rng.uniform(1, 20, 60)))
        f_D = normalize(rng.random(60) ** 3, grid)
        cases.append((LossSpec("squared", shift=float(rng.normal())), f_D))
        cases.append((LossSpec("log-ratio"), f_D))
    return cases


def check_monotonicity() -> tuple[bool, str]:
    alphas = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    gammas = np.logspace(-2, 2, 20)
    bad_energy = bad_err = bad_gamma = 0
    worst_ent = 0.0
    cases = _monotone_energies()
    for loss, f_D in cases:
        tables = [energy_table(loss.with_params(alpha=float(a)), f_D) for a in alphas]
        vals = np.array([t.values for t in tables])
        scale = max(1.0, float(np.abs(vals).max()))
        bad_energy += int(np.any(np.diff(vals, axis=0) < -1e-12 * scale))
        h_max = f_D.grid.max_entropy()
        h_min = max(entropy_range(t)[0] for t in tables)
        tau = 0.5 * (h_min + h_max)
        errs = []
        for t in tables:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateArgminWarning)
                sol = solve(t, tau)
            worst_ent = max(worst_ent, abs(sol.achieved_entropy - tau))
            errs.append(sol.err)
            ent = np.array([entropy(gibbs_density(t, g)) for g in gammas])
            bad_gamma += int(np.any(np.diff(ent) <= 0))
        bad_err += int(np.any(np.diff(errs) < -1e-10 * max(1.0, abs(max(errs, key=abs)))))
    ok = not (bad_energy or bad_err or bad_gamma) and worst_ent <= 1e-10
    return ok, (
        f"{len(cases)} energies x {alphas.size} alphas: energy violations={bad_energy}, err violations={bad_err}, "
        f"max |Ent-tau|={worst_ent:.1e}, non-increasing entropy-in-gamma={bad_gamma}"
    )


def check_lower_bounds() -> tuple[bool, str]:
    taus = np.linspace(0.0, 2.5, 10)
    worst_var = worst_mean = math.inf
    real_grid = make_grid(-30, 30, 6001)
    for loss, f_D in (
        (LossSpec("squared"), discretize(Gaussian(0.0, 1.0), real_grid)),
        (LossSpec("squared", alpha=4.0), discretize(Gaussian(0.0, 1.0), real_grid)),
        (LossSpec("abs-deviation", alpha=3.0), discretize(Laplace(0.0, 1.0), real_grid)),
    ):
        for tau in taus:
            sol = solve(energy_table(loss, f_D), tau)
            bound = math.exp(2 * tau - 1) / (2 * math.pi)
            worst_var = min(worst_var, moments(sol.density).variance / bound)
    # the edge cell at 0 biases a grid mean low by up to h/2; h = 2e-4 keeps that below 1e-3 relative at tau = 0
    half_grid = make_grid(0, 60, 300001)
    for loss, f_D in (
        (LossSpec("linear"), discretize(Exponential(1.0), half_grid, "cell")),
        (LossSpec("linear", alpha=3.0), discretize(Exponential(1.0), half_grid, "cell")),
        (LossSpec("squared", alpha=2.0), discretize(Exponential(0.5), half_grid, "cell")),
    ):
        for tau in taus:
            sol = solve(energy_table(loss, f_D), tau)
            worst_mean = min(worst_mean, moments(sol.density).mean / math.exp(tau - 1))
    ok = worst_var >= 1 - 1e-3 and worst_mean >= 1 - 1e-3
    return ok, f"min Var/bound={worst_var:.5f}; min mean/bound={worst_mean:.5f} over tau in [0, 2.5]"


def check_implicit_variance() -> tuple[bool, str]:
    parts, ok = [], True
    for s0, s in ((1.0, 1.0), (2.0, 1.0)):
        _, tau2 = implicit_variance_instance(0.0, s0, s)
        wide = Gaussian(0.0, math.hypot(s0, s))
        grid = family_grid(wide)
        sol = solve(energy_table(LossSpec("squared"), discretize(Gaussian(0.0, s0), grid)), tau2)
        tv = tv_distance(sol.density, discretize(wide, grid))
        ok &= tv <= 1e-3
        parts.append(f"(s0={s0:g}, s={s:g}): tv={tv:.2e}")
    return ok, "; ".join(parts)


def _within_one_step(values: np.ndarray, found: float, truth: float, log: bool) -> bool:
    f = np.log if log else (lambda v: v)
    step = float(np.max(np.diff(f(values))))
    return abs(f(found) - f(truth)) <= step + 1e-12


def brute_force_minimum(f_D: Density, target: Density, loss_family: str, space: SearchSpace):
    """Independent re-scan through :func:`solve` of every triple; returns (min tv, argmin triple)."""
    best, arg = math.inf, None
    for a in space.alpha_values:
        for s in space.shift_values:
            energy = energy_table(LossSpec(loss_family, float(a), float(s)), f_D, target.grid)
            for t in space.tau_values:
                try:
                    tv = tv_distance(solve(energy, float(t)).density, target)
                except ValueError:
                    continue
                if tv < best - 1e-12:
                    best, arg = tv, (float(a), float(t), float(s))
    return best, arg


def check_fitting() -> tuple[bool, str]:
    grid = family_grid(Gaussian(0.0, 1.0))
    f_D = discretize(Gaussian(0.0, 1.0), grid)
    target = discretize(Gaussian(0.0, math.sqrt(2.0)), grid)
    space = SearchSpace.default(grid).including(1.0, entropy(f_D))
    t0 = time.perf_counter()
    fit = fit_optprog(f_D, target, "squared", space)
    elapsed = time.perf_counter() - t0
    ok_alpha = _within_one_step(space.alpha_values, fit.alpha, 1.0, log=True)
    ok_tau = _within_one_step(space.tau_values, fit.tau, gaussian_entropy(2.0), log=False)
    slices_ok = True
    tested = [(f_D, target, space, fit)]
    # a skewed target, to exercise the slices where alpha = 1 is not optimal
    skew = normalize(np.exp(-np.abs(grid.points + 1.0)) * (1 + 0.5 * np.tanh(grid.points)), grid)
    small = SearchSpace(np.logspace(-1, 1, 9), np.linspace(0.5, 2.5, 9), np.linspace(-2, 2, 9)).including(1.0, entropy(f_D))
    tested.append((f_D, skew, small, fit_optprog(f_D, skew, "squared", small)))
    for fd, tg, sp, full in tested:
        a1 = fit_optprog(fd, tg, "squared", sp.replace(alpha_values=[1.0]))
        te = fit_optprog(fd, tg, "squared", sp.replace(tau_values=[entropy(fd)]))
        slices_ok &= full.tv_train <= a1.tv_train + 1e-12 and full.tv_train <= te.tv_train + 1e-12
    # brute-force re-scan on the reduced space (the full space would take ~1.25M python-level solves)
    bf_tv, bf_arg = brute_force_minimum(f_D, skew, "squared", small)
    small_fit = tested[1][3]
    rescan_ok = abs(bf_tv - small_fit.tv_train) <= 1e-9 and bf_arg == (small_fit.alpha, small_fit.tau, small_fit.shift)
    ok = ok_alpha and ok_tau and slices_ok and rescan_ok and elapsed < 300
    return ok, (
        f"alpha={fit.alpha:.4f} tau={fit.tau:.4f} shift={fit.shift:.3f} tv={fit.tv_train:.4f} "
        f"(alpha step ok={ok_alpha}, tau step ok={ok_tau}); slices ok={slices_ok}; rescan ok={rescan_ok}; "
        f"search {elapsed:.0f}s"
    )


def network_comparison(seed: int, config: NetworkGenConfig | None = None):
    net = generate_biased_ba(dataclasses.replace(config or NetworkGenConfig(), seed=seed))
    g1_train, _ = train_test_split(net.group_degrees(0), 0.8, seed)
    g2_train, g2_test = train_test_split(net.group_degrees(1), 0.8, seed)
    grid = support_grid(net.degrees)
    return compare_models(
        empirical_density(g1_train, grid),
        empirical_density(g2_train, grid),
        "log-ratio",
        test=empirical_density(g2_test, grid),
    )


def check_network(seeds=(0, 1, 2, 3, 4)) -> tuple[bool, str]:
    cols = ("optprog", "multiplicative", "implicit-variance")
    tvs = {c: [] for c in cols}
    for seed in seeds:
        comp = network_comparison(seed)
        for c in cols:
            tvs[c].append(comp.tv(c, "test"))
    med = {c: float(np.median(tvs[c])) for c in cols}
    ok = med["optprog"] <= med["multiplicative"] and med["optprog"] <= med["implicit-variance"]
    near = {c: abs(med[c] - REFERENCE_NETWORK_TV[c]) <= 0.05 for c in cols}
    return ok, (
        "median test TV " + ", ".join(f"{c}={med[c]:.3f}" for c in cols)
        + " | within 0.05 of reference (not gated): " + ", ".join(f"{c}={near[c]}" for c in cols)
    )


def exhaustive_best(estimates: np.ndarray, groups: np.ndarray, k: int, rule: str, quota: int = 0) -> float:
    floors = group_floors(groups, k, rule, quota)
    best = -math.inf
    for subset in itertools.combinations(range(estimates.size), k):
        idx = np.array(subset, dtype=np.int64)
        if np.all(np.bincount(groups[idx], minlength=floors.size) >= floors):
            best = max(best, float(estimates[idx].sum()) if k else 0.0)
    return best


def selection_oracle_mismatches(max_n: int = 12, trials: int = 3, seed: int = 0) -> tuple[int, int]:
    """Compare constrained_topk with exhaustive search on random small instances."""
    rng = np.random.default_rng(seed)
    checked = mismatches = 0
    for n in range(2, max_n + 1):
        for _ in range(trials):
            est = rng.integers(0, 6, n).astype(np.float64)  # small integers force ties
            groups = rng.integers(0, 2, n)
            groups[rng.choice(n, 2, replace=False)] = [0, 1]
            for k in range(n + 1):
                for rule, q in [("none", 0), ("ER", 0), ("PR", 0)] + [("quota", q) for q in range(k + 1)]:
                    try:
                        floors = group_floors(groups, k, rule, q)
                    except ValueError:
                        continue  # unsatisfiable: both sides reject it
                    sel = constrained_topk(est, groups, k, rule, q)
                    checked += 1
                    meets = sel.size == k and np.all(np.bincount(groups[sel], minlength=2) >= floors)
                    if not meets or est[sel].sum() != exhaustive_best(est, groups, k, rule, q):
                        mismatches += 1
    return checked, mismatches


def check_selection() -> tuple[bool, str]:
    checked, mismatches = selection_oracle_mismatches()
    toy = utility_ratio([3.0, 1.0, 2.5], [3.0, 1.0, 0.5], [0, 0, 1], 2, "ER")
    grid = family_grid(Gaussian(0.0, 1.0))
    f_D = discretize(Gaussian(0.0, 1.0), grid)
    out = run_selection(SelectionConfig(1000, 1000, 100, f_D, f_D, f_D, f_D, quota=50, repetitions=100, seed=0))
    unbiased = {t: abs(out.mean_ratio[t] - 1.0) <= 2 * out.sem[t] for t in out.mean_ratio}
    ok = mismatches == 0 and toy == 1.375 and all(unbiased.values())
    failing = [f"{t}={out.mean_ratio[t]:.5f}+/-{out.sem[t]:.1e}" for t, good in unbiased.items() if not good]
    return ok, (
        f"exhaustive: {checked} cases, {mismatches} mismatches; toy ER ratio={toy!r}; "
        f"unbiased within 2 SEM: {'all' if not failing else 'not ' + ', '.join(failing)}"
    )


def check_pareto_limit() -> tuple[bool, str]:
    parts, ok = [], True
    for beta in (1.5, 2.0, 3.0):
        grid = family_grid(Pareto(beta), spacing=0.005)
        f_D = discretize(Pareto(beta), grid)
        tau = entropy(f_D)
        g = pareto_limit(beta, tau, grid).density
        ent_err = abs(entropy(g) - tau)
        m_g, m_in = moments(g).mean, moments(f_D).mean
        ok &= ent_err <= 1e-8 and m_g < m_in and m_g < Pareto(beta).mean()
        parts.append(f"beta={beta:g}: |Ent-tau|={ent_err:.1e} mean {m_g:.3f} < {m_in:.3f}")
    return ok, "; ".join(parts)


CHECKS: list[tuple[int, str, Callable[[], tuple[bool, str]], str]] = [
    (1, "gaussian corollary", check_gaussian, "fast"),
    (2, "pareto corollary", check_pareto, "fast"),
    (3, "exponential and laplace corollaries", check_exponential_laplace, "fast"),
    (4, "recovery of the true density", check_recovery, "fast"),
    (5, "gibbs identity", check_gibbs_identity, "fast"),
    (6, "single-individual mean", check_single_individual, "fast"),
    (7, "monotonicity suite", check_monotonicity, "fast"),
    (8, "variance and mean lower bounds", check_lower_bounds, "fast"),
    (9, "implicit-variance derivation", check_implicit_variance, "fast"),
    (10, "fitting oracle", check_fitting, "full"),
    (11, "synthetic-network pipeline", check_network, "full"),
    (12, "selection oracle", check_selection, "full"),
    (13, "pareto large-alpha limit", check_pareto_limit, "fast"),
]


def run_check(number: int) -> CheckResult:
    for num, name, fn, _ in CHECKS:
        if num == number:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crash is a failed criterion, reported by name
                ok, detail = False, f"raised {type(exc).__name__}: {exc}"
            return CheckResult(num, name, bool(ok), detail, time.perf_counter() - t0)
    raise KeyError(number)


def run_checks(level: str = "fast", report: Callable[[str], None] | None = None) -> list[CheckResult]:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    results = []
    for num, _, _, lvl in CHECKS:
        if level == "full" or lvl == "fast":
            r = run_check(num)
            results.append(r)
            if report is not None:
                report(r.line())
    return results
