import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evalbias.density import cdf, empirical_density, entropy, make_grid, tv_distance
from evalbias.energy import LossSpec, energy_table
from evalbias.errors import DomainError, UnsatisfiableRuleError
from evalbias.families import Gaussian, Pareto, discretize
from evalbias.gibbs import solve
from evalbias.selection import (
    INTERVENTIONS,
    SelectionConfig,
    constrained_topk,
    coupled_sample,
    group_floors,
    intervention_densities,
    repetition_rngs,
    run_selection,
    selection_curves_csv,
    sweep_k,
    utility_ratio,
)
from evalbias.verify import exhaustive_best, selection_oracle_mismatches

GRID = make_grid(1.0, 30.0, 581)
F_D = discretize(Pareto(2.5), GRID)


# -- coupling ----------------------------------------------------------------


@given(st.floats(0, 1))
def test_identical_densities_couple_to_equal_draws(u):
    v, x = coupled_sample(F_D, F_D, u)
    assert v == x


def test_dominated_density_draws_lower():
    lower = discretize(Pareto(4.0), GRID)
    assert np.all(cdf(lower) >= cdf(F_D) - 1e-15)
    u = np.linspace(0, 1, 1001)
    v, x = coupled_sample(F_D, lower, u)
    assert np.all(x <= v)


def test_zero_level_gives_support_minima():
    assert coupled_sample(F_D, discretize(Pareto(4.0), GRID), 0.0) == (1.0, 1.0)


def test_coupling_rejects_levels():
    with pytest.raises(ValueError):
        coupled_sample(F_D, F_D, 1.5)


def test_coupling_marginal(rng):
    f_e = discretize(Pareto(4.0), GRID)
    _, x = coupled_sample(F_D, f_e, rng.random(100_000))
    assert tv_distance(empirical_density(x, GRID), f_e) <= 0.02


# -- constrained top-k ---------------------------------------------------------


def test_toy_er_example():
    sel = constrained_topk([3.0, 1.0, 0.5], [0, 0, 1], 2, "ER")
    assert sel.tolist() == [0, 2]
    assert utility_ratio([3.0, 1.0, 2.5], [3.0, 1.0, 0.5], [0, 0, 1], 2, "ER") == 1.375


def test_toy_matches_brute_force():
    est, grp = np.array([3.0, 1.0, 0.5]), np.array([0, 0, 1])
    assert exhaustive_best(est, grp, 2, "ER") == 3.5


@pytest.mark.parametrize("rule,q", [("none", 0), ("ER", 0), ("PR", 0), ("quota", 2)])
def test_select_everyone(rule, q):
    groups = np.array([0, 1, 0, 1, 1])
    assert constrained_topk(np.arange(5.0), groups, 5, rule, q).tolist() == list(range(5))


@given(st.lists(st.integers(0, 5), min_size=2, max_size=15), st.data())
def test_quota_zero_is_none(est, data):
    est = np.array(est, dtype=float)
    groups = np.array(data.draw(st.lists(st.integers(0, 1), min_size=est.size, max_size=est.size)))
    k = data.draw(st.integers(0, est.size))
    assert np.array_equal(constrained_topk(est, groups, k, "quota", 0), constrained_topk(est, groups, k))


def test_ties_go_to_lower_index():
    assert constrained_topk([1.0, 1.0, 1.0, 1.0], [0, 0, 1, 1], 2).tolist() == [0, 1]
    assert constrained_topk([1.0, 1.0, 1.0, 1.0], [0, 0, 1, 1], 2, "ER").tolist() == [0, 2]


def test_oracle_equivalence_up_to_twelve():
    checked, mismatches = selection_oracle_mismatches(max_n=12, trials=2, seed=7)
    assert checked > 1000
    assert mismatches == 0


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.data())
def test_floors_are_met_exactly(est, data):
    n = len(est)
    groups = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    k = data.draw(st.integers(0, n))
    for rule in ("ER", "PR"):
        try:
            floors = group_floors(groups, k, rule)
        except UnsatisfiableRuleError:
            continue
        sel = constrained_topk(est, groups, k, rule)
        counts = np.bincount(groups[sel], minlength=2)
        assert sel.size == k and np.all(counts >= floors)
        if rule == "ER" and k % 2 == 0:
            assert counts[0] == counts[1]


def test_proportional_floors():
    groups = np.array([0] * 6 + [1] * 4)
    assert group_floors(groups, 5, "PR").tolist() == [3, 2]
    assert group_floors(groups, 4, "ER").tolist() == [2, 2]


@pytest.mark.parametrize("rule,k,q", [("ER", 6, 0), ("quota", 2, 3), ("quota", 4, 4)])
def test_unsatisfiable_rules(rule, k, q):
    with pytest.raises(UnsatisfiableRuleError):
        constrained_topk(np.arange(5.0), [0, 0, 0, 1, 1], k, rule, q)


def test_bad_inputs():
    with pytest.raises(ValueError):
        constrained_topk([1.0, 2.0], [0], 1)
    with pytest.raises(UnsatisfiableRuleError):
        constrained_topk([1.0, 2.0], [0, 1], 3)
    with pytest.raises(ValueError):
        constrained_topk([1.0, 2.0], [0, 1], 1, "lottery")


def test_ratio_needs_positive_baseline():
    with pytest.raises(DomainError):
        utility_ratio([-1.0, -2.0], [1.0, 2.0], [0, 1], 1)


# -- interventions -------------------------------------------------------------


def test_intervention_densities_defaults():
    d = intervention_densities(F_D, 2.0, 0.6, loss=LossSpec("log-ratio"))
    assert set(d) == {"biased", "alpha", "tau"}
    assert all(x.grid.same_as(GRID) for x in d.values())
    ref = solve(energy_table(LossSpec("log-ratio", 1.0), F_D), 0.6).density
    assert np.allclose(d["alpha"].masses, ref.masses)
    ref = solve(energy_table(LossSpec("log-ratio", 2.0), F_D), 0.9).density
    assert np.allclose(d["tau"].masses, ref.masses)


def test_intervention_tau_sign():
    d = intervention_densities(F_D, 2.0, 0.6, loss=LossSpec("log-ratio"), tau_sign=-1)
    assert entropy(d["tau"]) == pytest.approx(0.3, abs=1e-10)


@pytest.mark.parametrize("kw", [dict(delta_alpha=1.0), dict(delta_tau=1.5), dict(tau_sign=0)])
def test_intervention_validation(kw):
    with pytest.raises(ValueError):
        intervention_densities(F_D, 2.0, 0.6, loss=LossSpec("log-ratio"), **kw)


# -- simulation ----------------------------------------------------------------


def _config(biased=F_D, alpha=F_D, tau=F_D, **kw):
    base = dict(n1=200, n2=200, k=40, quota=None, repetitions=30, seed=3)
    base.update(kw)
    return SelectionConfig(f_D=F_D, biased=biased, alpha_int=alpha, tau_int=tau, **base)


@pytest.mark.parametrize("kw", [dict(k=0), dict(k=401), dict(k=41), dict(n1=10, k=40), dict(quota=41), dict(repetitions=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        _config(**kw)


def test_config_needs_shared_grid():
    other = discretize(Pareto(2.5), make_grid(1.0, 30.0, 101))
    with pytest.raises(ValueError):
        _config(biased=other)


def test_unbiased_none_alpha_tau_are_exactly_one():
    out = run_selection(_config(quota=10))
    for tag in ("none", "alpha", "tau"):
        assert out.mean_ratio[tag] == 1.0 and out.sem[tag] == 0.0
    assert set(out.mean_ratio) == set(INTERVENTIONS)
    assert all(np.all(r > 0) for r in out.ratios.values())


def test_constrained_rules_only_lose_when_unbiased():
    out = run_selection(_config())
    for tag in ("ER", "PR"):
        assert np.all(out.ratios[tag] <= 1.0 + 1e-12)


def test_corrective_alpha_intervention():
    biased = discretize(Pareto(4.0), GRID)
    out = run_selection(_config(biased=biased, alpha=F_D, tau=biased))
    assert out.mean_ratio["alpha"] >= 1 - 2 * out.sem["alpha"]
    assert out.mean_ratio["alpha"] > 1
    assert out.mean_ratio["tau"] == 1.0


def test_simulation_is_deterministic():
    biased = discretize(Pareto(4.0), GRID)
    a = run_selection(_config(biased=biased, quota=10))
    b = run_selection(_config(biased=biased, quota=10))
    assert a.mean_ratio == b.mean_ratio and a.sem == b.sem
    c = run_selection(_config(biased=biased, quota=10, seed=4))
    assert c.mean_ratio != a.mean_ratio


def test_repetition_rngs_are_independent_and_seeded():
    a = [r.random() for r in repetition_rngs(5, 4)]
    b = [r.random() for r in repetition_rngs(5, 4)]
    assert a == b and len(set(a)) == 4


def test_non_positive_baseline_raises():
    grid = make_grid(-10.0, -1.0, 91)
    f = discretize(Gaussian(-5.0, 1.0), grid)
    with pytest.raises(DomainError):
        run_selection(SelectionConfig(20, 20, 4, f, f, f, f, repetitions=2))


def test_sweep_and_csv(tmp_path):
    biased = discretize(Pareto(4.0), GRID)
    outs = sweep_k(_config(biased=biased, quota=0), [20, 40], quota_fraction=0.496)
    assert [o.k for o in outs] == [20, 40]
    text = selection_curves_csv(outs, tmp_path / "c.csv")
    lines = text.splitlines()
    assert lines[0] == "k,intervention,mean_ratio,sem"
    assert len(lines) == 1 + 2 * len(INTERVENTIONS)
    assert lines[1].startswith("20,none,1,")
    assert (tmp_path / "c.csv").read_text() == text
    assert outs[0].rows()[0] == (20, "none", 1.0, 0.0)
