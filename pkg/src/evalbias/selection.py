"""Subset selection under biased evaluations and bias-mitigating interventions.

Group labels are 0 for the advantaged group G1 and 1 for the group G2 whose
evaluations are biased.  Every individual gets one uniform variate that
drives all of their coupled draws, so the interventions are compared on
identical randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from ._io import atomic_write_text
from .density import Density, cdf, quantile_index
from .energy import LossSpec, energy_table
from .errors import DomainError, UnsatisfiableRuleError
from .gibbs import solve

Rule = Literal["none", "ER", "PR", "quota"]
INTERVENTIONS = ("none", "ER", "PR", "alpha", "tau", "quota")


def coupled_sample(f_D: Density, f_E: Density, u):
    """True and estimated utilities at a shared CDF level ``u``."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr < 0) or np.any(u_arr > 1) or np.any(np.isnan(u_arr)):
        raise ValueError("coupling levels must lie in [0, 1]")
    v = f_D.points[quantile_index(cdf(f_D), u_arr)]
    x = f_E.points[quantile_index(cdf(f_E), u_arr)]
    if np.ndim(u) == 0:
        return float(v), float(x)
    return v, x


def group_floors(groups: np.ndarray, k: int, rule: Rule, quota: int = 0) -> np.ndarray:
    """Minimum number of selected members per group label (labels 0..G-1)."""
    counts = np.bincount(groups, minlength=2)
    n = counts.sum()
    if rule == "none":
        floors = np.zeros_like(counts)
    elif rule == "ER":
        floors = np.full_like(counts, k // counts.size)
    elif rule == "PR":
        floors = (k * counts) // n
    elif rule == "quota":
        if not 0 <= quota <= k:
            raise UnsatisfiableRuleError(f"quota {quota} must lie in [0, k={k}]")
        floors = np.zeros_like(counts)
        floors[1] = quota
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    if np.any(floors > counts):
        raise UnsatisfiableRuleError(f"rule {rule} needs {floors.tolist()} members but groups have {counts.tolist()}")
    return floors


def constrained_topk(estimates, groups, k: int, rule: Rule = "none", quota: int = 0) -> np.ndarray:
    """Indices (ascending) of the selected subset.

    Every rule is a per-group floor: the best ``floor_g`` members of each
    group are taken, then the remaining slots go to the best candidates
    left.  ER floors each group at floor(k / 2), PR at floor(k |G_g| / n),
    and quota(q) floors G2 at q.  Ties go to the lower index.  The result
    maximizes the summed estimate over all subsets meeting the floors.
    """
    est = np.asarray(estimates, dtype=np.float64)
    grp = np.asarray(groups, dtype=np.int64)
    if est.shape != grp.shape or est.ndim != 1:
        raise ValueError("estimates and groups must be 1-d arrays of equal length")
    if np.any(grp < 0):
        raise ValueError("group labels must be non-negative integers")
    n = est.size
    if not 0 <= k <= n:
        raise UnsatisfiableRuleError(f"cannot select k={k} of {n}")
    floors = group_floors(grp, k, rule, quota)
    order = np.lexsort((np.arange(n), -est))  # best first, lower index on ties
    chosen = np.zeros(n, dtype=bool)
    for g, need in enumerate(floors):
        if need:
            members = order[grp[order] == g]
            chosen[members[:need]] = True
    rest = order[~chosen[order]]
    chosen[rest[: k - int(floors.sum())]] = True
    return np.flatnonzero(chosen)


def utility_ratio(true_utility, estimates, groups, k: int, rule: Rule = "none", quota: int = 0) -> float:
    """True utility of the rule's selection over that of the unconstrained selection."""
    v = np.asarray(true_utility, dtype=np.float64)
    base = v[constrained_topk(estimates, groups, k)].sum()
    if not base > 0:
        raise DomainError("utility ratio is undefined: the unconstrained selection has non-positive true utility")
    return float(v[constrained_topk(estimates, groups, k, rule, quota)].sum() / base)


def _solve_density(f_D: Density, loss: LossSpec, alpha: float, tau: float) -> Density:
    return solve(energy_table(loss.with_params(alpha=alpha), f_D), tau).density


def intervention_densities(
    f_D: Density,
    alpha: float,
    tau: float,
    *,
    loss: LossSpec | None = None,
    delta_alpha: float = 0.5,
    delta_tau: float = 0.5,
    tau_sign: int = 1,
) -> dict:
    """The biased density at (alpha, tau) and the two intervened densities.

    The alpha intervention lowers alpha to alpha (1 - delta_alpha); the tau
    intervention moves tau to tau (1 + tau_sign * delta_tau).  The defaults
    give alpha / 2 and 3 tau / 2.
    """
    if not 0 <= delta_alpha < 1:
        raise ValueError("delta_alpha must lie in [0, 1)")
    if not 0 <= delta_tau <= 1:
        raise ValueError("delta_tau must lie in [0, 1]")
    if tau_sign not in (-1, 1):
        raise ValueError("tau_sign must be +1 or -1")
    loss = LossSpec("squared") if loss is None else loss
    return {
        "biased": _solve_density(f_D, loss, alpha, tau),
        "alpha": _solve_density(f_D, loss, alpha * (1 - delta_alpha), tau),
        "tau": _solve_density(f_D, loss, alpha, tau * (1 + tau_sign * delta_tau)),
    }


@dataclass(frozen=True, eq=False)
class SelectionConfig:
    n1: int
    n2: int
    k: int
    f_D: Density
    biased: Density
    alpha_int: Density
    tau_int: Density
    quota: int | None = None
    repetitions: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0 or self.n1 + self.n2 == 0:
            raise ValueError("group sizes must be non-negative and not both zero")
        if not 0 < self.k <= self.n1 + self.n2:
            raise ValueError(f"k={self.k} must lie in [1, n1 + n2]")
        if self.quota is not None and not 0 <= self.quota <= self.k:
            raise ValueError("quota must lie in [0, k]")
        if self.k % 2 or self.k // 2 > min(self.n1, self.n2):
            raise ValueError("ER needs an even k with k/2 members available in each group")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        for d in (self.biased, self.alpha_int, self.tau_int):
            if not d.grid.same_as(self.f_D.grid):
                raise ValueError("all selection densities must share the grid of f_D")

    def with_k(self, k: int) -> "SelectionConfig":
        return SelectionConfig(
            self.n1, self.n2, k, self.f_D, self.biased, self.alpha_int, self.tau_int,
            self.quota, self.repetitions, self.seed,
        )


@dataclass(frozen=True)
class SelectionOutcome:
    k: int
    mean_ratio: dict
    sem: dict
    repetitions: int
    ratios: dict = field(default_factory=dict, repr=False)

    def rows(self):
        return [(self.k, tag, self.mean_ratio[tag], self.sem[tag]) for tag in INTERVENTIONS if tag in self.mean_ratio]


def repetition_rngs(seed: int, repetitions: int) -> list[np.random.Generator]:
    """Independent per-repetition generators derived from one base seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(repetitions)]


def run_selection(config: SelectionConfig) -> SelectionOutcome:
    n1, n2, k = config.n1, config.n2, config.k
    groups = np.concatenate((np.zeros(n1, dtype=np.int64), np.ones(n2, dtype=np.int64)))
    cdfs = {name: cdf(getattr(config, name)) for name in ("f_D", "biased", "alpha_int", "tau_int")}
    pts = config.f_D.points
    tags = [t for t in INTERVENTIONS if t != "quota" or config.quota is not None]
    ratios = {t: np.empty(config.repetitions) for t in tags}
    for r, rng in enumerate(repetition_rngs(config.seed, config.repetitions)):
        u1 = rng.random(n1)
        u2 = rng.random(n2)
        v = pts[quantile_index(cdfs["f_D"], np.concatenate((u1, u2)))]
        g1_v = v[:n1]
        x = np.concatenate((g1_v, pts[quantile_index(cdfs["biased"], u2)]))
        x_alpha = np.concatenate((g1_v, pts[quantile_index(cdfs["alpha_int"], u2)]))
        x_tau = np.concatenate((g1_v, pts[quantile_index(cdfs["tau_int"], u2)]))
        plain = constrained_topk(x, groups, k)
        base = v[plain].sum()
        if not base > 0:
            raise DomainError("utility ratio is undefined: the unconstrained selection has non-positive true utility")
        picks = {
            "none": plain,
            "ER": constrained_topk(x, groups, k, "ER"),
            "PR": constrained_topk(x, groups, k, "PR"),
            "alpha": constrained_topk(x_alpha, groups, k),
            "tau": constrained_topk(x_tau, groups, k),
        }
        if config.quota is not None:
            picks["quota"] = constrained_topk(x, groups, k, "quota", config.quota)
        for t in tags:
            ratios[t][r] = v[picks[t]].sum() / base
    reps = config.repetitions
    mean = {t: float(ratios[t].mean()) for t in tags}
    sem = {t: float(ratios[t].std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0 for t in tags}
    return SelectionOutcome(k, mean, sem, reps, ratios)


def sweep_k(config: SelectionConfig, ks: Sequence[int], quota_fraction: float | None = None) -> list[SelectionOutcome]:
    """Run every k on the same seed; ``quota_fraction`` sets quota = ceil(fraction * k)."""
    out = []
    for k in ks:
        cfg = config.with_k(int(k))
        if quota_fraction is not None:
            cfg = SelectionConfig(
                cfg.n1, cfg.n2, cfg.k, cfg.f_D, cfg.biased, cfg.alpha_int, cfg.tau_int,
                math.ceil(quota_fraction * cfg.k - 1e-9), cfg.repetitions, cfg.seed,
            )
        out.append(run_selection(cfg))
    return out


def selection_curves_csv(outcomes: Sequence[SelectionOutcome], path=None) -> str:
    lines = ["k,intervention,mean_ratio,sem"]
    for o in outcomes:
        lines += [f"{k},{tag},{m:.17g},{s:.17g}" for k, tag, m, s in o.rows()]
    text = "\n".join(lines) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text
