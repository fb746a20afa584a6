"""Command-line interface: ``evalbias {solve,fit,select,gennet,verify}``.

Every subcommand accepts ``--config FILE`` holding a JSON object keyed by
flag names; explicit flags override the file.  Exit codes: 0 success,
1 error, 2 infeasible tau.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_json
from .data import GroupedSamples, NetworkGenConfig, emit_plot_data, generate_biased_ba, load_grouped_csv, support_grid
from .density import Density, density_from_csv, density_to_csv, empirical_density, make_grid, moments, normalize
from .energy import LossSpec, energy_table
from .errors import EvalBiasError, InfeasibleTauError
from .families import FAMILIES, NATURAL_LOSS, discretize, family_grid
from .fitting import BaselineSpace, SearchSpace, compare_models, default_shifts, train_test_split
from .gibbs import solve
from .selection import SelectionConfig, intervention_densities, selection_curves_csv, sweep_k

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
LOSSES = ("squared", "log-ratio", "linear", "abs-deviation", "neg-log-density")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1; exit code 2 is reserved for infeasible tau."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _csv_floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _csv_ints(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ":" in part:  # lo:hi:step, inclusive of hi
            lo, hi, step = (int(v) for v in part.split(":"))
            out.extend(range(lo, hi + 1, step))
        elif part:
            out.append(int(part))
    return out


# ---------------------------------------------------------------------------
# shared flag groups
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="JSON file of flag values (flags override it)")


def _add_density_flags(p: argparse.ArgumentParser, default_family: str):
    g = p.add_argument_group("true-utility density")
    g.add_argument("--family", choices=sorted(FAMILIES) + ["uniform"], default=default_family)
    g.add_argument("--input-density", type=Path, default=None, help="x,weight,mass CSV; overrides --family and the grid flags")
    g.add_argument("--m", type=float, default=0.0, help="gaussian mean")
    g.add_argument("--sigma", type=float, default=1.0, help="gaussian standard deviation")
    g.add_argument("--beta", type=float, default=3.0, help="pareto exponent")
    g.add_argument("--lam", type=float, default=1.0, help="exponential rate")
    g.add_argument("--a", type=float, default=0.0, help="laplace location")
    g.add_argument("--b", type=float, default=1.0, help="laplace scale")
    g.add_argument("--discretization", choices=("point", "cell"), default="point")
    g = p.add_argument_group("grid")
    g.add_argument("--grid-lo", type=float, default=None, help="default: the family's truncation region")
    g.add_argument("--grid-hi", type=float, default=None)
    g.add_argument("--grid-count", type=int, default=2001)
    g.add_argument("--grid-points", type=_csv_floats, default=None, help="comma-separated discrete support (unit weights)")


def _add_loss_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("loss")
    g.add_argument("--loss", choices=LOSSES, default=None, help="default: the family's natural loss")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--shift", type=float, default=0.0)
    g.add_argument("--anchor", type=float, default=None, help="abs-deviation anchor (default: laplace location)")


def _family_params(args):
    name = args.family
    if name == "gaussian":
        return FAMILIES[name](args.m, args.sigma)
    if name == "pareto":
        return FAMILIES[name](args.beta)
    if name == "exponential":
        return FAMILIES[name](args.lam)
    if name == "laplace":
        return FAMILIES[name](args.a, args.b)
    return None


def build_density(args) -> Density:
    if args.input_density is not None:
        return density_from_csv(args.input_density)
    params = _family_params(args)
    if args.grid_points is not None:
        grid = make_grid(points=args.grid_points)
    elif args.grid_lo is not None or args.grid_hi is not None:
        if params is not None:
            lo, hi = params.bounds()
        else:
            lo = hi = None
        grid = make_grid(args.grid_lo if args.grid_lo is not None else lo, args.grid_hi if args.grid_hi is not None else hi, args.grid_count)
    elif params is not None:
        grid = family_grid(params, args.grid_count)
    else:
        raise ValueError("the uniform family needs --grid-lo/--grid-hi or --grid-points")
    if params is None:
        return normalize(grid.weights, grid)
    return discretize(params, grid, args.discretization)


def build_loss(args, f_D: Density) -> LossSpec:
    family = args.loss or NATURAL_LOSS.get(args.family, "squared")
    anchor = args.anchor if args.anchor is not None else (args.a if args.family == "laplace" else 0.0)
    reference = f_D if family == "neg-log-density" else None
    return LossSpec(family, args.alpha, args.shift, anchor, reference)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    f_D = build_density(args)
    loss = build_loss(args, f_D)
    energy = energy_table(loss, f_D)
    sol = solve(energy, args.tau)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol.to_json(out / "solution.json")
    density_to_csv(sol.density, out / "density.csv")
    if args.emit_energy:
        energy.to_csv(out / "energy.csv")
    m = moments(sol.density)
    print(
        f"gamma*={sol.gamma_star:.10g} ln Z*={sol.log_partition:.10g} err={sol.err:.10g} "
        f"entropy={sol.achieved_entropy:.12g} mean={m.mean:.10g} variance={m.variance:.10g}"
    )
    return EXIT_OK


def _pick_groups(samples: GroupedSamples, reference: str | None, target: str | None) -> tuple[str, str]:
    labels = samples.labels
    if len(labels) < 2 and (reference is None or target is None):
        raise ValueError(f"need two groups, found {labels}")
    ref = reference if reference is not None else labels[0]
    tgt = target if target is not None else next(g for g in labels if g != ref)
    for g in (ref, tgt):
        if g not in samples.groups:
            raise ValueError(f"group {g!r} not in {labels}")
    return ref, tgt


def _parse_filters(items) -> dict:
    filters: dict = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"filter {item!r} must look like COLUMN=VALUE")
        col, val = item.split("=", 1)
        filters.setdefault(col.strip(), []).append(val.strip())
    return filters


def cmd_fit(args) -> int:
    samples = load_grouped_csv(args.input, args.value_column, args.group_column, _parse_filters(args.filter), args.min_value)
    ref, tgt = _pick_groups(samples, args.reference_group, args.target_group)
    grid = support_grid(np.concatenate((samples[ref], samples[tgt])), args.grid, args.grid_count)
    if args.split > 0:
        ref_train, _ = train_test_split(samples[ref], args.split, args.seed)
        tgt_train, tgt_test = train_test_split(samples[tgt], args.split, args.seed + 1)
        test = empirical_density(tgt_test, grid)
    else:
        ref_train, tgt_train, test = samples[ref], samples[tgt], None
    f_D = empirical_density(ref_train, grid)
    target = empirical_density(tgt_train, grid)
    shifts = default_shifts(grid, args.shift_stride)
    space = SearchSpace(
        np.logspace(math.log10(args.alpha_min), math.log10(args.alpha_max), args.alpha_count),
        np.linspace(args.tau_min, args.tau_max, args.tau_count),
        shifts,
    )
    baselines = {
        "multiplicative": BaselineSpace(np.linspace(args.rho_min, 1.0, args.rho_count), shifts),
        "implicit-variance": BaselineSpace(np.logspace(math.log10(args.sigma_min), math.log10(args.sigma_max), args.sigma_count), shifts),
    }
    comp = compare_models(f_D, target, args.loss, space, test=test, baseline_spaces=baselines, refine=args.refine, keep_report=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = comp.to_dict()
    result.update({"reference_group": ref, "target_group": tgt, "skipped_rows": samples.skipped, "seed": args.seed, "split": args.split})
    atomic_write_json(out / "fit.json", result)
    comp.table_csv(out / "fit_table.csv")
    emit_plot_data(comp.fits["optprog"], out / "fit_report.csv", "fit-report")
    emit_plot_data((comp.fits["optprog"].fitted, target), out / "density_overlay.csv", "density-overlay")
    split = "test" if test is not None else "train"
    print(f"TV ({split}) for {ref} -> {tgt}:")
    for col, fit in comp.fits.items():
        print(f"  {col:<18} {comp.tv(col, split):.4f}")
    return EXIT_OK


def cmd_select(args) -> int:
    f_D = build_density(args)
    loss = build_loss(args, f_D)
    dens = intervention_densities(
        f_D, args.alpha, args.tau, loss=loss,
        delta_alpha=args.delta_alpha, delta_tau=args.delta_tau, tau_sign=args.tau_sign,
    )
    ks = _csv_ints(args.k)
    if not ks:
        raise ValueError("--k needs at least one value")
    config = SelectionConfig(
        args.n1, args.n2, ks[0], f_D, dens["biased"], dens["alpha"], dens["tau"],
        None if args.quota_fraction is None else 0, args.repetitions, args.seed,
    )
    outcomes = sweep_k(config, ks, args.quota_fraction)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    selection_curves_csv(outcomes, out)
    print(f"wrote {len(outcomes)} k values x {len(outcomes[0].mean_ratio)} interventions to {out}")
    return EXIT_OK


def cmd_gennet(args) -> int:
    cfg = NetworkGenConfig(args.seed_size, args.final_size, args.group_prob, args.disadvantage_factor, args.seed, args.pair_prob)
    net = generate_biased_ba(cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.to_csv(out)
    for g, name in ((0, "G1"), (1, "G2")):
        d = net.group_degrees(g)
        print(f"{name}: {d.size} vertices, mean degree {d.mean():.4f}, max {d.max()}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(args.level, report=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        print("failed: " + ", ".join(f"{r.number} {r.name}" for r in failed), file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


# ---------------------------------------------------------------------------


def _label_defaults(parser: argparse.ArgumentParser) -> None:
    # shown only for real values, so a None default never prints
    for action in parser._actions:
        if not action.option_strings or any(action.default is d for d in (None, False, argparse.SUPPRESS)):
            continue
        if action.help is None:
            action.help = "default: %(default)s"
        elif "%(default)" not in action.help:
            action.help += " (default: %(default)s)"


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.HelpFormatter
    parser = _Parser(prog="evalbias", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one instance and write the optimal density", formatter_class=fmt)
    _add_common(p)
    _add_density_flags(p, "gaussian")
    _add_loss_flags(p)
    p.add_argument("--tau", type=float, required=True, help="entropy target")
    p.add_argument("--emit-energy", action="store_true", help="also write energy.csv (x,I)")
    p.add_argument("--out-dir", default=".", help="directory for solution.json, density.csv and energy.csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("fit", help="fit the model and both baselines to grouped data", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--input", type=Path, required=True, help="CSV with a header row")
    p.add_argument("--value-column", default="value")
    p.add_argument("--group-column", default="group")
    p.add_argument("--reference-group", default=None, help="group treated as unbiased (default: first label)")
    p.add_argument("--target-group", default=None, help="group whose density is fitted (default: next label)")
    p.add_argument("--filter", action="append", default=None, metavar="COLUMN=VALUE", help="keep rows with this value; repeatable")
    p.add_argument("--min-value", type=float, default=None, help="drop rows scoring below this")
    p.add_argument("--loss", choices=LOSSES, default="squared")
    p.add_argument("--grid", choices=("auto", "integer", "continuum"), default="auto")
    p.add_argument("--grid-count", type=int, default=2001, help="points of a continuum grid")
    p.add_argument("--split", type=float, default=0.8, help="training fraction; 0 fits on all data")
    p.add_argument("--alpha-min", type=float, default=1e-4)
    p.add_argument("--alpha-max", type=float, default=1e2)
    p.add_argument("--alpha-count", type=int, default=50)
    p.add_argument("--tau-min", type=float, default=0.1)
    p.add_argument("--tau-max", type=float, default=10.0)
    p.add_argument("--tau-count", type=int, default=50)
    p.add_argument("--shift-stride", type=int, default=4, help="shift candidates are every n-th grid point plus 0")
    p.add_argument("--rho-min", type=float, default=0.02, help="multiplicative baseline scales run from here to 1")
    p.add_argument("--rho-count", type=int, default=50)
    p.add_argument("--sigma-min", type=float, default=1e-2)
    p.add_argument("--sigma-max", type=float, default=10.0)
    p.add_argument("--sigma-count", type=int, default=50)
    p.add_argument("--refine", action="store_true", help="re-search a 5x finer box around the best triple")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="simulate selection under interventions", formatter_class=fmt)
    _add_common(p)
    _add_density_flags(p, "pareto")
    _add_loss_flags(p)
    p.set_defaults(alpha=2.0)
    p.add_argument("--tau", type=float, default=0.5, help="entropy target of the biased evaluation")
    p.add_argument("--delta-alpha", type=float, default=0.5, help="alpha intervention: alpha * (1 - delta)")
    p.add_argument("--delta-tau", type=float, default=0.5, help="tau intervention: tau * (1 + sign * delta)")
    p.add_argument("--tau-sign", type=int, choices=(-1, 1), default=1)
    p.add_argument("--n1", type=int, default=1000)
    p.add_argument("--n2", type=int, default=1000)
    p.add_argument("--k", default="50:1000:50", help="comma list of sizes or lo:hi:step ranges")
    p.add_argument("--quota-fraction", type=float, default=None, help="add a quota rule with ceil(fraction * k) G2 members")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="selection_curves.csv")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("gennet", help="generate a biased preferential-attachment network", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--seed-size", type=int, default=50)
    p.add_argument("--final-size", type=int, default=10000)
    p.add_argument("--group-prob", type=float, default=0.5)
    p.add_argument("--disadvantage-factor", type=float, default=0.5)
    p.add_argument("--pair-prob", type=float, default=None, help="seed-graph edge probability (default 2 / seed size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="degrees.csv")
    p.set_defaults(func=cmd_gennet)

    p = sub.add_parser("verify", help="run the acceptance checks", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.set_defaults(func=cmd_verify)
    for p in sub.choices.values():
        _label_defaults(p)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Two passes: read ``--config`` first, install its values as defaults, then parse the flags."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if known.config is None or known.command not in subparsers:
        return parser.parse_args(argv)
    try:
        with open(known.config, encoding="utf-8") as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(values, dict):
        parser.error(f"{known.config}: config must be a JSON object")
    sub = subparsers[known.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions or dest in ("config", "help", "func"):
            parser.error(f"{known.config}: unknown setting {key!r}")
        action = actions[dest]
        if isinstance(value, list) and action.type is _csv_floats:
            value = [float(v) for v in value]
        elif isinstance(value, str) and action.type is not None:
            value = action.type(value)
        elif action.type is Path and value is not None:
            value = Path(value)
        defaults[dest] = value
        action.required = False  # a config value satisfies a required flag
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args)
    except InfeasibleTauError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (EvalBiasError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
