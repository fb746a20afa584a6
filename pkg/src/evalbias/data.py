"""Grouped score ingestion, the biased preferential-attachment generator, and plot data."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from ._io import atomic_write_text
from .density import Density, Grid, make_grid


@dataclass(frozen=True)
class GroupedSamples:
    groups: dict
    skipped: int = 0

    def __getitem__(self, label) -> np.ndarray:
        return self.groups[label]

    @property
    def labels(self) -> list:
        return sorted(self.groups)

    def all_values(self) -> np.ndarray:
        return np.concatenate([self.groups[g] for g in self.labels])


def load_grouped_csv(
    path,
    value_column: str,
    group_column: str,
    filters: Mapping[str, Sequence[str]] | None = None,
    min_value: float | None = None,
) -> GroupedSamples:
    """Partition the numeric ``value_column`` of a CSV by ``group_column``.

    ``filters`` keeps only rows whose column value is in the given set;
    ``min_value`` drops rows scoring below it.  Rows that fail either test
    or hold a non-numeric value are counted in ``skipped``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise ValueError(f"{path}: empty file or missing header row")
        header = [c.strip() for c in reader.fieldnames]
        reader.fieldnames = header
        needed = [value_column, group_column, *(filters or {})]
        missing = [c for c in needed if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        allowed = {c: set(map(str, vals)) for c, vals in (filters or {}).items()}
        groups: dict = {}
        skipped = 0
        for row in reader:
            if any(row[c].strip() not in allowed[c] for c in allowed):
                skipped += 1
                continue
            try:
                value = float(row[value_column])
            except (TypeError, ValueError):
                skipped += 1
                continue
            if not math.isfinite(value) or (min_value is not None and value < min_value):
                skipped += 1
                continue
            groups.setdefault(row[group_column].strip(), []).append(value)
    if not groups:
        raise ValueError(f"{path}: no usable rows")
    return GroupedSamples({g: np.array(v) for g, v in groups.items()}, skipped)


def grouped_to_csv(samples: GroupedSamples, path=None, value_column: str = "value", group_column: str = "group") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([group_column, value_column])
    for g in samples.labels:
        for v in samples.groups[g]:
            w.writerow([g, f"{v:.17g}"])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text


def support_grid(values, kind: str = "auto", count: int = 2001) -> Grid:
    """Shared grid for samples: every integer in range for integer data, else a uniform grid."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if kind == "auto":
        kind = "integer" if np.all(v == np.round(v)) else "continuum"
    if kind == "integer":
        if hi == lo:
            hi = lo + 1
        return make_grid(points=np.arange(lo, hi + 1))
    if kind == "continuum":
        return make_grid(lo, hi if hi > lo else lo + 1, count)
    raise ValueError(f"unknown grid kind {kind!r}")


# ---------------------------------------------------------------------------
# biased Barabasi-Albert generator
# ---------------------------------------------------------------------------

G1, G2 = 0, 1


@dataclass(frozen=True)
class NetworkGenConfig:
    seed_size: int = 50
    final_size: int = 10000
    group_prob: float = 0.5
    disadvantage_factor: float = 0.5
    seed: int = 0
    pair_prob: float | None = None  # seed-graph edge probability; default 2 / seed_size

    def __post_init__(self):
        if not 2 <= self.seed_size <= self.final_size:
            raise ValueError("need 2 <= seed_size <= final_size")
        if not 0 < self.group_prob < 1:
            raise ValueError("group_prob must lie in (0, 1)")
        if not 0 < self.disadvantage_factor <= 1:
            raise ValueError("disadvantage_factor must lie in (0, 1]")
        if self.pair_prob is not None and not 0 < self.pair_prob <= 1:
            raise ValueError("pair_prob must lie in (0, 1]")

    @property
    def seed_pair_prob(self) -> float:
        return min(1.0, 2.0 / self.seed_size) if self.pair_prob is None else self.pair_prob


@dataclass(frozen=True)
class DegreeRecord:
    vertex: int
    group: int
    degree: int


@dataclass(frozen=True, eq=False)
class GeneratedNetwork:
    groups: np.ndarray
    degrees: np.ndarray
    seed_edges: int
    disadvantage_factor: float
    targets: np.ndarray = field(repr=False)
    seed_degrees: np.ndarray = field(repr=False)

    @property
    def edge_count(self) -> int:
        return self.seed_edges + self.targets.size

    def records(self) -> list[DegreeRecord]:
        return [DegreeRecord(i, int(g), int(d)) for i, (g, d) in enumerate(zip(self.groups, self.degrees))]

    def group_degrees(self, group: int) -> np.ndarray:
        return self.degrees[self.groups == group]

    def attachment_trace(self) -> list[np.ndarray]:
        """Attachment probabilities over existing vertices at every arrival, replayed from the targets."""
        factor = self._factors()
        deg = self.seed_degrees.astype(np.float64).copy()
        m0 = self.seed_degrees.size
        full = np.zeros(self.degrees.size)
        full[:m0] = deg
        out = []
        for t, v in enumerate(self.targets):
            existing = m0 + t
            w = full[:existing] * factor[:existing]
            out.append(w / w.sum())
            full[v] += 1
            full[existing] = 1
        return out

    def _factors(self) -> np.ndarray:
        return np.where(self.groups == G1, 1.0, self.disadvantage_factor)

    def to_csv(self, path=None) -> str:
        lines = ["vertex,group,degree"] + [f"{i},{'G1' if g == G1 else 'G2'},{d}" for i, (g, d) in enumerate(zip(self.groups, self.degrees))]
        text = "\n".join(lines) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text


def _seed_graph(m: int, p: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Random graph on m vertices with pair probability p; isolated vertices get one random edge."""
    iu, ju = np.triu_indices(m, k=1)
    keep = rng.random(iu.size) < p
    adj = np.zeros((m, m), dtype=bool)
    adj[iu[keep], ju[keep]] = True
    adj |= adj.T
    for v in range(m):
        if not adj[v].any():
            w = int(rng.integers(m - 1))
            w += w >= v  # uniform over the other m - 1 vertices
            adj[v, w] = adj[w, v] = True
    return adj.sum(axis=1).astype(np.int64), int(np.triu(adj, 1).sum())


def generate_biased_ba(config: NetworkGenConfig) -> GeneratedNetwork:
    """Grow a network by biased preferential attachment.

    Each arrival joins G1 with probability ``group_prob`` and links to one
    existing vertex chosen with weight equal to its degree, scaled by
    ``disadvantage_factor`` for G2 vertices.
    """
    rng = np.random.default_rng(config.seed)
    m, n = config.seed_size, config.final_size
    groups = np.where(rng.random(n) < config.group_prob, G1, G2).astype(np.int64)
    seed_deg, seed_edges = _seed_graph(m, config.seed_pair_prob, rng)
    deg = np.zeros(n, dtype=np.int64)
    deg[:m] = seed_deg
    factor = np.where(groups == G1, 1.0, config.disadvantage_factor)
    u = rng.random(n - m)
    targets = np.zeros(n - m, dtype=np.int64)
    kernels.grow_ba(deg, factor, m, u, targets)
    return GeneratedNetwork(groups, deg, seed_edges, config.disadvantage_factor, targets, seed_deg)


def tail_slope(samples, tail_fraction: float = 0.2) -> float:
    """Least-squares log-log slope of the empirical density over the top ``tail_fraction`` of values.

    Log-binned counts (density per unit) against bin centres; a Pareto-like
    tail with exponent beta gives a slope near -(beta + 1).
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    x = x[x > 0]
    lo = np.quantile(x, 1 - tail_fraction)
    tail = x[x >= lo]
    edges = np.geomspace(tail.min(), tail.max() * 1.0001, 12)
    counts, _ = np.histogram(tail, bins=edges)
    dens = counts / np.diff(edges)
    centres = np.sqrt(edges[1:] * edges[:-1])
    ok = counts > 0
    return float(np.polyfit(np.log(centres[ok]), np.log(dens[ok]), 1)[0])


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

PLOT_COLUMNS = {
    "density-overlay": ("x", "f", "g"),
    "fit-report": ("alpha", "tau", "shift", "tv"),
    "selection-curves": ("k", "intervention", "mean_ratio", "sem"),
}


def emit_plot_data(results, path, kind: str) -> Path:
    """Write plot-ready CSV.

    ``density-overlay`` takes a pair of densities on one grid; ``fit-report``
    takes a :class:`~evalbias.fitting.FitResult` fitted with
    ``keep_report=True`` (or its report array); ``selection-curves`` takes a
    list of :class:`~evalbias.selection.SelectionOutcome`.
    """
    if kind not in PLOT_COLUMNS:
        raise ValueError(f"unknown plot kind {kind!r}")
    lines = [",".join(PLOT_COLUMNS[kind])]
    if kind == "density-overlay":
        f, g = results
        if not isinstance(f, Density) or not isinstance(g, Density) or not f.grid.same_as(g.grid):
            raise ValueError("density-overlay needs two densities on one grid")
        lines += [f"{x:.17g},{a:.17g},{b:.17g}" for x, a, b in zip(f.points, f.values, g.values)]
    elif kind == "fit-report":
        rows = getattr(results, "report", results)
        if rows is None:
            raise ValueError("fit-report needs a fit run with keep_report=True")
        lines += [",".join(f"{v:.17g}" for v in r) for r in np.asarray(rows)]
    else:
        for o in results:
            lines += [f"{k},{tag},{m:.17g},{s:.17g}" for k, tag, m, s in o.rows()]
    return atomic_write_text(path, "\n".join(lines) + "\n")
