"""Two-level fractional factorial experiment harness and feature selection.

Runs the simulator over a 2^(k-p) sign table, aggregates per-run metric
responses for malicious- and honest-node scopes, decomposes response
variation into per-factor significance (factor sum of squares over total),
and selects the danger-pattern metrics: those that respond strongly to the
malicious-count factor and weakly to everything else.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import FACTOR_NAMES, ScenarioConfig, derive_seed
from .ddsim.engine import Simulation
from .ddsim.topology import build_topology
from .metrics import METRIC_NAMES, MetricVector, metrics_from_counters

# resolution-III construction for the 2^(7-4) table
DEFAULT_GENERATORS_7_4 = (("D", "AB"), ("E", "AC"), ("F", "BC"), ("G", "ABC"))

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(slots=True)
class FactorSpec:
    name: str
    low: float
    high: float

    def __post_init__(self):
        if self.name not in FACTOR_NAMES:
            raise ValueError(f"unknown factor {self.name!r}; expected one of {FACTOR_NAMES}")
        if self.low == self.high:
            raise ValueError(f"factor {self.name}: low and high levels must differ")

    def level(self, sign: int) -> float:
        return self.high if sign > 0 else self.low


def default_factors() -> list[FactorSpec]:
    levels = {
        "N_M": (0, 4),
        "N_P": (1, 4),
        "I_P": (0.5, 2.0),
        "mu_M": (0.1, 0.7),
        "N_R": (5, 20),
        "N_S": (2, 8),
        "delta_sigma": (0.0, 0.5),
    }
    return [FactorSpec(name, lo, hi) for name, (lo, hi) in levels.items()]


@dataclass(slots=True)
class DesignMatrix:
    """Sign table: `rows[i][j]` is the +/-1 level of factor j in run i."""

    rows: np.ndarray                     # shape (2^(k-p), k), entries in {-1, +1}
    k: int
    p: int
    generators: tuple[tuple[str, str], ...]

    @property
    def n_runs(self) -> int:
        return self.rows.shape[0]

    def column(self, j: int) -> np.ndarray:
        return self.rows[:, j]


def build_design(k: int, p: int, generators=None) -> DesignMatrix:
    """Enumerate the base full factorial and derive aliased columns by products.

    The first k-p letters are base factors; each generator defines one of the
    remaining columns as an elementwise product of base columns, e.g. D=AB.
    """
    if not 0 <= p < k:
        raise ValueError("need 0 <= p < k")
    m = k - p
    base_letters = _LETTERS[:m]
    aliased_letters = _LETTERS[m:k]
    if generators is None:
        if (k, p) == (7, 4):
            generators = DEFAULT_GENERATORS_7_4
        else:
            # default: alias factor m+i to the product of the first i+2 bases
            generators = tuple(
                (aliased_letters[i], base_letters[: min(i + 2, m)]) for i in range(p)
            )
    generators = tuple((t, s) for t, s in generators)
    if len(generators) != p:
        raise ValueError(f"need exactly {p} generators, got {len(generators)}")
    defined = {t for t, _ in generators}
    if defined != set(aliased_letters):
        raise ValueError(f"generators must define exactly {sorted(aliased_letters)}")
    for target, source in generators:
        for letter in source:
            if letter not in base_letters:
                raise ValueError(
                    f"generator {target}={source} references non-base factor {letter!r}"
                )

    n = 1 << m
    rows = np.empty((n, k), dtype=np.int8)
    for run in range(n):
        for j in range(m):
            bit = (run >> (m - 1 - j)) & 1
            rows[run, j] = 1 if bit else -1
    by_letter = {base_letters[j]: j for j in range(m)}
    for target, source in generators:
        col = np.ones(n, dtype=np.int8)
        for letter in source:
            col = col * rows[:, by_letter[letter]]
        j = _LETTERS.index(target)
        rows[:, j] = col
    return DesignMatrix(rows=rows, k=k, p=p, generators=generators)


# ----------------------------------------------------------------------
# batch execution
# ----------------------------------------------------------------------

MALICIOUS_SCOPE = "malicious"
HONEST_SCOPE = "honest"
SCOPES = (MALICIOUS_SCOPE, HONEST_SCOPE)


@dataclass(slots=True)
class ResponseTable:
    """Per-(design row, repetition) mean metric responses, per node scope.

    `values[scope]` has shape (n_runs * repetitions, 9); rows with no nodes
    in scope (e.g. malicious scope when N_M = 0) hold NaN.
    """

    design: DesignMatrix
    factors: tuple
    repetitions: int
    levels: np.ndarray                   # (n_runs, k) actual factor values
    values: dict[str, np.ndarray]

    def run_row(self, row: int, rep: int) -> int:
        return row * self.repetitions + rep


def _scenario_for_row(base: ScenarioConfig, factors, signs, seed: int) -> ScenarioConfig:
    cfg = replace(base, seed=seed)
    for factor, sign in zip(factors, signs):
        cfg = cfg.with_factor(factor.name, factor.level(int(sign)))
    # the sampled malicious count can never exceed the subscriber count
    if cfg.n_m > cfg.n_s:
        cfg = replace(cfg, n_s=cfg.n_m)
    return cfg


def _run_scenario_means(cfg: ScenarioConfig, warmup_fraction: float) -> dict[str, MetricVector | None]:
    network = build_topology(cfg)
    sim = Simulation(network, record_events=False, schedule=True)
    malicious = set(network.malicious)
    honest = [n for n in range(len(network)) if n not in malicious]
    blocks = list(sim.run_blocks())
    skip = int(len(blocks) * warmup_fraction)
    tail = blocks[skip:] if len(blocks) > skip else blocks
    sums: dict[str, np.ndarray] = {s: np.zeros(len(METRIC_NAMES)) for s in SCOPES}
    for block in tail:
        for scope, nodes in ((MALICIOUS_SCOPE, sorted(malicious)), (HONEST_SCOPE, honest)):
            counters = [block.counters[n] for n in nodes if n in block.counters]
            mv = metrics_from_counters(counters)
            sums[scope] += np.array(mv.as_tuple())
    out: dict[str, MetricVector | None] = {}
    for scope in SCOPES:
        if scope == MALICIOUS_SCOPE and not malicious:
            out[scope] = None
            continue
        mean = sums[scope] / max(1, len(tail))
        out[scope] = MetricVector(**dict(zip(METRIC_NAMES, (float(x) for x in mean))))
    return out


def run_batch(
    design: DesignMatrix,
    factors: list[FactorSpec],
    repetitions: int,
    base_config: ScenarioConfig,
    warmup_fraction: float = 0.1,
    progress=None,
) -> ResponseTable:
    """Run every design row x repetition and record per-run mean responses."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if len(factors) != design.k:
        raise ValueError(f"design has {design.k} factors but {len(factors)} specs given")
    n_total = design.n_runs * repetitions
    values = {s: np.full((n_total, len(METRIC_NAMES)), np.nan) for s in SCOPES}
    levels = np.empty((design.n_runs, design.k))
    for row in range(design.n_runs):
        signs = design.rows[row]
        for j, factor in enumerate(factors):
            levels[row, j] = factor.level(int(signs[j]))
        for rep in range(repetitions):
            seed = derive_seed(base_config.seed, "doe", row, rep)
            cfg = _scenario_for_row(base_config, factors, signs, seed)
            try:
                means = _run_scenario_means(cfg, warmup_fraction)
            except Exception as exc:
                raise RuntimeError(f"run (row={row}, rep={rep}) failed: {exc}") from exc
            idx = row * repetitions + rep
            for scope in SCOPES:
                mv = means[scope]
                if mv is not None:
                    values[scope][idx] = mv.as_tuple()
            if progress is not None:
                progress(row, rep)
    return ResponseTable(
        design=design,
        factors=tuple(factors),
        repetitions=repetitions,
        levels=levels,
        values=values,
    )


# ----------------------------------------------------------------------
# significance
# ----------------------------------------------------------------------

@dataclass(slots=True)
class SignificanceTable:
    """Share of total response variation explained by each factor, per metric."""

    metric_names: tuple
    factor_names: tuple
    values: np.ndarray                   # shape (9, k), entries in [0, 1]

    def get(self, metric: str, factor: str) -> float:
        return float(
            self.values[self.metric_names.index(metric), self.factor_names.index(factor)]
        )


def significance(
    responses: np.ndarray,
    design: DesignMatrix,
    repetitions: int,
    metric_names=METRIC_NAMES,
    factor_names=FACTOR_NAMES,
) -> SignificanceTable:
    """Sign-table variance decomposition: significance_j = SS_j / SS_total.

    `responses` has shape (n_runs * repetitions, n_metrics), replicate rows
    grouped by design row.  NaN cells (empty scopes) are treated as zero
    responses, which is what an empty node scope actually measures.
    """
    n_rows = design.n_runs
    if responses.shape[0] != n_rows * repetitions:
        raise ValueError(
            f"{responses.shape[0]} response rows do not align with "
            f"{n_rows} design rows x {repetitions} repetitions"
        )
    y = np.nan_to_num(np.asarray(responses, dtype=float), nan=0.0)
    n_metrics = y.shape[1]
    out = np.zeros((n_metrics, design.k))
    signs = np.repeat(design.rows, repetitions, axis=0).astype(float)
    n_total = n_rows * repetitions
    for m in range(n_metrics):
        col = y[:, m]
        sst = float(np.sum((col - col.mean()) ** 2))
        if sst <= 0.0:
            continue
        for j in range(design.k):
            effect = 2.0 * float(np.mean(col * signs[:, j]))    # mean(+) - mean(-)
            ss = n_total * effect * effect / 4.0
            out[m, j] = ss / sst
    return SignificanceTable(
        metric_names=tuple(metric_names), factor_names=tuple(factor_names), values=out
    )


def select_dmp_features(
    malicious_table: SignificanceTable,
    honest_table: SignificanceTable,
    theta_hi: float,
    theta_lo: float,
    nm_factor: str = "N_M",
) -> list[str]:
    """Metrics that respond strongly to the malicious count and weakly to the rest.

    A metric qualifies when its N_M significance reaches theta_hi in at least
    one node-class table and no other factor exceeds theta_lo in either
    table.  An empty selection is a warning, not an error.
    """
    if malicious_table.metric_names != honest_table.metric_names:
        raise ValueError("tables must cover the same metrics")
    selected = []
    for metric in malicious_table.metric_names:
        nm_hit = max(
            malicious_table.get(metric, nm_factor), honest_table.get(metric, nm_factor)
        ) >= theta_hi
        others = [
            max(malicious_table.get(metric, f), honest_table.get(metric, f))
            for f in malicious_table.factor_names
            if f != nm_factor
        ]
        if nm_hit and (not others or max(others) <= theta_lo):
            selected.append(metric)
    if not selected:
        warnings.warn(
            f"no metric satisfied theta_hi={theta_hi}, theta_lo={theta_lo}; selection is empty"
        )
    return selected


# ----------------------------------------------------------------------
# CSV round-trips
# ----------------------------------------------------------------------

def write_response_csv(path: str | Path, table: ResponseTable) -> None:
    header = (
        ["run", "repetition"]
        + [f.name for f in table.factors]
        + [f"{scope}_{m}" for scope in SCOPES for m in METRIC_NAMES]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in range(table.design.n_runs):
            for rep in range(table.repetitions):
                idx = table.run_row(row, rep)
                rec = [row, rep] + [repr(float(x)) for x in table.levels[row]]
                for scope in SCOPES:
                    rec += [repr(float(x)) for x in table.values[scope][idx]]
                writer.writerow(rec)


def read_response_csv(path: str | Path) -> tuple[list[dict], list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, rec)) for rec in reader]
    return rows, header


def write_significance_csv(path: str | Path, tables: dict[str, SignificanceTable]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        some = next(iter(tables.values()))
        writer.writerow(["scope", "metric"] + list(some.factor_names))
        for scope, table in tables.items():
            for i, metric in enumerate(table.metric_names):
                writer.writerow([scope, metric] + [repr(round(float(v), 6)) for v in table.values[i]])
