"""Experiment drivers: mass deletion, steady state, turnover, sharpness sweep.

Each driver mutates an index under a deletion workload and samples one
``MetricRow`` per measurement point.  Cumulative deletion seconds cover only
the strategy calls; ground-truth refreshes and query sweeps are bracketed out
of the clock.  Memory is reported as vertex and edge counts, not process RSS.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .datasets import Dataset, load_dataset
from .deletion import DeletionConfig, delete_point
from .index import BuildParams, HnswIndex, SearchParams

_ALPHA_DEFAULTS = (("sift", 0.6), ("gist", 0.4), ("mpnet", 1.2), ("minilm", 1.2))
FRESH_PRUNE_ALPHA = 1.2


@dataclass
class MetricRow:
    """One experiment sample."""

    step: int
    points_remaining: int
    recall_at_10: float
    distance_computations: float
    deletion_seconds: float
    bottom_layer_edges: int
    vertex_count: int


@dataclass
class ExperimentConfig:
    """Everything a driver needs; flags, env vars and config files mirror this."""

    dataset: Optional[str] = None
    queries: Optional[str] = None
    kind: str = "fvecs"
    subsample: int = 10_000
    query_count: int = 1_000
    dim: int = 128
    delete_fraction: float = 0.8
    batch_fraction: float = 0.008
    strategy: str = "spatch_pernode"
    alpha: Optional[float] = None
    r_hat_delete: float = 1.0
    keep_existing: bool = True
    m: int = 32
    ef_construction: int = 64
    selection: str = "top_m"
    mode: str = "greedy"
    ef: int = 64
    r_hat: float = 15.0
    k: int = 10
    seed: int = 0
    rounds: int = 10
    round_fraction: float = 0.1
    horizon_seconds: int = 3600
    mean_lifetime_seconds: float = 600.0
    sample_interval_seconds: int = 600
    output: Optional[str] = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if not 0 < self.delete_fraction <= 1:
            raise ValueError("delete_fraction must lie in (0, 1]")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")
        if self.format not in ("csv", "json"):
            raise ValueError(f"unknown report format {self.format!r}")

    def resolved_alpha(self, dataset_name: str) -> float:
        """Per-dataset fan-out default; unknown data behaves like SIFT."""
        if self.alpha is not None:
            return self.alpha
        lowered = dataset_name.lower()
        for token, value in _ALPHA_DEFAULTS:
            if token in lowered:
                return value
        return 0.6

    def build_params(self) -> BuildParams:
        return BuildParams(m=self.m, ef_construction=self.ef_construction, selection=self.selection)

    def search_params(self) -> SearchParams:
        return SearchParams(mode=self.mode, ef=self.ef, k=self.k, r_hat=self.r_hat, seed=self.seed)

    def deletion_config(self, dataset_name: str) -> DeletionConfig:
        if self.strategy == "fresh":
            alpha = self.alpha if self.alpha is not None else FRESH_PRUNE_ALPHA
        else:
            alpha = self.resolved_alpha(dataset_name)
        return DeletionConfig(
            strategy=self.strategy,
            alpha=alpha,
            r_hat_delete=self.r_hat_delete,
            keep_existing=self.keep_existing,
        )


# --------------------------------------------------------------- oracles

def brute_force_topk(
    base: np.ndarray,
    queries: np.ndarray,
    k: int,
    alive_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Exact k nearest rows by squared Euclidean distance, ties by lowest id.

    This is the ground-truth oracle for every recall number in the suite.
    """
    if alive_mask is None:
        alive = np.arange(len(base))
    else:
        alive = np.flatnonzero(alive_mask)
    if k > len(alive):
        raise ValueError(f"k={k} exceeds {len(alive)} alive points")
    sub = base[alive].astype(np.float64)
    sub_sq = np.einsum("ij,ij->i", sub, sub)
    out = np.empty((len(queries), k), dtype=np.int64)
    chunk = max(1, int(2e7) // max(len(alive), 1))
    qs = queries.astype(np.float64)
    for start in range(0, len(qs), chunk):
        block = qs[start : start + chunk]
        d = sub_sq[None, :] - 2.0 * (block @ sub.T)
        for i in range(len(block)):
            order = np.lexsort((alive, d[i]))[:k]
            out[start + i] = alive[order]
    return out


def recall_at_k(result_ids: list[int], truth_ids: np.ndarray, k: int) -> float:
    """|result ∩ truth| / k; the truth list must have exactly ``k`` entries."""
    if len(truth_ids) != k:
        raise ValueError(f"truth list has {len(truth_ids)} entries, expected {k}")
    return len(set(result_ids) & set(int(t) for t in truth_ids)) / k


# ------------------------------------------------------------- experiment

class BenchContext:
    """A built index plus the row <-> node bookkeeping the drivers mutate."""

    def __init__(self, cfg: ExperimentConfig, dataset: Dataset, index: HnswIndex):
        self.cfg = cfg
        self.dataset = dataset
        self.index = index
        n = len(dataset.base)
        self.row_to_node = np.arange(n, dtype=np.int64)
        self.node_to_row = {i: i for i in range(n)}
        self.alive = np.ones(n, dtype=bool)
        self.deletion_seconds = 0.0

    def copy(self, cfg: Optional[ExperimentConfig] = None) -> "BenchContext":
        dup = BenchContext.__new__(BenchContext)
        dup.cfg = cfg if cfg is not None else self.cfg
        dup.dataset = self.dataset
        dup.index = self.index.copy()
        dup.row_to_node = self.row_to_node.copy()
        dup.node_to_row = dict(self.node_to_row)
        dup.alive = self.alive.copy()
        dup.deletion_seconds = self.deletion_seconds
        return dup

    def delete_row(self, row: int, dcfg: DeletionConfig) -> None:
        node = int(self.row_to_node[row])
        if node < 0:
            raise ValueError(f"row {row} is already deleted")
        start = time.perf_counter()
        delete_point(self.index, node, dcfg)
        self.deletion_seconds += time.perf_counter() - start
        self.alive[row] = False
        self.row_to_node[row] = -1
        self.node_to_row.pop(node, None)

    def reinsert_row(self, row: int) -> None:
        node = self.index.add(self.dataset.base[row])
        self.row_to_node[row] = node
        self.node_to_row[node] = row
        self.alive[row] = True


def build_context(cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> BenchContext:
    """Load data and insert every base row, ids matching row order."""
    if dataset is None:
        dataset = load_dataset(
            cfg.dataset, cfg.kind, cfg.subsample, cfg.query_count, cfg.seed,
            query_path=cfg.queries, dim=cfg.dim,
        )
    index = HnswIndex(dataset.dim, cfg.build_params(), seed=cfg.seed)
    for row in range(len(dataset.base)):
        index.add(dataset.base[row])
    return BenchContext(cfg, dataset, index)


def measure(ctx: BenchContext, step: int, k_override: Optional[int] = None) -> MetricRow:
    """Ground truth over survivors, then the fixed query sweep."""
    cfg = ctx.cfg
    k = k_override if k_override is not None else cfg.k
    truth = brute_force_topk(ctx.dataset.base, ctx.dataset.queries, k, ctx.alive)
    params = replace(cfg.search_params(), k=k, ef=max(cfg.ef, k))
    recalls = np.empty(len(ctx.dataset.queries))
    comps = np.empty(len(ctx.dataset.queries))
    for qi, q in enumerate(ctx.dataset.queries):
        rng = np.random.default_rng([cfg.seed, step, qi]) if cfg.mode == "softmax" else None
        res = ctx.index.search(q, params, rng=rng)
        rows = [ctx.node_to_row[node] for node in res.ids if node in ctx.node_to_row]
        recalls[qi] = recall_at_k(rows, truth[qi], k)
        comps[qi] = res.distance_computations
    graph = ctx.index.graph
    return MetricRow(
        step=step,
        points_remaining=int(ctx.alive.sum()),
        recall_at_10=float(recalls.mean()),
        distance_computations=float(comps.mean()),
        deletion_seconds=ctx.deletion_seconds,
        bottom_layer_edges=graph.edge_count(0) if graph.num_layers else 0,
        vertex_count=graph.vertex_count(),
    )


def _flush_partial(cfg: ExperimentConfig, rows: list[MetricRow]) -> None:
    if cfg.output and rows:
        emit_report(rows, cfg.output, cfg.format)


def run_mass_deletion(
    cfg: ExperimentConfig, ctx: Optional[BenchContext] = None
) -> list[MetricRow]:
    """Delete a seeded random ``delete_fraction`` of the points in batches,
    measuring after each batch.  Batch size must divide the total."""
    if ctx is None:
        ctx = build_context(cfg)
    n = len(ctx.dataset.base)
    total = int(round(cfg.delete_fraction * n))
    batch = int(round(cfg.batch_fraction * n))
    if batch < 1 or total % batch != 0:
        raise ValueError(f"batch size {batch} must divide total deletions {total}")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)[:total]
    dcfg = None if cfg.strategy == "rebuild" else cfg.deletion_config(ctx.dataset.name)
    rows: list[MetricRow] = []
    try:
        for b in range(total // batch):
            batch_rows = order[b * batch : (b + 1) * batch]
            if cfg.strategy == "rebuild":
                ctx.alive[batch_rows] = False
                start = time.perf_counter()
                ctx.index = HnswIndex(ctx.dataset.dim, cfg.build_params(), seed=cfg.seed)
                ctx.row_to_node.fill(-1)
                ctx.node_to_row.clear()
                for row in np.flatnonzero(ctx.alive):
                    node = ctx.index.add(ctx.dataset.base[row])
                    ctx.row_to_node[row] = node
                    ctx.node_to_row[node] = int(row)
                ctx.deletion_seconds += time.perf_counter() - start
            else:
                for row in batch_rows:
                    ctx.delete_row(int(row), dcfg)
            rows.append(measure(ctx, b + 1))
    except Exception:
        _flush_partial(cfg, rows)
        raise
    _flush_partial(cfg, rows)
    return rows


def run_steady_state(
    cfg: ExperimentConfig, ctx: Optional[BenchContext] = None
) -> list[MetricRow]:
    """Delete a fresh ``round_fraction`` slice then reinsert it, ``rounds``
    times; the slices partition the id space so every point churns once."""
    if ctx is None:
        ctx = build_context(cfg)
    n = len(ctx.dataset.base)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    per_round = int(round(cfg.round_fraction * n))
    if per_round * cfg.rounds > n:
        raise ValueError("rounds * round_fraction exceeds the dataset")
    dcfg = cfg.deletion_config(ctx.dataset.name)
    rows: list[MetricRow] = []
    try:
        for r in range(cfg.rounds):
            chunk = order[r * per_round : (r + 1) * per_round]
            for row in chunk:
                ctx.delete_row(int(row), dcfg)
            for row in chunk:
                ctx.reinsert_row(int(row))
            rows.append(measure(ctx, r + 1))
    except Exception:
        _flush_partial(cfg, rows)
        raise
    _flush_partial(cfg, rows)
    return rows


def run_turnover(
    cfg: ExperimentConfig, ctx: Optional[BenchContext] = None
) -> list[MetricRow]:
    """Discrete-event churn: one insertion per simulated second up to the
    horizon, exponential lifetimes, deletions on expiry, then a pure-deletion
    tail until everything is gone.  Samples every ``sample_interval_seconds``
    while at least one point is alive."""
    import heapq

    if ctx is None:
        dataset = load_dataset(
            cfg.dataset, cfg.kind, max(cfg.subsample, cfg.horizon_seconds),
            cfg.query_count, cfg.seed, query_path=cfg.queries, dim=cfg.dim,
        )
        index = HnswIndex(dataset.dim, cfg.build_params(), seed=cfg.seed)
        ctx = BenchContext(cfg, dataset, index)
        ctx.alive[:] = False
        ctx.row_to_node.fill(-1)
        ctx.node_to_row.clear()
    if len(ctx.dataset.base) < cfg.horizon_seconds:
        raise ValueError("vector stream exhausted before the insertion horizon")
    rng = np.random.default_rng(cfg.seed)
    dcfg = cfg.deletion_config(ctx.dataset.name)
    expiries: list[tuple[float, int]] = []
    rows: list[MetricRow] = []
    step = 0

    def sample_tick() -> None:
        nonlocal step
        alive = int(ctx.alive.sum())
        if alive < 1:
            return
        step += 1
        rows.append(measure(ctx, step, k_override=min(cfg.k, alive)))

    try:
        for t in range(cfg.horizon_seconds):
            while expiries and expiries[0][0] <= t:
                _, row = heapq.heappop(expiries)
                if ctx.alive[row]:
                    ctx.delete_row(row, dcfg)
            ctx.reinsert_row(t)
            heapq.heappush(expiries, (t + rng.exponential(cfg.mean_lifetime_seconds), t))
            if (t + 1) % cfg.sample_interval_seconds == 0:
                sample_tick()
        tick = cfg.horizon_seconds
        while expiries:
            tick += cfg.sample_interval_seconds
            while expiries and expiries[0][0] <= tick:
                _, row = heapq.heappop(expiries)
                if ctx.alive[row]:
                    ctx.delete_row(row, dcfg)
            sample_tick()
    except Exception:
        _flush_partial(cfg, rows)
        raise
    _flush_partial(cfg, rows)
    return rows


@dataclass
class RhatRow:
    """One sharpness setting: how greedy the walk was and what it recalled."""

    r_hat: float
    greedy_step_frequency: float
    recall_at_10: float
    distance_computations: float


def run_rhat_sweep(
    cfg: ExperimentConfig,
    rhat_values: list[float],
    n_seeds: int = 1,
    ctx: Optional[BenchContext] = None,
) -> list[RhatRow]:
    """Softmax query sweep over sharpness values on a fixed index.

    Greedy-step frequency is the fraction of multi-candidate walk pops whose
    sample coincided with the argmin candidate, pooled over queries and seeds;
    in the flat limit it approaches the uniform-sampling baseline.
    """
    if ctx is None:
        ctx = build_context(cfg)
    truth = brute_force_topk(ctx.dataset.base, ctx.dataset.queries, cfg.k, ctx.alive)
    out: list[RhatRow] = []
    for r_hat in rhat_values:
        params = SearchParams(mode="softmax", ef=cfg.ef, k=cfg.k, r_hat=r_hat)
        pops = 0
        hits = 0
        recalls = []
        comps = []
        for s in range(n_seeds):
            for qi, q in enumerate(ctx.dataset.queries):
                rng = np.random.default_rng([cfg.seed, s, qi])
                res = ctx.index.search(q, params, rng=rng)
                pops += res.softmax_pops
                hits += res.greedy_pops
                rows = [ctx.node_to_row[v] for v in res.ids if v in ctx.node_to_row]
                recalls.append(recall_at_k(rows, truth[qi], cfg.k))
                comps.append(res.distance_computations)
        out.append(
            RhatRow(
                r_hat=r_hat,
                greedy_step_frequency=hits / pops if pops else 1.0,
                recall_at_10=float(np.mean(recalls)),
                distance_computations=float(np.mean(comps)),
            )
        )
    return out


# --------------------------------------------------------------- reporting

def _round6(value: float) -> float:
    return float(f"{value:.6g}")


def emit_report(rows: list, path: str, fmt: str = "csv") -> None:
    """Write dataclass rows as CSV (header = field names) or a JSON array.

    Field order follows the dataclass; floats carry six significant digits in
    both formats so the encodings agree value for value.
    """
    if not rows:
        raise ValueError("no rows to report")
    names = [f.name for f in fields(type(rows[0]))]
    records = []
    for row in rows:
        rec = {}
        for name in names:
            value = getattr(row, name)
            rec[name] = _round6(value) if isinstance(value, float) else value
        records.append(rec)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=names)
            writer.writeheader()
            writer.writerows(records)
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump(records, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path: str, fmt: str = "csv", row_type: type = MetricRow) -> list:
    """Parse a report back into rows; inverse of ``emit_report``."""
    specs = {f.name: f.type for f in fields(row_type)}
    if fmt == "csv":
        with open(path, newline="") as fh:
            raw = list(csv.DictReader(fh))
    elif fmt == "json":
        with open(path) as fh:
            raw = json.load(fh)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    rows = []
    for rec in raw:
        kwargs = {}
        for name, typ in specs.items():
            caster = float if "float" in str(typ) else int
            kwargs[name] = caster(rec[name])
        rows.append(row_type(**kwargs))
    return rows
