"""Configuration-driven evaluation harness.

Builds retrieval pools once per query, applies a grid of fusion cells
(strategy x alpha x beta x pool cap x normalizer x temperature, optionally
followed by mean-field reranking), scores every query on the tune/test split,
and pairs each cell against the vector-only baseline. Reports are written as
CSV and JSON and are byte-deterministic for a given config and inputs; wall
times go to a separate volatile file.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .calibration import DEFAULT_EPSILON
from .corpus import (
    Corpus,
    EmbeddingStore,
    QuerySet,
    load_corpus,
    load_embeddings,
    load_queries,
    md5_split,
)
from .fusion import FusedEntry, FusedRanking, FusionConfig, fuse_score_lists
from .graph import EntityGraph, build_entity_graph, link_synonyms, seed_entities_for_query
from .ising import IsingConfig, build_coupling, mean_field_rerank
from .metrics import PairedComparison, QueryOutcome, metric_selector, pair_outcomes
from .retrieval import PPRConfig, ScoreList, cap_pool, graph_passage_scores, ppr, vector_topk
from .stats import mcnemar_exact, needs_haldane, odds_ratio, wilson_ci

BASELINE_CELL_ID = "vector_only"


def _fmt(value: float | int | None) -> str:
    if value is None:
        return "none"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


@dataclass(frozen=True)
class CellConfig:
    """One strategy/configuration grid cell."""

    strategy: str = "thermo"
    alpha: float = 0.7
    beta: float = 0.0
    dk: int | None = None
    normalizer: str = "pit"
    temperature: float | str = "auto"
    epsilon: float = DEFAULT_EPSILON
    params: Mapping[str, float] = field(default_factory=dict)
    ising: IsingConfig | None = None

    def fusion_config(self, k: int) -> FusionConfig:
        return FusionConfig(strategy=self.strategy, alpha=self.alpha, beta=self.beta, k=k, **dict(self.params))

    @property
    def cell_id(self) -> str:
        parts = [
            self.strategy,
            f"a{_fmt(self.alpha)}",
            f"b{_fmt(self.beta)}",
            f"dk{_fmt(self.dk)}",
            self.normalizer,
            f"T{_fmt(self.temperature) if self.temperature != 'auto' else 'auto'}",
        ]
        for key in sorted(self.params):
            parts.append(f"{key}{_fmt(self.params[key])}")
        if self.ising is not None:
            parts.append(
                f"isingJ{_fmt(self.ising.coupling)}"
                f"T{_fmt(self.ising.temperature)}"
                f"bl{_fmt(self.ising.blend)}"
            )
        return "_".join(parts)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "CellConfig":
        ising = raw.get("ising")
        return cls(
            strategy=raw.get("strategy", "thermo"),
            alpha=float(raw.get("alpha", 0.7)),
            beta=float(raw.get("beta", 0.0)),
            dk=(None if raw.get("dk") is None else int(raw["dk"])),
            normalizer=raw.get("normalizer", "pit"),
            temperature=(
                "auto"
                if raw.get("temperature", "auto") == "auto"
                else float(raw["temperature"])
            ),
            epsilon=float(raw.get("epsilon", DEFAULT_EPSILON)),
            params=dict(raw.get("params", {})),
            ising=(None if ising is None else IsingConfig(**ising)),
        )

    def to_dict(self) -> dict:
        out = {
            "strategy": self.strategy,
            "alpha": self.alpha,
            "beta": self.beta,
            "dk": self.dk,
            "normalizer": self.normalizer,
            "temperature": self.temperature,
            "epsilon": self.epsilon,
            "params": dict(self.params),
        }
        if self.ising is not None:
            out["ising"] = {
                "coupling": self.ising.coupling,
                "temperature": self.ising.temperature,
                "blend": self.ising.blend,
                "max_iterations": self.ising.max_iterations,
                "tol": self.ising.tol,
                "damping_mix": self.ising.damping_mix,
            }
        else:
            out["ising"] = None
        return out


@dataclass
class RunConfig:
    passages: str
    annotations: str
    queries: str
    embeddings: str
    entity_embeddings: str | None = None
    tune_fraction: float = 0.5
    split: str = "tune"  # tune | test | all
    n_v: int = 10
    ppr: PPRConfig = field(default_factory=PPRConfig)
    synonym_threshold: float | None = None
    ks: tuple[int, ...] = (5, 10)
    pair_metric: str = "lasthop"
    pair_k: int = 10
    seed: int = 0
    cells: tuple[CellConfig, ...] = (CellConfig(),)

    def __post_init__(self) -> None:
        if self.split not in ("tune", "test", "all"):
            raise ValueError("split must be one of tune, test, all")
        if self.pair_k not in self.ks:
            raise ValueError("pair_k must be one of ks")
        ids = [c.cell_id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise ValueError("cells must have distinct configurations")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RunConfig":
        raw = dict(raw)
        cells = raw.pop("cells", None)
        ppr_raw = raw.pop("ppr", None)
        config = cls(
            passages=raw.pop("passages"),
            annotations=raw.pop("annotations"),
            queries=raw.pop("queries"),
            embeddings=raw.pop("embeddings"),
            entity_embeddings=raw.pop("entity_embeddings", None),
            tune_fraction=float(raw.pop("tune_fraction", 0.5)),
            split=raw.pop("split", "tune"),
            n_v=int(raw.pop("n_v", 10)),
            ppr=PPRConfig(**ppr_raw) if ppr_raw else PPRConfig(),
            synonym_threshold=raw.pop("synonym_threshold", None),
            ks=tuple(raw.pop("ks", (5, 10))),
            pair_metric=raw.pop("pair_metric", "lasthop"),
            pair_k=int(raw.pop("pair_k", 10)),
            seed=int(raw.pop("seed", 0)),
            cells=tuple(
                CellConfig.from_dict(c) for c in (cells if cells is not None else [{}])
            ),
        )
        if raw:
            raise ValueError(f"unknown run config keys: {sorted(raw)}")
        return config

    @classmethod
    def from_json(cls, path, overrides: Mapping | None = None) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "passages": self.passages,
            "annotations": self.annotations,
            "queries": self.queries,
            "embeddings": self.embeddings,
            "entity_embeddings": self.entity_embeddings,
            "tune_fraction": self.tune_fraction,
            "split": self.split,
            "n_v": self.n_v,
            "ppr": {
                "damping": self.ppr.damping,
                "epsilon": self.ppr.epsilon,
                "max_iterations": self.ppr.max_iterations,
            },
            "synonym_threshold": self.synonym_threshold,
            "ks": list(self.ks),
            "pair_metric": self.pair_metric,
            "pair_k": self.pair_k,
            "seed": self.seed,
            "cells": [c.to_dict() for c in self.cells],
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class RetrievalContext:
    """Loaded inputs plus per-query retrieval caches shared across cells."""

    def __init__(
        self,
        corpus: Corpus,
        queries: QuerySet,
        embeddings: EmbeddingStore,
        graph: EntityGraph,
        split: Mapping[str, str],
        n_v: int,
        ppr_config: PPRConfig,
    ):
        self.corpus = corpus
        self.queries = queries
        self.embeddings = embeddings
        self.graph = graph
        self.split = dict(split)
        self.n_v = n_v
        self.ppr_config = ppr_config
        # vector retrieval searches passages only; the embedding file may
        # also carry query vectors
        self._passage_store = EmbeddingStore(dimension=embeddings.dimension)
        for pid in corpus.passage_ids:
            if pid not in embeddings:
                raise ValueError(f"no embedding for passage {pid!r}")
            self._passage_store.add(pid, embeddings.get(pid))
        self._vector_cache: dict[str, ScoreList] = {}
        self._graph_cache: dict[str, ScoreList] = {}
        self.seed_misses: dict[str, int] = {}

    @classmethod
    def load(cls, config: RunConfig) -> "RetrievalContext":
        corpus = load_corpus(config.passages, config.annotations)
        queries = load_queries(config.queries, corpus)
        embeddings = load_embeddings(config.embeddings)
        graph = build_entity_graph(corpus)
        if config.synonym_threshold is not None:
            if config.entity_embeddings is None:
                raise ValueError("synonym_threshold set but no entity_embeddings path given")
            entity_store = load_embeddings(config.entity_embeddings)
            graph = link_synonyms(graph, entity_store, config.synonym_threshold)
        split = md5_split(queries, config.tune_fraction)
        return cls(
            corpus=corpus,
            queries=queries,
            embeddings=embeddings,
            graph=graph,
            split=split,
            n_v=config.n_v,
            ppr_config=config.ppr,
        )

    def split_ids(self, split: str) -> tuple[str, ...]:
        if split == "all":
            return self.queries.query_ids
        return tuple(q for q in self.queries.query_ids if self.split[q] == split)

    def vector_list(self, query_id: str) -> ScoreList:
        if query_id not in self._vector_cache:
            q_vec = self.embeddings.get(query_id)
            self._vector_cache[query_id] = vector_topk(q_vec, self._passage_store, self.n_v)
        return self._vector_cache[query_id]

    def graph_list(self, query_id: str) -> ScoreList:
        """Uncapped graph score list; empty when the query has no usable seeds."""
        if query_id not in self._graph_cache:
            query = self.queries[query_id]
            seeds, misses = seed_entities_for_query(query, self.graph)
            self.seed_misses[query_id] = misses
            entity_scores = ppr(self.graph, seeds, self.ppr_config) if seeds else {}
            if entity_scores:
                self._graph_cache[query_id] = graph_passage_scores(entity_scores, self.graph)
            else:
                self._graph_cache[query_id] = ScoreList(system="graph", entries=())
        return self._graph_cache[query_id]


def fused_ranking_for_query(
    ctx: RetrievalContext, cell: CellConfig, query_id: str, k: int
) -> FusedRanking:
    """Retrieval pools -> pool cap -> calibration -> fusion -> optional rerank.

    An empty graph list (no usable seeds, or no reachable passages) falls
    back to fusing the vector side alone, i.e. vector-only ordering.
    """
    v = ctx.vector_list(query_id)
    g = ctx.graph_list(query_id)
    if g.entries:
        g = cap_pool(g, v, cell.dk)
    fused = fuse_score_lists(
        v,
        g if g.entries else None,
        cell.fusion_config(k),
        normalizer=cell.normalizer,
        temperature=cell.temperature,
        epsilon=cell.epsilon,
    )
    if cell.ising is not None and fused.entries:
        coupling = build_coupling(fused, ctx.graph)
        fused = mean_field_rerank(fused, coupling, cell.ising).ranking
    return fused


def vector_only_ranking(ctx: RetrievalContext, query_id: str, k: int) -> FusedRanking:
    v = ctx.vector_list(query_id)
    return FusedRanking(
        entries=tuple(
            FusedEntry(passage_id=pid, score=float(s), in_vector=True, in_graph=False)
            for pid, s in v.entries[:k]
        )
    )


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    cell_id: str
    retrieved: tuple[str, ...]
    outcome: QueryOutcome
    wall_time_ms: float


@dataclass(frozen=True)
class ReportRow:
    split: str
    cell_id: str
    strategy: str
    alpha: float
    beta: float
    dk: int | None
    normalizer: str
    temperature: float | str
    n: int
    failures: int
    metrics: Mapping[str, float]
    pairing: PairedComparison
    p_value: float
    wilson_low: float
    wilson_high: float
    odds: float | None
    haldane: bool


@dataclass
class EvalReport:
    config_hash: str
    pair_metric: str
    pair_k: int
    ks: tuple[int, ...]
    rows: list[ReportRow]
    records: list[RunRecord]
    failures: dict[str, list[tuple[str, str]]]


def _evaluate_cell(
    ctx: RetrievalContext,
    cell: CellConfig | None,
    qids: Sequence[str],
    ks: Sequence[int],
) -> tuple[dict[str, QueryOutcome], list[RunRecord], list[tuple[str, str]]]:
    """cell=None evaluates the vector-only baseline."""
    k_max = max(ks)
    outcomes: dict[str, QueryOutcome] = {}
    records: list[RunRecord] = []
    failures: list[tuple[str, str]] = []
    cell_id = cell.cell_id if cell is not None else BASELINE_CELL_ID
    for qid in qids:
        started = time.perf_counter()
        try:
            if cell is None:
                ranking = vector_only_ranking(ctx, qid, k_max)
            else:
                ranking = fused_ranking_for_query(ctx, cell, qid, k_max)
            retrieved = ranking.ids()
            outcome = QueryOutcome.evaluate(
                qid, retrieved, ctx.queries[qid].gold_chain, ks
            )
        except Exception as exc:  # per-query failure: recorded, excluded, footnoted
            failures.append((qid, f"{type(exc).__name__}: {exc}"))
            continue
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        outcomes[qid] = outcome
        records.append(
            RunRecord(
                query_id=qid,
                cell_id=cell_id,
                retrieved=retrieved,
                outcome=outcome,
                wall_time_ms=elapsed_ms,
            )
        )
    return outcomes, records, failures


def _aggregate_row(
    split: str,
    cell: CellConfig | None,
    outcomes: Mapping[str, QueryOutcome],
    baseline: Mapping[str, QueryOutcome],
    failures: int,
    ks: Sequence[int],
    pair_metric: str,
    pair_k: int,
) -> ReportRow:
    shared = sorted(set(outcomes) & set(baseline))
    select = metric_selector(pair_metric, pair_k)
    pairing = pair_outcomes(
        [baseline[q] for q in shared], [outcomes[q] for q in shared], select
    )
    n = len(shared)
    metrics = {}
    for metric in ("lasthop", "fullsup", "any", "full"):
        for k in ks:
            hits = sum(1 for q in shared if outcomes[q].hit(metric, k))
            metrics[f"{metric}@{k}"] = hits / n if n else 0.0
    method_success = sum(1 for q in shared if select(outcomes[q]))
    baseline_success = sum(1 for q in shared if select(baseline[q]))
    p = mcnemar_exact(pairing.wins, pairing.losses)
    if n:
        lo, hi = wilson_ci(method_success, n)
        odds = odds_ratio(method_success, baseline_success, n)
        haldane = needs_haldane(method_success, baseline_success, n)
    else:
        lo = hi = 0.0
        odds, haldane = None, False
    return ReportRow(
        split=split,
        cell_id=cell.cell_id if cell is not None else BASELINE_CELL_ID,
        strategy=cell.strategy if cell is not None else "vector",
        alpha=cell.alpha if cell is not None else 1.0,
        beta=cell.beta if cell is not None else 0.0,
        dk=cell.dk if cell is not None else None,
        normalizer=cell.normalizer if cell is not None else "pit",
        temperature=cell.temperature if cell is not None else "auto",
        n=n,
        failures=failures,
        metrics=metrics,
        pairing=pairing,
        p_value=p,
        wilson_low=lo,
        wilson_high=hi,
        odds=odds,
        haldane=haldane,
    )


def run_eval(
    config: RunConfig,
    ctx: RetrievalContext | None = None,
    cells: Sequence[CellConfig] | None = None,
) -> EvalReport:
    """Evaluate every cell against the vector-only baseline on the configured split(s)."""
    if ctx is None:
        ctx = RetrievalContext.load(config)
    cells = list(config.cells if cells is None else cells)
    splits = ("tune", "test") if config.split == "all" else (config.split,)

    rows: list[ReportRow] = []
    records: list[RunRecord] = []
    failure_log: dict[str, list[tuple[str, str]]] = {}
    for split in splits:
        qids = ctx.split_ids(split)
        base_outcomes, base_records, base_failures = _evaluate_cell(
            ctx, None, qids, config.ks
        )
        records.extend(base_records)
        if base_failures:
            failure_log.setdefault(BASELINE_CELL_ID, []).extend(base_failures)
        rows.append(
            _aggregate_row(
                split, None, base_outcomes, base_outcomes, len(base_failures),
                config.ks, config.pair_metric, config.pair_k,
            )
        )
        for cell in cells:
            outcomes, cell_records, failures = _evaluate_cell(ctx, cell, qids, config.ks)
            records.extend(cell_records)
            if failures:
                failure_log.setdefault(cell.cell_id, []).extend(failures)
            rows.append(
                _aggregate_row(
                    split, cell, outcomes, base_outcomes, len(failures),
                    config.ks, config.pair_metric, config.pair_k,
                )
            )
    rows.sort(key=lambda r: (r.split, r.cell_id))
    return EvalReport(
        config_hash=config.config_hash(),
        pair_metric=config.pair_metric,
        pair_k=config.pair_k,
        ks=config.ks,
        rows=rows,
        records=records,
        failures=failure_log,
    )


# ---------------------------------------------------------------------------
# Tune-winner selection
# ---------------------------------------------------------------------------


def select_tune_winner(
    rows: Sequence[ReportRow],
    metric: str,
    rule: str = "max",
) -> str:
    """Pick a cell id from tune-split rows.

    rule="max" maximizes the metric; rule="safe" minimizes losses among cells
    with at least one win. Ties break by smaller dk (uncapped sorts last),
    then larger alpha, then cell id.
    """
    candidates = [r for r in rows if r.cell_id != BASELINE_CELL_ID]
    if not candidates:
        raise ValueError("no cells to select from")

    def tiebreak(r: ReportRow):
        dk = r.dk if r.dk is not None else float("inf")
        return (dk, -r.alpha, r.cell_id)

    if rule == "max":
        best = min(candidates, key=lambda r: (-r.metrics[metric],) + tiebreak(r))
        return best.cell_id
    if rule == "safe":
        winners = [r for r in candidates if r.pairing.wins > 0]
        if not winners:
            raise ValueError("safe rule: no cell has wins > 0")
        best = min(winners, key=lambda r: (r.pairing.losses,) + tiebreak(r))
        return best.cell_id
    raise ValueError(f"unknown selection rule {rule!r}")


# ---------------------------------------------------------------------------
# Grid sweep
# ---------------------------------------------------------------------------

# Every alpha / dk / beta value named anywhere in the source material.
DEFAULT_GRID = {
    "strategies": ["thermo"],
    "alphas": [0.3, 0.4, 0.5, 0.7, 1.0],
    "betas": [0.0, 0.5, 1.0, 1.5],
    "dks": [None, 0, 20, 30, 50],
    "normalizers": ["pit"],
    "temperatures": ["auto"],
    "ising": [None],
}


@dataclass(frozen=True)
class GridSpec:
    strategies: tuple[str, ...] = ("thermo",)
    alphas: tuple[float, ...] = (0.3, 0.4, 0.5, 0.7, 1.0)
    betas: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5)
    dks: tuple[int | None, ...] = (None, 0, 20, 30, 50)
    normalizers: tuple[str, ...] = ("pit",)
    temperatures: tuple[float | str, ...] = ("auto",)
    ising: tuple[Mapping | None, ...] = (None,)

    @classmethod
    def from_json(cls, path) -> "GridSpec":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(DEFAULT_GRID)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        defaults = DEFAULT_GRID | raw
        return cls(
            strategies=tuple(defaults["strategies"]),
            alphas=tuple(defaults["alphas"]),
            betas=tuple(defaults["betas"]),
            dks=tuple(defaults["dks"]),
            normalizers=tuple(defaults["normalizers"]),
            temperatures=tuple(defaults["temperatures"]),
            ising=tuple(
                None if cell is None else dict(cell) for cell in defaults["ising"]
            ),
        )

    def expand(self) -> list[CellConfig]:
        cells = []
        for strategy in self.strategies:
            for alpha in self.alphas:
                for beta in self.betas:
                    for dk in self.dks:
                        for normalizer in self.normalizers:
                            for temperature in self.temperatures:
                                for ising_raw in self.ising:
                                    cells.append(
                                        CellConfig(
                                            strategy=strategy,
                                            alpha=alpha,
                                            beta=beta,
                                            dk=dk,
                                            normalizer=normalizer,
                                            temperature=temperature,
                                            ising=(
                                                None
                                                if ising_raw is None
                                                else IsingConfig(**ising_raw)
                                            ),
                                        )
                                    )
        return cells

    def size(self) -> int:
        return (
            len(self.strategies)
            * len(self.alphas)
            * len(self.betas)
            * len(self.dks)
            * len(self.normalizers)
            * len(self.temperatures)
            * len(self.ising)
        )


def cell_tier(cell: CellConfig) -> str:
    if cell.ising is not None:
        return "reranking"
    if cell.strategy in ("thermo", "rrf", "linear"):
        return "fusion"
    return "research"


@dataclass(frozen=True)
class TierRow:
    tier: str
    n_configs: int
    best_wins: int
    max_metric: float


@dataclass
class SweepResult:
    tune_report: EvalReport
    tiers: list[TierRow]
    winner_cell_id: str
    test_report: EvalReport | None


def sweep(
    config: RunConfig,
    grid: GridSpec,
    cell_cap: int = 1000,
    confirm: bool = False,
    winner_rule: str = "max",
    ctx: RetrievalContext | None = None,
) -> SweepResult:
    """Run the grid on the tune split; optionally confirm the winner on test.

    Test outcomes are computed only for the selected winner, and only when
    confirm=True, preserving tune/test isolation.
    """
    if grid.size() > cell_cap:
        raise ValueError(
            f"grid has {grid.size()} cells, above the cap of {cell_cap}; "
            "shrink the grid or raise --cell-cap"
        )
    cells = grid.expand()
    if ctx is None:
        ctx = RetrievalContext.load(config)
    tune_config = _with(config, split="tune", cells=tuple(cells))
    tune_report = run_eval(tune_config, ctx=ctx)

    metric_key = f"{config.pair_metric}@{config.pair_k}"
    tiers: dict[str, list[ReportRow]] = {}
    by_id = {c.cell_id: c for c in cells}
    for row in tune_report.rows:
        if row.cell_id == BASELINE_CELL_ID:
            continue
        tiers.setdefault(cell_tier(by_id[row.cell_id]), []).append(row)
    tier_rows = [
        TierRow(
            tier=tier,
            n_configs=len(rows),
            best_wins=max(r.pairing.wins for r in rows),
            max_metric=max(r.metrics[metric_key] for r in rows),
        )
        for tier, rows in sorted(tiers.items())
    ]

    winner = select_tune_winner(tune_report.rows, metric_key, rule=winner_rule)
    test_report = None
    if confirm:
        test_config = _with(config, split="test", cells=(by_id[winner],))
        test_report = run_eval(test_config, ctx=ctx)
    return SweepResult(
        tune_report=tune_report,
        tiers=tier_rows,
        winner_cell_id=winner,
        test_report=test_report,
    )


def _with(config: RunConfig, **changes) -> RunConfig:
    raw = config.to_dict()
    raw["cells"] = [c.to_dict() for c in changes.pop("cells", config.cells)]
    raw.update(changes)
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Writers (deterministic CSV / JSON; timings kept separate)
# ---------------------------------------------------------------------------


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def report_csv_text(report: EvalReport) -> str:
    buf = io.StringIO()
    header = [
        "split", "cell_id", "strategy", "alpha", "beta", "dk", "normalizer",
        "temperature", "n", "failures",
    ]
    metric_keys = [f"{m}@{k}" for m in ("lasthop", "fullsup", "any", "full") for k in report.ks]
    header += metric_keys
    header += ["wins", "losses", "both", "neither", "p_value", "wilson_low", "wilson_high", "odds_ratio", "haldane"]
    buf.write(",".join(header) + "\n")
    for row in report.rows:
        cells = [
            row.split,
            row.cell_id,
            row.strategy,
            repr(row.alpha),
            repr(row.beta),
            _fmt(row.dk),
            row.normalizer,
            str(row.temperature),
            str(row.n),
            str(row.failures),
        ]
        cells += [repr(row.metrics[k]) for k in metric_keys]
        cells += [
            str(row.pairing.wins),
            str(row.pairing.losses),
            str(row.pairing.both),
            str(row.pairing.neither),
            repr(row.p_value),
            repr(row.wilson_low),
            repr(row.wilson_high),
            "none" if row.odds is None else repr(row.odds),
            str(row.haldane).lower(),
        ]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def write_report_csv(report: EvalReport, path) -> None:
    _atomic_write(path, report_csv_text(report))


def write_report_json(report: EvalReport, path) -> None:
    payload = {
        "config_hash": report.config_hash,
        "pair_metric": report.pair_metric,
        "pair_k": report.pair_k,
        "ks": list(report.ks),
        "rows": [
            {
                "split": r.split,
                "cell_id": r.cell_id,
                "strategy": r.strategy,
                "alpha": r.alpha,
                "beta": r.beta,
                "dk": r.dk,
                "normalizer": r.normalizer,
                "temperature": r.temperature,
                "n": r.n,
                "failures": r.failures,
                "metrics": dict(r.metrics),
                "wins": r.pairing.wins,
                "losses": r.pairing.losses,
                "both": r.pairing.both,
                "neither": r.pairing.neither,
                "p_value": r.p_value,
                "wilson_low": r.wilson_low,
                "wilson_high": r.wilson_high,
                "odds_ratio": r.odds,
                "haldane": r.haldane,
            }
            for r in report.rows
        ],
        "failures": {
            cell: [{"query_id": q, "error": e} for q, e in items]
            for cell, items in sorted(report.failures.items())
        },
    }
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_records_jsonl(report: EvalReport, path) -> None:
    """Deterministic per-(query, cell) records; timings are written separately."""
    lines = []
    for rec in sorted(report.records, key=lambda r: (r.cell_id, r.query_id)):
        lines.append(
            json.dumps(
                {
                    "query_id": rec.query_id,
                    "cell_id": rec.cell_id,
                    "retrieved": list(rec.retrieved),
                    "lasthop": {str(k): v for k, v in sorted(rec.outcome.lasthop_hit.items())},
                    "fullsup": {str(k): v for k, v in sorted(rec.outcome.fullsup_hit.items())},
                    "any": {str(k): v for k, v in sorted(rec.outcome.any_hit.items())},
                    "full": {str(k): v for k, v in sorted(rec.outcome.full_hit.items())},
                },
                sort_keys=True,
            )
        )
    _atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def write_timings_csv(report: EvalReport, path) -> None:
    """Volatile wall-clock times; excluded from the determinism contract."""
    buf = io.StringIO()
    buf.write("cell_id,query_id,wall_time_ms\n")
    for rec in sorted(report.records, key=lambda r: (r.cell_id, r.query_id)):
        buf.write(f"{rec.cell_id},{rec.query_id},{rec.wall_time_ms:.3f}\n")
    _atomic_write(path, buf.getvalue())


def write_tiers_csv(tiers: Iterable[TierRow], path) -> None:
    buf = io.StringIO()
    buf.write("tier,n_configs,best_wins,max_metric\n")
    for row in tiers:
        buf.write(f"{row.tier},{row.n_configs},{row.best_wins},{repr(row.max_metric)}\n")
    _atomic_write(path, buf.getvalue())
