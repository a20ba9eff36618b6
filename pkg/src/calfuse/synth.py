"""Synthetic multi-hop corpus generator with controlled score regimes.

Embedding geometry is manufactured directly rather than learned. All queries
and passages share a weak "corpus direction" so that non-gold query-passage
cosines cluster in a narrow band (target mean ~0.09, sd ~0.02 by default),
while gold chain passages are placed at controlled alignments to their query:
hop 1 close, later hops progressively farther, the last hop weakly aligned.

Chains are glued together by dedicated bridge entities (hop i and hop i+1
share one), and an anchor entity on hop 1 seeds graph retrieval. A fraction
of bridge mentions (alias_rate) are written as surface variants with
near-identical embeddings, which disconnects the chain in the entity graph
until embedding-based synonym linking repairs it. Distractor passages attach
to a Zipf-weighted topic vocabulary; chain passages additionally spill onto
that vocabulary in proportion to distractor_density, which controls how far
graph retrieval pools balloon.

Everything is deterministic given the seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as scipy_stats

from .calibration import minmax_normalize, pit_normalize
from .corpus import (
    Corpus,
    EmbeddingStore,
    Passage,
    Query,
    QuerySet,
    save_annotations,
    save_embeddings_jsonl,
    save_passages,
    save_queries,
)
from .retrieval import ScoreList



@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_passages: int = 1000
    n_queries: int = 100
    hop_range: tuple[int, int] = (2, 4)
    dimension: int = 2048
    cosine_mean: float = 0.09
    cosine_sd: float = 0.02
    vocab_size: int = 300
    entities_per_passage: tuple[int, int] = (1, 3)
    alias_rate: float = 0.0
    distractor_density: float = 0.5
    zipf_exponent: float = 1.3
    first_hop_alignment: float = 0.55
    last_hop_alignment: tuple[float, float] = (0.10, 0.24)
    alias_cosine: tuple[float, float] = (0.92, 0.98)
    # distractor_density scales the number of anchor-context distractors per
    # query: non-gold passages mentioning the anchor plus topic entities.
    # They bridge each query's anchor into the shared topic web (graph pool
    # growth) and sit at the top of the graph ranking as plausible junk.
    context_passages_max: int = 4
    context_topics: tuple[int, int] = (1, 2)
    seed_bridge_hint: bool = False
    # Optional alignment windows conditioned on chain connectivity. When set,
    # alias-broken chains draw the last-hop alignment from
    # broken_chain_alignment (putting their last hops at marginal vector
    # ranks, the regime graph junk can displace), while intact chains split
    # between a clearly-missed and a clearly-hit window. None falls back to
    # last_hop_alignment for every query.
    broken_chain_alignment: tuple[float, float] | None = None
    intact_weak_alignment: tuple[float, float] = (0.09, 0.132)
    intact_strong_alignment: tuple[float, float] = (0.158, 0.20)
    intact_weak_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.entities_per_passage[1] > self.vocab_size:
            raise ValueError(
                "infeasible config: more entities per passage than vocabulary size"
            )
        if self.entities_per_passage[0] < 0 or self.entities_per_passage[0] > self.entities_per_passage[1]:
            raise ValueError("entities_per_passage must be a (lo, hi) range with 0 <= lo <= hi")
        if not 0.0 <= self.alias_rate <= 1.0:
            raise ValueError("alias_rate must be in [0, 1]")
        if not 0.0 <= self.distractor_density <= 1.0:
            raise ValueError("distractor_density must be in [0, 1]")
        if self.hop_range[0] < 2 or self.hop_range[0] > self.hop_range[1]:
            raise ValueError("hop_range must be (lo, hi) with 2 <= lo <= hi")
        per_query = self.hop_range[1] + self.context_passages_per_query
        if self.n_queries * per_query > self.n_passages:
            raise ValueError(
                "infeasible config: gold chains and context passages may need "
                "more passages than n_passages"
            )

    @property
    def context_passages_per_query(self) -> int:
        return int(round(self.distractor_density * self.context_passages_max))
        if not 0.0 < self.cosine_mean < 1.0:
            raise ValueError("cosine_mean must be in (0, 1)")

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        for key in ("hop_range", "entities_per_passage", "last_hop_alignment", "alias_cosine"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class SynthDataset:
    config: SynthConfig
    corpus: Corpus
    queries: QuerySet
    embeddings: EmbeddingStore
    entity_embeddings: EmbeddingStore

    def write(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        save_passages(self.corpus, outdir / "passages.jsonl")
        save_annotations(self.corpus, outdir / "annotations.jsonl")
        save_queries(self.queries, outdir / "queries.jsonl")
        save_embeddings_jsonl(self.embeddings, outdir / "embeddings.jsonl")
        save_embeddings_jsonl(self.entity_embeddings, outdir / "entity_embeddings.jsonl")
        self.config.to_json(outdir / "synth_config.json")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _orthogonal_residual(rng: np.random.Generator, basis: Sequence[np.ndarray]) -> np.ndarray:
    """Random unit vector orthogonal to the given (orthonormal-ish) directions."""
    g = rng.standard_normal(basis[0].shape[0])
    for b in basis:
        g -= (g @ b) * b
    return _unit(g)


def generate(config: SynthConfig) -> SynthDataset:
    rng = np.random.default_rng(config.seed)
    d = config.dimension
    m = config.cosine_mean

    u0 = _unit(rng.standard_normal(d))
    c0 = math.sqrt(m)
    s0 = math.sqrt(1.0 - c0 * c0)
    # residual cosine noise between two off-axis unit vectors
    resid_var = (1.0 - m) ** 2 / (d - 1)
    sigma_c = math.sqrt(max(0.0, config.cosine_sd**2 - resid_var)) / c0

    # --- topic vocabulary -------------------------------------------------
    vocab = [f"topic {i:04d}" for i in range(config.vocab_size)]
    zipf = (np.arange(config.vocab_size) + 1.0) ** (-config.zipf_exponent)
    zipf /= zipf.sum()
    entity_store = EmbeddingStore(dimension=d)
    for name in vocab:
        entity_store.add(name, rng.standard_normal(d))

    n_context = config.context_passages_per_query

    # --- queries and gold chains ------------------------------------------
    embeddings = EmbeddingStore(dimension=d)
    passages: list[Passage] = []
    queries: list[Query] = []
    pid_counter = 0

    def corpus_typical_vector() -> np.ndarray:
        c_p = float(np.clip(c0 + sigma_c * rng.standard_normal(), 0.05, 0.95))
        return c_p * u0 + math.sqrt(1.0 - c_p * c_p) * _orthogonal_residual(rng, [u0])

    def add_passage(pid: str, mentions: tuple[str, ...], vec: np.ndarray) -> None:
        passages.append(
            Passage(
                id=pid,
                text=f"passage {pid} mentions {', '.join(mentions) or 'nothing'}.",
                entity_mentions=mentions,
            )
        )
        embeddings.add(pid, vec)

    hop_lo, hop_hi = config.hop_range
    for qi in range(config.n_queries):
        qid = f"q{qi:04d}"
        hops = int(rng.integers(hop_lo, hop_hi + 1))
        r_q = _orthogonal_residual(rng, [u0])
        q_vec = c0 * u0 + s0 * r_q
        embeddings.add(qid, q_vec)

        anchor = f"{qid} anchor"
        entity_store.add(anchor, rng.standard_normal(d))
        bridges = [f"{qid} link {i}" for i in range(1, hops)]
        for bridge in bridges:
            entity_store.add(bridge, rng.standard_normal(d))

        # surface used wherever the bridge reappears after its intro passage
        later_surface: dict[str, str] = {}
        aliased: list[bool] = []
        for bridge in bridges:
            if rng.random() < config.alias_rate:
                alias = f"{bridge} alt"
                c = rng.uniform(*config.alias_cosine)
                base = entity_store.get(bridge)
                alias_vec = c * base + math.sqrt(1.0 - c * c) * _orthogonal_residual(rng, [base])
                entity_store.add(alias, alias_vec)
                later_surface[bridge] = alias
                aliased.append(True)
            else:
                later_surface[bridge] = bridge
                aliased.append(False)

        # connectivity to the last hop survives aliases on the final bridge
        # (the last hop also recalls the previous one), so only the leading
        # bridges decide whether the chain is broken
        chain_broken = any(aliased[: max(1, hops - 2)])
        if config.broken_chain_alignment is not None:
            if chain_broken:
                last_a = rng.uniform(*config.broken_chain_alignment)
            elif rng.random() < config.intact_weak_fraction:
                last_a = rng.uniform(*config.intact_weak_alignment)
            else:
                last_a = rng.uniform(*config.intact_strong_alignment)
        else:
            last_a = rng.uniform(*config.last_hop_alignment)
        first_a = config.first_hop_alignment
        u0_perp = (u0 - c0 * q_vec) / s0  # exact: unit, orthogonal to q_vec
        gold_chain = []
        for hop in range(hops):
            a = first_a * (last_a / first_a) ** (hop / (hops - 1))
            a0 = m * (1.0 - a) / (c0 * s0)
            ar = math.sqrt(max(0.0, 1.0 - a * a - a0 * a0))
            resid = _orthogonal_residual(rng, [q_vec, u0_perp])
            vec = a * q_vec + a0 * u0_perp + ar * resid

            # chain backbone: hop i shares bridge i with hop i+1; the final
            # hop also recalls the previous bridge so deep chains keep
            # aggregate mass comparable to context junk
            mentions: list[str] = []
            if hop == 0:
                mentions.append(anchor)
                mentions.append(bridges[0])
            elif hop < hops - 1:
                mentions.append(later_surface[bridges[hop - 1]])
                mentions.append(bridges[hop])
            else:
                if hops >= 3:
                    mentions.append(later_surface[bridges[hop - 2]])
                mentions.append(later_surface[bridges[hop - 1]])

            pid = f"p{pid_counter:05d}"
            pid_counter += 1
            gold_chain.append(pid)
            add_passage(pid, tuple(mentions), vec)

        # anchor-context distractors: plausible but non-gold. They co-mention
        # the anchor and topic entities, gluing the query's neighborhood into
        # the shared topic web and sitting at the top of its graph ranking as
        # credible junk. Topics are drawn uniformly (not by popularity) so a
        # single query's context does not light up an entire hub cluster.
        topic_lo, topic_hi = config.context_topics
        for _ in range(n_context):
            n_topics = int(rng.integers(topic_lo, topic_hi + 1))
            picks = rng.choice(config.vocab_size, size=n_topics, replace=False)
            mentions = (anchor, *(vocab[i] for i in sorted(picks)))
            pid = f"p{pid_counter:05d}"
            pid_counter += 1
            add_passage(pid, mentions, corpus_typical_vector())

        annotations = [anchor]
        if config.seed_bridge_hint:
            annotations.append(bridges[0])
        queries.append(
            Query(
                id=qid,
                text=f"query {qid} asks about {anchor}",
                gold_chain=tuple(gold_chain),
                entities=tuple(annotations),
            )
        )

    # --- topic distractors ---------------------------------------------------
    k_lo, k_hi = config.entities_per_passage
    while pid_counter < config.n_passages:
        pid = f"p{pid_counter:05d}"
        pid_counter += 1
        k = int(rng.integers(k_lo, k_hi + 1))
        if k:
            picks = rng.choice(config.vocab_size, size=k, replace=False, p=zipf)
            mentions = tuple(vocab[i] for i in sorted(picks))
        else:
            mentions = ()
        add_passage(pid, mentions, corpus_typical_vector())

    return SynthDataset(
        config=config,
        corpus=Corpus(passages),
        queries=QuerySet(queries),
        embeddings=embeddings,
        entity_embeddings=entity_store,
    )


# ---------------------------------------------------------------------------
# Score-regime report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistogramRow:
    system: str
    transform: str
    bin_lo: float
    bin_hi: float
    count: int


@dataclass(frozen=True)
class RegimeReport:
    rows: tuple[HistogramRow, ...]
    ks_to_uniform: dict[str, float]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "transform", "bin_lo", "bin_hi", "count"])
            for row in self.rows:
                writer.writerow(
                    [row.system, row.transform, repr(row.bin_lo), repr(row.bin_hi), row.count]
                )

    def lowest_decile_share(self, system: str, transform: str) -> float:
        rows = [r for r in self.rows if r.system == system and r.transform == transform]
        total = sum(r.count for r in rows)
        if total == 0:
            return 0.0
        return rows[0].count / total


def _histogram_rows(
    system: str, transform: str, values: np.ndarray, bins: int, bounds: tuple[float, float] | None
) -> list[HistogramRow]:
    if values.size == 0:
        return []
    lo, hi = bounds if bounds is not None else (float(values.min()), float(values.max()))
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return [
        HistogramRow(
            system=system,
            transform=transform,
            bin_lo=float(edges[i]),
            bin_hi=float(edges[i + 1]),
            count=int(c),
        )
        for i, c in enumerate(counts)
    ]


def regime_report(
    vector_lists: Sequence[ScoreList],
    graph_lists: Sequence[ScoreList],
    raw_bins: int = 20,
    unit_bins: int = 10,
) -> RegimeReport:
    """Histogram raw and normalized score marginals for the two systems.

    Post-PIT marginals also get a Kolmogorov-Smirnov distance to U[0, 1];
    calibration is working when that distance is near zero for both systems
    while the min-max marginals stay unequal.
    """
    rows: list[HistogramRow] = []
    ks: dict[str, float] = {}
    for system, lists in (("vector", vector_lists), ("graph", graph_lists)):
        nonempty = [sl for sl in lists if sl.entries]
        raw = np.concatenate([sl.scores() for sl in nonempty]) if nonempty else np.array([])
        pit = (
            np.concatenate([np.fromiter(pit_normalize(sl).values(), float) for sl in nonempty])
            if nonempty
            else np.array([])
        )
        mm = (
            np.concatenate([np.fromiter(minmax_normalize(sl).values(), float) for sl in nonempty])
            if nonempty
            else np.array([])
        )
        rows.extend(_histogram_rows(system, "raw", raw, raw_bins, None))
        rows.extend(_histogram_rows(system, "pit", pit, unit_bins, (0.0, 1.0)))
        rows.extend(_histogram_rows(system, "minmax", mm, unit_bins, (0.0, 1.0)))
        if pit.size:
            ks[system] = float(scipy_stats.kstest(pit, "uniform").statistic)
    return RegimeReport(rows=tuple(rows), ks_to_uniform=ks)
