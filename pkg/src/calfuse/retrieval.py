"""Retrieval operations producing ranked score lists.

Two heterogeneous systems feed fusion: exact cosine top-N over unit-norm
embeddings, and Personalized PageRank over the entity co-occurrence graph
with membership aggregation to passages. Raw scores from the two systems
live on incomparable scales; calibration happens downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import sparse

from .corpus import EmbeddingStore
from .graph import EntityGraph


@dataclass(frozen=True)
class ScoreList:
    """Ranked candidates for one system: (passage id, raw score) pairs.

    Entries are strictly sorted by score descending, ties broken by ascending
    passage id; ids are unique.
    """

    system: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        seen = set()
        prev: tuple[float, str] | None = None
        for pid, score in self.entries:
            if pid in seen:
                raise ValueError(f"duplicate passage id {pid!r} in {self.system} list")
            seen.add(pid)
            key = (-score, pid)
            if prev is not None and key < prev:
                raise ValueError(f"{self.system} list not sorted at {pid!r}")
            prev = key

    @classmethod
    def from_pairs(cls, system: str, pairs) -> "ScoreList":
        ordered = sorted(pairs, key=lambda e: (-e[1], e[0]))
        return cls(system=system, entries=tuple((pid, float(s)) for pid, s in ordered))

    @property
    def N(self) -> int:
        return len(self.entries)

    def ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _ in self.entries)

    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.entries], dtype=np.float64)

    def score_map(self) -> dict[str, float]:
        return {pid: s for pid, s in self.entries}


def vector_topk(query_embedding, store: EmbeddingStore, n_v: int) -> ScoreList:
    """Top n_v passages by cosine (dot product of unit vectors).

    If n_v exceeds the store size, all passages are returned.
    """
    if n_v < 1:
        raise ValueError("n_v must be >= 1")
    q = np.asarray(query_embedding, dtype=np.float64)
    if q.shape != (store.dimension,):
        raise ValueError(f"query dimension {q.shape} does not match store ({store.dimension})")
    ids, mat = store.matrix()
    scores = mat @ q
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:n_v]
    return ScoreList(
        system="vector", entries=tuple((ids[i], float(scores[i])) for i in order)
    )


@dataclass(frozen=True)
class PPRConfig:
    damping: float = 0.85
    epsilon: float = 1e-8
    max_iterations: int = 100

    def __post_init__(self) -> None:
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must be in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def _transition_operator(graph: EntityGraph):
    """Column-stochastic push operator M^T (cached on the graph object).

    Rows of the underlying M are the row-normalized co-occurrence weights;
    dangling nodes (no edges) are tracked separately so their mass can be
    redirected to the restart distribution.
    """
    cache = getattr(graph, "_ppr_cache", None)
    if cache is not None:
        return cache
    nodes = graph.entity_ids
    index = {e: i for i, e in enumerate(nodes)}
    n = len(nodes)
    rows, cols, data = [], [], []
    out_weight = np.zeros(n)
    for (a, b), w in graph.cooccurrence.items():
        ia, ib = index[a], index[b]
        rows.append(ia), cols.append(ib), data.append(float(w))
        rows.append(ib), cols.append(ia), data.append(float(w))
        out_weight[ia] += w
        out_weight[ib] += w
    dangling = out_weight == 0.0
    if n and data:
        inv = np.zeros(n)
        inv[~dangling] = 1.0 / out_weight[~dangling]
        # M[i, j] = w_ij / sum_k w_ik ; we store M^T for fast x -> M^T x
        m_t = sparse.csr_matrix(
            (np.asarray(data) * inv[np.asarray(rows)], (cols, rows)), shape=(n, n)
        )
    else:
        m_t = sparse.csr_matrix((n, n))
    cache = (nodes, index, m_t, dangling)
    graph._ppr_cache = cache
    return cache


def ppr(
    graph: EntityGraph,
    seed_entities,
    config: PPRConfig = PPRConfig(),
) -> dict[str, float]:
    """Personalized PageRank over the entity co-occurrence graph.

    Power iteration with restart mass (1 - damping) spread uniformly over the
    canonicalized seeds; dangling mass is redirected to the restart vector.
    Returns a probability distribution over reachable entities (sums to 1).
    An empty dict signals that no valid seeds remain (caller falls back to
    vector-only retrieval).
    """
    seeds = sorted({graph.canonical(e) for e in seed_entities} & set(graph.entities))
    if not seeds:
        return {}

    nodes, index, m_t, dangling = _transition_operator(graph)
    n = len(nodes)
    r = np.zeros(n)
    r[[index[s] for s in seeds]] = 1.0 / len(seeds)

    d = config.damping
    x = r.copy()
    for _ in range(config.max_iterations):
        pushed = m_t @ x
        dangling_mass = float(x[dangling].sum())
        x_new = d * (pushed + dangling_mass * r) + (1.0 - d) * r
        delta = float(np.abs(x_new - x).sum())
        x = x_new
        if delta < config.epsilon:
            break
    x /= x.sum()

    return {nodes[i]: float(x[i]) for i in np.nonzero(x)[0]}


def graph_passage_scores(
    entity_scores: Mapping[str, float], graph: EntityGraph
) -> ScoreList:
    """Aggregate entity PPR mass to passages: score = sum over member entities.

    Passages with zero score are excluded, so the list covers exactly the
    PPR-reachable passages.
    """
    totals: dict[str, float] = {}
    for ent, score in entity_scores.items():
        if score == 0.0:
            continue
        for pid in graph.entity_passages.get(ent, ()):
            totals[pid] = totals.get(pid, 0.0) + score
    return ScoreList.from_pairs("graph", totals.items())


def cap_pool(
    graph_list: ScoreList, vector_list: ScoreList, dk: int | None = None
) -> ScoreList:
    """Cap the graph candidate pool to consensus entries plus dk graph-only.

    Every graph entry that also appears in the vector list survives
    unconditionally; at most dk of the highest-scoring graph-only entries are
    kept. dk=None means uncapped.
    """
    if dk is None:
        return graph_list
    if dk < 0:
        raise ValueError("dk must be >= 0 or None")
    vector_ids = set(vector_list.ids())
    kept = []
    graph_only_kept = 0
    for pid, score in graph_list.entries:  # already in ranking order
        if pid in vector_ids:
            kept.append((pid, score))
        elif graph_only_kept < dk:
            kept.append((pid, score))
            graph_only_kept += 1
    return ScoreList(system=graph_list.system, entries=tuple(kept))
