"""Entity graph construction and embedding-based synonym linking.

The graph holds one node per distinct surface form (case-folded, trimmed),
passage<->entity membership edges, and entity-entity co-occurrence edges
weighted by shared-passage count. Synonym linking merges entities whose
embeddings are cosine-close, using union-find so the merge relation is the
transitive closure of the threshold relation; the lexicographically smallest
id in each component becomes the canonical node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

from .corpus import Corpus, EmbeddingStore, Query


def normalize_surface(surface: str) -> str:
    """Case-fold and trim a mention; heavier normalization is the linker's job."""
    return surface.strip().casefold()


@dataclass
class EntityGraph:
    """Immutable-after-build entity graph.

    entities maps normalized entity id -> representative raw surface.
    cooccurrence keys are sorted (a, b) pairs with a < b.
    synonym_map holds only non-identity mappings; use canonical() to resolve.
    """

    entities: dict[str, str] = field(default_factory=dict)
    passage_entities: dict[str, frozenset[str]] = field(default_factory=dict)
    entity_passages: dict[str, frozenset[str]] = field(default_factory=dict)
    cooccurrence: dict[tuple[str, str], int] = field(default_factory=dict)
    synonym_map: dict[str, str] = field(default_factory=dict)
    linked: bool = False
    skipped_entities: int = 0
    merged_entities: int = 0

    def canonical(self, entity_id: str) -> str:
        return self.synonym_map.get(entity_id, entity_id)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    @property
    def entity_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.entities))


def build_entity_graph(corpus: Corpus) -> EntityGraph:
    """One node per distinct normalized surface form; co-occurrence by passage."""
    entities: dict[str, str] = {}
    passage_entities: dict[str, frozenset[str]] = {}
    entity_passages: dict[str, set[str]] = {}
    cooccurrence: dict[tuple[str, str], int] = {}

    for passage in corpus:  # sorted by id
        normalized = set()
        for raw in passage.entity_mentions:
            ent = normalize_surface(raw)
            if not ent:
                continue
            normalized.add(ent)
            if ent not in entities:
                entities[ent] = raw.strip()
        passage_entities[passage.id] = frozenset(normalized)
        for ent in normalized:
            entity_passages.setdefault(ent, set()).add(passage.id)
        for a, b in combinations(sorted(normalized), 2):
            cooccurrence[(a, b)] = cooccurrence.get((a, b), 0) + 1

    return EntityGraph(
        entities=entities,
        passage_entities=passage_entities,
        entity_passages={e: frozenset(p) for e, p in entity_passages.items()},
        cooccurrence=cooccurrence,
    )


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        root = x
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while self.parent.get(x, x) != x:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # canonical = lexicographically smallest id in the component
        root, child = (ra, rb) if ra < rb else (rb, ra)
        self.parent[child] = root


def link_synonyms(
    graph: EntityGraph,
    entity_embeddings: EmbeddingStore,
    threshold: float,
    block_size: int = 512,
) -> EntityGraph:
    """Merge entities whose pairwise cosine reaches the threshold.

    Returns a new graph with membership edges re-pointed to canonical ids and
    co-occurrence weights summed. Entities without an embedding are never
    merged; their count lands in skipped_entities.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("synonym threshold must be in (0, 1]")

    all_entities = sorted(graph.entities)
    with_embedding = [e for e in all_entities if e in entity_embeddings]
    skipped = len(all_entities) - len(with_embedding)

    uf = _UnionFind()
    if with_embedding:
        _, mat = entity_embeddings.matrix(tuple(with_embedding))
        n = len(with_embedding)
        for start in range(0, n, block_size):
            stop = min(start + block_size, n)
            sims = mat[start:stop] @ mat.T
            rows, cols = np.nonzero(sims >= threshold)
            for r, c in zip(rows.tolist(), cols.tolist()):
                i = start + r
                if c > i:
                    uf.union(with_embedding[i], with_embedding[c])

    synonym_map: dict[str, str] = {}
    merged = 0
    for ent in with_embedding:
        root = uf.find(ent)
        if root != ent:
            synonym_map[ent] = root
            merged += 1

    entities = {
        e: surface for e, surface in graph.entities.items() if e not in synonym_map
    }
    passage_entities = {
        pid: frozenset(synonym_map.get(e, e) for e in ents)
        for pid, ents in graph.passage_entities.items()
    }
    entity_passages: dict[str, set[str]] = {}
    for pid, ents in passage_entities.items():
        for e in ents:
            entity_passages.setdefault(e, set()).add(pid)

    cooccurrence: dict[tuple[str, str], int] = {}
    for (a, b), w in graph.cooccurrence.items():
        ca, cb = synonym_map.get(a, a), synonym_map.get(b, b)
        if ca == cb:
            continue
        key = (ca, cb) if ca < cb else (cb, ca)
        cooccurrence[key] = cooccurrence.get(key, 0) + w

    return EntityGraph(
        entities=entities,
        passage_entities=passage_entities,
        entity_passages={e: frozenset(p) for e, p in entity_passages.items()},
        cooccurrence=cooccurrence,
        synonym_map=synonym_map,
        linked=True,
        skipped_entities=skipped,
        merged_entities=merged,
    )


def seed_entities_for_query(
    query: Query,
    graph: EntityGraph,
    query_annotations: Iterable[str] | None = None,
) -> tuple[frozenset[str], int]:
    """Canonicalize the query's entity strings into graph node ids.

    Returns (seed ids present in the graph, miss count). Annotations default
    to the query's own 'entities' field.
    """
    annotations = query.entities if query_annotations is None else tuple(query_annotations)
    seeds: set[str] = set()
    misses = 0
    for raw in annotations:
        ent = graph.canonical(normalize_surface(raw))
        if ent in graph.entities:
            seeds.add(ent)
        else:
            misses += 1
    return frozenset(seeds), misses
