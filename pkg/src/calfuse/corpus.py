"""Corpus data model and file ingestion.

Passages, queries, and embeddings are ingested from line-delimited JSON
(embeddings alternatively from a compact binary block). Entity annotations
arrive precomputed; no extraction happens here. Loading is strict: duplicate
ids, dangling gold-chain references, malformed lines, and zero vectors are
rejected with messages that name the offender.

The tune/test split is a pure function of the query id (MD5-based), so it is
stable across runs, machines, and input orderings.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

EMBEDDING_MAGIC = b"CFEMB1"
_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Passage:
    id: str
    text: str
    entity_mentions: tuple[str, ...] = ()


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    gold_chain: tuple[str, ...]
    entities: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.gold_chain:
            raise ValueError(f"query {self.id!r} has an empty gold_chain")

    @property
    def hop_count(self) -> int:
        return len(self.gold_chain)

    @property
    def last_hop(self) -> str:
        return self.gold_chain[-1]


class Corpus:
    """Immutable passage collection indexed by id.

    Iteration order is always sorted by passage id, so downstream results do
    not depend on file order.
    """

    def __init__(self, passages: Iterable[Passage]):
        self._passages: dict[str, Passage] = {}
        for p in passages:
            if p.id in self._passages:
                raise ValueError(f"duplicate passage id {p.id!r}")
            self._passages[p.id] = p
        self._ordered_ids = tuple(sorted(self._passages))

    def __len__(self) -> int:
        return len(self._passages)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._passages

    def __iter__(self) -> Iterator[Passage]:
        for pid in self._ordered_ids:
            yield self._passages[pid]

    def __getitem__(self, passage_id: str) -> Passage:
        return self._passages[passage_id]

    @property
    def passage_ids(self) -> tuple[str, ...]:
        return self._ordered_ids


class QuerySet:
    """Query collection indexed by id, iterated in sorted-id order."""

    def __init__(self, queries: Iterable[Query]):
        self._queries: dict[str, Query] = {}
        for q in queries:
            if q.id in self._queries:
                raise ValueError(f"duplicate query id {q.id!r}")
            self._queries[q.id] = q
        self._ordered_ids = tuple(sorted(self._queries))

    def __len__(self) -> int:
        return len(self._queries)

    def __iter__(self) -> Iterator[Query]:
        for qid in self._ordered_ids:
            yield self._queries[qid]

    def __getitem__(self, query_id: str) -> Query:
        return self._queries[query_id]

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._queries

    @property
    def query_ids(self) -> tuple[str, ...]:
        return self._ordered_ids

    def validate_against(self, corpus: Corpus) -> None:
        """Reject gold-chain references that do not resolve to a passage."""
        for q in self:
            for pid in q.gold_chain:
                if pid not in corpus:
                    raise ValueError(
                        f"query {q.id!r} gold_chain references unknown passage {pid!r}"
                    )


class EmbeddingStore:
    """Unit-norm vectors keyed by passage/query/entity id.

    Every vector is L2-normalized on insertion; a zero vector is rejected.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.dimension = int(dimension)
        self._vectors: dict[str, np.ndarray] = {}
        self._matrix_cache: tuple[tuple[str, ...], np.ndarray] | None = None

    def add(self, item_id: str, vector) -> None:
        v = np.asarray(vector, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.dimension:
            raise ValueError(
                f"vector for {item_id!r} has dimension {v.shape}, expected {self.dimension}"
            )
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError(f"cannot normalize vector for {item_id!r} (zero or non-finite norm)")
        self._vectors[item_id] = v / norm
        self._matrix_cache = None

    def get(self, item_id: str) -> np.ndarray:
        return self._vectors[item_id]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._vectors))

    def matrix(self, ids: tuple[str, ...] | None = None) -> tuple[tuple[str, ...], np.ndarray]:
        """Return (ids, row matrix) with rows aligned to sorted ids."""
        if ids is None:
            if self._matrix_cache is None:
                ordered = self.ids()
                mat = np.stack([self._vectors[i] for i in ordered]) if ordered else np.zeros((0, self.dimension))
                self._matrix_cache = (ordered, mat)
            return self._matrix_cache
        return ids, np.stack([self._vectors[i] for i in ids])


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON line ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def load_corpus(passages_path: str | Path, annotations_path: str | Path) -> Corpus:
    """Load passages and attach their precomputed entity mentions."""
    texts: dict[str, str] = {}
    for lineno, rec in _iter_jsonl(passages_path):
        try:
            pid, text = rec["id"], rec["text"]
        except KeyError as exc:
            raise ValueError(f"{passages_path}:{lineno}: missing field {exc}") from exc
        if pid in texts:
            raise ValueError(f"{passages_path}:{lineno}: duplicate passage id {pid!r}")
        texts[pid] = text

    mentions: dict[str, tuple[str, ...]] = {}
    for lineno, rec in _iter_jsonl(annotations_path):
        try:
            pid, ents = rec["passage_id"], rec["entities"]
        except KeyError as exc:
            raise ValueError(f"{annotations_path}:{lineno}: missing field {exc}") from exc
        if pid not in texts:
            raise ValueError(
                f"{annotations_path}:{lineno}: annotation for unknown passage {pid!r}"
            )
        if pid in mentions:
            raise ValueError(f"{annotations_path}:{lineno}: duplicate annotation for {pid!r}")
        mentions[pid] = tuple(str(e) for e in ents)

    return Corpus(
        Passage(id=pid, text=text, entity_mentions=mentions.get(pid, ()))
        for pid, text in texts.items()
    )


def load_queries(path: str | Path, corpus: Corpus | None = None) -> QuerySet:
    """Load queries; if a corpus is given, gold chains must resolve into it."""
    queries = []
    for lineno, rec in _iter_jsonl(path):
        try:
            queries.append(
                Query(
                    id=rec["id"],
                    text=rec["text"],
                    gold_chain=tuple(rec["gold_chain"]),
                    entities=tuple(rec.get("entities", ())),
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    qs = QuerySet(queries)
    if corpus is not None:
        qs.validate_against(corpus)
    return qs


def load_embeddings(path: str | Path, expected_dimension: int | None = None) -> EmbeddingStore:
    """Load vectors from JSONL or the binary block format, renormalizing each."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(EMBEDDING_MAGIC))
    if magic == EMBEDDING_MAGIC:
        store = _load_embeddings_binary(path)
    else:
        store = _load_embeddings_jsonl(path)
    if expected_dimension is not None and store.dimension != expected_dimension:
        raise ValueError(
            f"{path}: embedding dimension {store.dimension} does not match "
            f"expected {expected_dimension}"
        )
    return store


def _load_embeddings_jsonl(path: Path) -> EmbeddingStore:
    store: EmbeddingStore | None = None
    for lineno, rec in _iter_jsonl(path):
        try:
            item_id, vector = rec["id"], rec["vector"]
        except KeyError as exc:
            raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
        if store is None:
            store = EmbeddingStore(dimension=len(vector))
        if item_id in store:
            raise ValueError(f"{path}:{lineno}: duplicate embedding id {item_id!r}")
        try:
            store.add(item_id, vector)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if store is None:
        raise ValueError(f"{path}: empty embedding file")
    return store


def _load_embeddings_binary(path: Path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        data = fh.read()
    offset = len(EMBEDDING_MAGIC)
    dimension, count = struct.unpack_from("<IQ", data, offset)
    offset += struct.calcsize("<IQ")
    store = EmbeddingStore(dimension=dimension)
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        item_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dimension, offset=offset)
        offset += 4 * dimension
        if item_id in store:
            raise ValueError(f"{path}: duplicate embedding id {item_id!r}")
        store.add(item_id, vec)
    return store


# ---------------------------------------------------------------------------
# Writers (round-trip counterparts of the loaders)
# ---------------------------------------------------------------------------


def _dump_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def save_passages(corpus: Corpus, path: str | Path) -> None:
    _dump_jsonl(path, ({"id": p.id, "text": p.text} for p in corpus))


def save_annotations(corpus: Corpus, path: str | Path) -> None:
    _dump_jsonl(
        path,
        (
            {"passage_id": p.id, "entities": list(p.entity_mentions)}
            for p in corpus
            if p.entity_mentions
        ),
    )


def save_queries(queries: QuerySet, path: str | Path) -> None:
    def rec(q: Query) -> dict:
        out = {"id": q.id, "text": q.text, "gold_chain": list(q.gold_chain)}
        if q.entities:
            out["entities"] = list(q.entities)
        return out

    _dump_jsonl(path, (rec(q) for q in queries))


def save_embeddings_jsonl(store: EmbeddingStore, path: str | Path) -> None:
    _dump_jsonl(
        path,
        ({"id": i, "vector": [float(x) for x in store.get(i)]} for i in store.ids()),
    )


def save_embeddings_binary(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IQ", store.dimension, len(store)))
        for item_id in store.ids():
            encoded = item_id.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(store.get(item_id).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Deterministic tune/test split
# ---------------------------------------------------------------------------


def _split_value(query_id: str) -> float:
    digest = hashlib.md5(query_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def md5_split(queries: QuerySet | Iterable[str], tune_fraction: float) -> dict[str, str]:
    """Assign each query id to 'tune' or 'test' by thresholding its MD5.

    A query is tune iff the first 8 bytes of MD5(id), read big-endian, fall
    below tune_fraction * 2^64. Pure function of the id: stable across runs,
    platforms, and input order.
    """
    if not 0.0 <= tune_fraction <= 1.0:
        raise ValueError("tune_fraction must be in [0, 1]")
    ids = queries.query_ids if isinstance(queries, QuerySet) else tuple(queries)
    return {
        qid: ("tune" if _split_value(qid) < tune_fraction else "test") for qid in ids
    }
