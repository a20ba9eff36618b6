import numpy as np
import pytest

from calfuse.corpus import Corpus, EmbeddingStore, Passage, Query
from calfuse.graph import (
    build_entity_graph,
    link_synonyms,
    normalize_surface,
    seed_entities_for_query,
)


def make_corpus(annotations):
    return Corpus(
        Passage(pid, f"text {pid}", tuple(ents)) for pid, ents in annotations.items()
    )


def test_build_graph_hand_example():
    g = build_entity_graph(make_corpus({"p1": ["A", "B"], "p2": ["B", "C"]}))
    assert set(g.entities) == {"a", "b", "c"}
    assert g.cooccurrence == {("a", "b"): 1, ("b", "c"): 1}
    assert g.entity_passages["b"] == frozenset({"p1", "p2"})


def test_empty_annotations_give_empty_graph():
    g = build_entity_graph(make_corpus({"p1": [], "p2": []}))
    assert g.entities == {}
    assert g.cooccurrence == {}


def test_case_folding_merges_surfaces():
    g = build_entity_graph(make_corpus({"p1": ["US"], "p2": ["us "]}))
    assert set(g.entities) == {"us"}
    assert g.entity_passages["us"] == frozenset({"p1", "p2"})


def test_cooccurrence_counts_shared_passages():
    g = build_entity_graph(
        make_corpus({"p1": ["A", "B"], "p2": ["A", "B"], "p3": ["A", "B", "C"]})
    )
    assert g.cooccurrence[("a", "b")] == 3
    assert g.cooccurrence[("a", "c")] == 1


# --- synonym linking ----------------------------------------------------------


def vectors_with_gram(gram):
    """Unit vectors realizing a target Gram matrix (via Cholesky)."""
    chol = np.linalg.cholesky(np.asarray(gram))
    return [row for row in chol]


def test_identical_embeddings_merge():
    g = build_entity_graph(make_corpus({"p1": ["A"], "p2": ["B"]}))
    store = EmbeddingStore(dimension=3)
    store.add("a", [1.0, 0.0, 0.0])
    store.add("b", [1.0, 0.0, 0.0])
    linked = link_synonyms(g, store, 0.85)
    assert linked.canonical("b") == "a"
    assert set(linked.entities) == {"a"}
    assert linked.entity_passages["a"] == frozenset({"p1", "p2"})


def test_threshold_one_with_distinct_embeddings_changes_nothing():
    g = build_entity_graph(make_corpus({"p1": ["A", "B"]}))
    store = EmbeddingStore(dimension=2)
    store.add("a", [1.0, 0.0])
    store.add("b", [0.0, 1.0])
    linked = link_synonyms(g, store, 1.0)
    assert linked.synonym_map == {}
    assert linked.cooccurrence == g.cooccurrence


def test_transitive_closure_merge():
    # cosines: (e1,e2)=0.9, (e2,e3)=0.9, (e1,e3)=0.65 -- below threshold, yet
    # e3 joins through e2 (union-find closure); e4 stays alone
    gram = [
        [1.0, 0.9, 0.65, 0.0],
        [0.9, 1.0, 0.9, 0.0],
        [0.65, 0.9, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
    vecs = vectors_with_gram(gram)
    g = build_entity_graph(
        make_corpus({"p1": ["e1"], "p2": ["e2"], "p3": ["e3"], "p4": ["e4"]})
    )
    store = EmbeddingStore(dimension=4)
    for name, v in zip(["e1", "e2", "e3", "e4"], vecs):
        store.add(name, v)
    linked = link_synonyms(g, store, 0.85)
    assert linked.canonical("e2") == "e1"
    assert linked.canonical("e3") == "e1"
    assert linked.canonical("e4") == "e4"
    assert set(linked.entities) == {"e1", "e4"}


def brute_force_components(names, store, threshold):
    """Transitive closure by repeated sweeps; independent of union-find."""
    comp = {n: n for n in names}
    changed = True
    while changed:
        changed = False
        for a in names:
            for b in names:
                cos = float(store.get(a) @ store.get(b))
                if cos >= threshold and comp[a] != comp[b]:
                    target = min(comp[a], comp[b])
                    for k, v in comp.items():
                        if v in (comp[a], comp[b]):
                            comp[k] = target
                    changed = True
    return comp


def test_linking_matches_brute_force_closure_oracle():
    rng = np.random.default_rng(42)
    for trial in range(50):
        n = int(rng.integers(2, 12))
        dim = int(rng.integers(2, 5))
        names = [f"e{i:02d}" for i in range(n)]
        store = EmbeddingStore(dimension=dim)
        for name in names:
            store.add(name, rng.standard_normal(dim))
        threshold = float(rng.uniform(0.3, 0.99))
        g = build_entity_graph(make_corpus({f"p{i}": [names[i]] for i in range(n)}))
        linked = link_synonyms(g, store, threshold)
        oracle = brute_force_components(names, store, threshold)
        for name in names:
            assert linked.canonical(name) == oracle[name], (trial, name)


def test_synonym_map_idempotent_and_weights_summed():
    g = build_entity_graph(
        make_corpus({"p1": ["X", "C"], "p2": ["Y", "C"], "p3": ["X", "Y"]})
    )
    store = EmbeddingStore(dimension=2)
    store.add("x", [1.0, 0.0])
    store.add("y", [1.0, 0.0])
    store.add("c", [0.0, 1.0])
    linked = link_synonyms(g, store, 0.85)
    assert linked.canonical(linked.canonical("y")) == linked.canonical("y")
    # (x,c)=1 and (y,c)=1 re-point to (x,c) with summed weight
    assert linked.cooccurrence[("c", "x")] == 2
    # (x,y) became a self-pair and is dropped
    assert ("x", "y") not in linked.cooccurrence


def test_entities_without_embeddings_skipped_and_counted():
    g = build_entity_graph(make_corpus({"p1": ["A"], "p2": ["B"], "p3": ["C"]}))
    store = EmbeddingStore(dimension=2)
    store.add("a", [1.0, 0.0])
    store.add("b", [1.0, 0.0])
    linked = link_synonyms(g, store, 0.9)
    assert linked.skipped_entities == 1
    assert linked.canonical("c") == "c"


def test_invalid_threshold_rejected():
    g = build_entity_graph(make_corpus({"p1": ["A"]}))
    store = EmbeddingStore(dimension=2)
    store.add("a", [1.0, 0.0])
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            link_synonyms(g, store, bad)


# --- query seeding -------------------------------------------------------------


def test_seed_entities_present_and_missing():
    g = build_entity_graph(make_corpus({"p1": ["A"]}))
    q = Query("q1", "?", ("p1",), entities=("A",))
    seeds, misses = seed_entities_for_query(q, g)
    assert seeds == frozenset({"a"}) and misses == 0

    q2 = Query("q2", "?", ("p1",), entities=("Z",))
    seeds2, misses2 = seed_entities_for_query(q2, g)
    assert seeds2 == frozenset() and misses2 == 1


def test_seed_entities_follow_synonym_map():
    g = build_entity_graph(make_corpus({"p1": ["US"], "p2": ["United States"]}))
    store = EmbeddingStore(dimension=2)
    store.add("us", [1.0, 0.0])
    store.add("united states", [1.0, 0.0])
    linked = link_synonyms(g, store, 0.85)
    q = Query("q1", "?", ("p1",), entities=("US",))
    seeds, misses = seed_entities_for_query(q, linked)
    assert seeds == frozenset({"united states"})
    assert misses == 0


def test_normalize_surface():
    assert normalize_surface("  Foo Bar ") == "foo bar"
