import numpy as np
import pytest

from calfuse.corpus import Corpus, EmbeddingStore, Passage
from calfuse.graph import build_entity_graph
from calfuse.retrieval import (
    PPRConfig,
    ScoreList,
    cap_pool,
    graph_passage_scores,
    ppr,
    vector_topk,
)


# --- ScoreList invariants ------------------------------------------------------


def test_scorelist_sorted_and_unique():
    sl = ScoreList.from_pairs("vector", [("b", 0.5), ("a", 0.5), ("c", 0.9)])
    assert sl.ids() == ("c", "a", "b")  # ties broken by ascending id
    with pytest.raises(ValueError, match="duplicate"):
        ScoreList(system="vector", entries=(("a", 1.0), ("a", 0.5)))
    with pytest.raises(ValueError, match="sorted"):
        ScoreList(system="vector", entries=(("a", 0.1), ("b", 0.9)))


# --- vector retrieval -----------------------------------------------------------


def make_store(vectors):
    dim = len(next(iter(vectors.values())))
    store = EmbeddingStore(dimension=dim)
    for pid, v in vectors.items():
        store.add(pid, v)
    return store


def test_exact_match_scores_one():
    store = make_store({"p1": [1, 0], "p2": [0, 1], "p3": [0.6, 0.8]})
    result = vector_topk([0.6, 0.8], store, 2)
    assert result.ids()[0] == "p3"
    assert result.entries[0][1] == pytest.approx(1.0, abs=1e-9)


def test_orthogonal_query_ties_broken_by_id():
    store = make_store({"pb": [1, 0, 0], "pa": [0, 1, 0], "pc": [-1, 0, 0]})
    result = vector_topk([0, 0, 1], store, 3)
    assert result.ids() == ("pa", "pb", "pc")
    assert all(s == 0.0 for _, s in result.entries)


def exhaustive_topk(query, store, k):
    """Brute-force oracle: full sort of every cosine."""
    pairs = [(pid, float(store.get(pid) @ np.asarray(query, dtype=float))) for pid in store.ids()]
    pairs.sort(key=lambda e: (-e[1], e[0]))
    return pairs[:k]


def test_vector_topk_matches_exhaustive_oracle_small():
    rng = np.random.default_rng(0)
    store = make_store({f"p{i}": rng.standard_normal(8) for i in range(5)})
    q = rng.standard_normal(8)
    q /= np.linalg.norm(q)
    result = vector_topk(q, store, 3)
    assert list(result.entries) == exhaustive_topk(q, store, 3)


def test_vector_topk_matches_oracle_randomized():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        dim = int(rng.integers(2, 12))
        vectors = {f"p{i:03d}": rng.standard_normal(dim) for i in range(n)}
        if rng.random() < 0.3 and n >= 2:
            vectors["p000"] = vectors[f"p{n-1:03d}"]  # force a tie
        store = make_store(vectors)
        q = rng.standard_normal(dim)
        q /= np.linalg.norm(q)
        k = int(rng.integers(1, n + 2))
        result = vector_topk(q, store, k)
        oracle = exhaustive_topk(q, store, k)
        assert [pid for pid, _ in result.entries] == [pid for pid, _ in oracle]
        np.testing.assert_allclose(
            [s for _, s in result.entries], [s for _, s in oracle], atol=1e-12
        )


def test_topk_larger_than_corpus_returns_all():
    store = make_store({"p1": [1, 0], "p2": [0, 1]})
    assert vector_topk([1, 0], store, 10).N == 2


# --- PPR -------------------------------------------------------------------------


def graph_from(annotations):
    return build_entity_graph(
        Corpus(Passage(pid, "t", tuple(ents)) for pid, ents in annotations.items())
    )


def dense_ppr_oracle(graph, seeds, damping, iterations=5000, tol=1e-14):
    """Dense power-iteration oracle, run far past the production tolerance."""
    nodes = sorted(graph.entities)
    index = {e: i for i, e in enumerate(nodes)}
    n = len(nodes)
    weights = np.zeros((n, n))
    for (a, b), w in graph.cooccurrence.items():
        weights[index[a], index[b]] = w
        weights[index[b], index[a]] = w
    out = weights.sum(axis=1)
    transition = np.zeros((n, n))
    nonzero = out > 0
    transition[nonzero] = weights[nonzero] / out[nonzero, None]
    restart = np.zeros(n)
    for s in seeds:
        restart[index[s]] = 1.0 / len(seeds)
    x = restart.copy()
    for _ in range(iterations):
        dangling_mass = x[~nonzero].sum()
        x_new = damping * (transition.T @ x + dangling_mass * restart) + (1 - damping) * restart
        if np.abs(x_new - x).sum() < tol:
            x = x_new
            break
        x = x_new
    return {nodes[i]: x[i] for i in range(n)}


def dense_ppr_solve(graph, seeds, damping):
    """Exact linear solve; independent of both iterative paths."""
    nodes = sorted(graph.entities)
    index = {e: i for i, e in enumerate(nodes)}
    n = len(nodes)
    weights = np.zeros((n, n))
    for (a, b), w in graph.cooccurrence.items():
        weights[index[a], index[b]] = w
        weights[index[b], index[a]] = w
    out = weights.sum(axis=1)
    transition = np.zeros((n, n))
    nonzero = out > 0
    transition[nonzero] = weights[nonzero] / out[nonzero, None]
    restart = np.zeros(n)
    for s in seeds:
        restart[index[s]] = 1.0 / len(seeds)
    # dangling rows push their whole mass to the restart vector
    transition[~nonzero] = restart
    a_mat = np.eye(n) - damping * transition.T
    x = np.linalg.solve(a_mat, (1 - damping) * restart)
    return {nodes[i]: x[i] for i in range(n)}


def test_isolated_seed_scores_one():
    g = graph_from({"p1": ["A"], "p2": ["B", "C"]})
    scores = ppr(g, {"a"})
    assert scores == pytest.approx({"a": 1.0})


def test_two_node_symmetric_seed_both():
    g = graph_from({"p1": ["A", "B"]})
    scores = ppr(g, {"a", "b"})
    assert scores["a"] == pytest.approx(0.5, abs=1e-9)
    assert scores["b"] == pytest.approx(0.5, abs=1e-9)


def test_no_valid_seeds_returns_empty():
    g = graph_from({"p1": ["A"]})
    assert ppr(g, {"zzz"}) == {}
    assert ppr(g, set()) == {}


def random_graph(rng, max_nodes=50):
    n = int(rng.integers(2, max_nodes + 1))
    annotations = {}
    n_passages = int(rng.integers(1, 2 * n))
    names = [f"e{i:02d}" for i in range(n)]
    for p in range(n_passages):
        size = int(rng.integers(1, min(5, n) + 1))
        members = rng.choice(n, size=size, replace=False)
        annotations[f"p{p:03d}"] = [names[i] for i in members]
    graph = graph_from(annotations)
    present = sorted(graph.entities)
    if not present:
        return None, None
    n_seeds = int(rng.integers(1, min(4, len(present)) + 1))
    seeds = set(rng.choice(present, size=n_seeds, replace=False).tolist())
    return graph, seeds


def test_ppr_matches_dense_oracle_on_random_graphs():
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 100:
        graph, seeds = random_graph(rng)
        if graph is None:
            continue
        config = PPRConfig(damping=0.85, epsilon=1e-12, max_iterations=10_000)
        got = ppr(graph, seeds, config)
        oracle = dense_ppr_oracle(graph, sorted(seeds), 0.85)
        solve = dense_ppr_solve(graph, sorted(seeds), 0.85)
        total = sum(got.values())
        assert abs(total - 1.0) <= 1e-9
        for node in oracle:
            assert abs(got.get(node, 0.0) - oracle[node]) <= 1e-8, node
            assert abs(oracle[node] - solve[node]) <= 1e-9, node
        checked += 1


def test_ppr_is_probability_distribution():
    rng = np.random.default_rng(5)
    for _ in range(20):
        graph, seeds = random_graph(rng, max_nodes=30)
        if graph is None:
            continue
        scores = ppr(graph, seeds)
        assert all(v > 0 for v in scores.values())
        assert abs(sum(scores.values()) - 1.0) <= 1e-9


def test_ppr_config_validation():
    with pytest.raises(ValueError):
        PPRConfig(damping=1.0)
    with pytest.raises(ValueError):
        PPRConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        PPRConfig(max_iterations=0)


# --- entity -> passage aggregation ----------------------------------------------


def test_passage_scores_hand_example():
    g = graph_from({"p1": ["A"], "p2": ["A", "B"]})
    result = graph_passage_scores({"a": 0.6, "b": 0.4}, g)
    assert result.entries == (("p2", 1.0), ("p1", 0.6))


def test_passage_scores_empty_inputs():
    g = graph_from({"p1": ["A"]})
    assert graph_passage_scores({}, g).entries == ()


def test_passage_scores_entity_without_passages():
    g = graph_from({"p1": ["A"]})
    # mass parked on an unknown entity contributes nothing
    assert graph_passage_scores({"ghost": 1.0}, g).entries == ()


# --- pool capping -----------------------------------------------------------------


def make_list(system, pairs):
    return ScoreList.from_pairs(system, pairs)


def test_cap_pool_absent_dk_is_identity():
    g = make_list("graph", [("p1", 0.5), ("p2", 0.4)])
    v = make_list("vector", [("p1", 0.9)])
    assert cap_pool(g, v, None) is g


def test_cap_pool_zero_keeps_only_consensus():
    g = make_list("graph", [("p1", 0.5), ("p2", 0.4), ("p3", 0.3)])
    v = make_list("vector", [("p2", 0.9), ("p9", 0.8)])
    capped = cap_pool(g, v, 0)
    assert capped.ids() == ("p2",)


def test_cap_pool_counting_oracle_2000_entries():
    # 2000-entry graph list, 4 consensus, dk=30 -> 34 survive
    rng = np.random.default_rng(11)
    scores = rng.random(2000)
    g = make_list("graph", [(f"g{i:04d}", float(s)) for i, s in enumerate(scores)])
    consensus_ids = ["g0005", "g0100", "g1500", "g1999"]
    v = make_list("vector", [(pid, 1.0 - 0.01 * i) for i, pid in enumerate(consensus_ids)])
    capped = cap_pool(g, v, 30)
    assert capped.N == 34
    assert set(consensus_ids) <= set(capped.ids())


def test_cap_pool_never_removes_consensus_never_adds():
    rng = np.random.default_rng(21)
    for _ in range(50):
        n_g = int(rng.integers(1, 40))
        n_v = int(rng.integers(1, 10))
        g = make_list("graph", [(f"d{i:02d}", float(rng.random())) for i in range(n_g)])
        vector_ids = rng.choice([f"d{i:02d}" for i in range(50)], size=n_v, replace=False)
        v = make_list("vector", [(pid, float(rng.random())) for pid in vector_ids])
        dk = int(rng.integers(0, 12))
        capped = cap_pool(g, v, dk)
        consensus = set(g.ids()) & set(v.ids())
        assert consensus <= set(capped.ids())
        assert set(capped.ids()) <= set(g.ids())
        graph_only_kept = len(set(capped.ids()) - set(v.ids()))
        assert graph_only_kept <= dk


def test_cap_pool_rejects_negative_dk():
    g = make_list("graph", [("p1", 0.5)])
    v = make_list("vector", [("p1", 0.9)])
    with pytest.raises(ValueError):
        cap_pool(g, v, -1)
