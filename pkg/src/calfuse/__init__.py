"""Calibrated fusion of heterogeneous retrieval scores.

Dense vector retrieval and entity-graph retrieval (Personalized PageRank)
produce scores on incomparable scales. This package maps each system's
scores to percentile ranks, converts them to Boltzmann weights at an
auto-calibrated temperature, and fuses the two systems with a mixing weight
and consensus bonus -- plus rank-only, linear, and eight alternative fusion
operators, a mean-field reranker, a synthetic multi-hop benchmark generator,
and the evaluation/statistics harness to compare it all.
"""

from .calibration import (
    CalibratedList,
    auto_temperature,
    boltzmann,
    calibrate,
    energies,
    minmax_normalize,
    pit_normalize,
    rawmax_normalize,
)
from .corpus import (
    Corpus,
    EmbeddingStore,
    Passage,
    Query,
    QuerySet,
    load_corpus,
    load_embeddings,
    load_queries,
    md5_split,
)
from .fusion import (
    FusedRanking,
    FusionConfig,
    STRATEGIES,
    fuse_score_lists,
    linear_fuse,
    rrf_fuse,
    strategy_fuse,
    thermo_fuse,
)
from .graph import EntityGraph, build_entity_graph, link_synonyms, seed_entities_for_query
from .ising import IsingConfig, build_coupling, ising_sweep, mean_field_rerank
from .metrics import (
    PairedComparison,
    QueryOutcome,
    any_at_k,
    full_at_k,
    fullsup_at_k,
    lasthop_at_k,
    pair_outcomes,
)
from .retrieval import PPRConfig, ScoreList, cap_pool, graph_passage_scores, ppr, vector_topk
from .stats import bootstrap_ci, mcnemar_exact, odds_ratio, wilson_ci
from .synth import SynthConfig, generate, regime_report

__version__ = "0.1.0"
