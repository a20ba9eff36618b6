"""Mean-field relevance propagation over entity-coupled candidates.

Fused candidates are treated as spins with external fields given by their
(zero-mean-shifted) fused scores and couplings given by shared-entity counts.
The damped mean-field update

    m_i <- (1 - mix) * m_i + mix * tanh((h_i + J * sum_j A_ij m_j) / T)

runs from m = 0 to a fixed point; the final score blends the original fused
score with the rescaled magnetization (m + 1) / 2. blend = 0 leaves the
input ranking untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .fusion import FusedEntry, FusedRanking
from .graph import EntityGraph


@dataclass(frozen=True)
class IsingConfig:
    coupling: float = 1.0
    temperature: float = 1.0
    blend: float = 0.0
    max_iterations: int = 100
    tol: float = 1e-6
    damping_mix: float = 0.5

    def __post_init__(self) -> None:
        if self.coupling < 0.0:
            raise ValueError("coupling must be >= 0")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must be in [0, 1]")
        if not 0.0 < self.damping_mix <= 1.0:
            raise ValueError("damping_mix must be in (0, 1]")


DEFAULT_BLEND_GRID = (0.0, 0.1, 0.2, 0.25, 0.3, 0.5)


def build_coupling(candidates: FusedRanking, graph: EntityGraph) -> np.ndarray:
    """Shared-canonical-entity counts between candidate passages.

    Symmetric, zero diagonal, scaled into [0, 1] by the maximum entry.
    """
    entity_sets = [
        graph.passage_entities.get(e.passage_id, frozenset()) for e in candidates.entries
    ]
    n = len(entity_sets)
    coupling = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            shared = len(entity_sets[i] & entity_sets[j])
            coupling[i, j] = coupling[j, i] = float(shared)
    top = coupling.max()
    if top > 0.0:
        coupling /= top
    return coupling


@dataclass(frozen=True)
class IsingResult:
    ranking: FusedRanking
    converged: bool
    iterations: int


def mean_field_rerank(
    candidates: FusedRanking, coupling: np.ndarray, config: IsingConfig
) -> IsingResult:
    """Propagate relevance through the coupling matrix and re-sort.

    On non-convergence the last iterate is used and the converged flag is
    False. final score = (1 - blend) * fused + blend * (m + 1) / 2.
    """
    n = len(candidates.entries)
    if coupling.shape != (n, n):
        raise ValueError(f"coupling shape {coupling.shape} does not match {n} candidates")
    if n == 0:
        return IsingResult(ranking=candidates, converged=True, iterations=0)

    fused = np.array([e.score for e in candidates.entries])
    h = fused - fused.mean()
    m = np.zeros(n)
    mix = config.damping_mix
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        target = np.tanh((h + config.coupling * (coupling @ m)) / config.temperature)
        m_new = (1.0 - mix) * m + mix * target
        delta = float(np.abs(m_new - m).max())
        m = m_new
        if delta < config.tol:
            converged = True
            break

    blended = (1.0 - config.blend) * fused + config.blend * (m + 1.0) / 2.0
    rescored = [
        FusedEntry(
            passage_id=e.passage_id,
            score=float(s),
            in_vector=e.in_vector,
            in_graph=e.in_graph,
        )
        for e, s in zip(candidates.entries, blended)
    ]
    rescored.sort(key=lambda e: (-e.score, e.passage_id))
    return IsingResult(
        ranking=FusedRanking(entries=tuple(rescored)),
        converged=converged,
        iterations=iterations,
    )


@dataclass(frozen=True)
class SweepCell:
    coupling: float
    temperature: float
    blend: float
    hits: int
    wins: int
    losses: int
    n: int
    converged: int


def ising_sweep(
    candidates_by_query: Mapping[str, tuple[FusedRanking, np.ndarray]],
    grid: Sequence[tuple[float, float, float]],
    hit_fn: Callable[[str, FusedRanking], bool],
) -> list[SweepCell]:
    """Evaluate a (J, T, blend) grid; win/loss is counted vs. the unreranked input.

    hit_fn(query_id, ranking) decides the per-query success used for the
    phase table. Rows come back in grid order; deterministic given inputs.
    """
    qids = sorted(candidates_by_query)
    baseline = {qid: hit_fn(qid, candidates_by_query[qid][0]) for qid in qids}
    cells = []
    for coupling, temperature, blend in grid:
        config = IsingConfig(coupling=coupling, temperature=temperature, blend=blend)
        hits = wins = losses = converged = 0
        for qid in qids:
            ranking, a = candidates_by_query[qid]
            result = mean_field_rerank(ranking, a, config)
            hit = hit_fn(qid, result.ranking)
            hits += hit
            converged += result.converged
            if hit and not baseline[qid]:
                wins += 1
            elif baseline[qid] and not hit:
                losses += 1
        cells.append(
            SweepCell(
                coupling=coupling,
                temperature=temperature,
                blend=blend,
                hits=hits,
                wins=wins,
                losses=losses,
                n=len(qids),
                converged=converged,
            )
        )
    return cells


def write_sweep_csv(cells: Sequence[SweepCell], path) -> None:
    """Phase-diagram table: one row per (J, T, blend) cell."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["coupling", "temperature", "blend", "hits", "wins", "losses", "n", "converged"]
        )
        for c in cells:
            writer.writerow(
                [
                    repr(c.coupling),
                    repr(c.temperature),
                    repr(c.blend),
                    c.hits,
                    c.wins,
                    c.losses,
                    c.n,
                    c.converged,
                ]
            )
