"""Fusion operators over two calibrated retrieval systems.

The primary operator mixes within-system Boltzmann probabilities with a
consensus bonus:

    score(d) = alpha * P_v(d) + (1 - alpha) * P_g(d) + beta * 1[d in both]

Alternatives cover rank-only fusion (reciprocal rank), a linear combination
of normalized scores, and eight further strategies: log-linear (geometric
mean in probability space), power mean over percentiles, Tsallis
q-exponential weighting, Gumbel copula, Plackett-Luce strength estimation,
quantum-style interference, optimal-transport alignment to a Gaussian
target, and Wasserstein-modulated temperature.

Documents present in only one system contribute probability 0 to additive
operators and a small floor value to multiplicative ones (otherwise every
single-system document would score exactly zero and the operator would
collapse).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .calibration import CalibratedList, DEFAULT_EPSILON, boltzmann, calibrate
from .retrieval import ScoreList

logger = logging.getLogger(__name__)

STRATEGIES = (
    "thermo",
    "rrf",
    "linear",
    "log_linear",
    "power_mean",
    "tsallis",
    "gumbel_copula",
    "plackett_luce",
    "quantum",
    "ot_align",
    "wasserstein_t",
)

# Strategies where a document missing from one system takes a floor value
# rather than 0 (multiplicative combination would otherwise zero it out).
_MULTIPLICATIVE = {"log_linear", "gumbel_copula", "plackett_luce", "quantum"}


@dataclass(frozen=True)
class FusionConfig:
    strategy: str = "thermo"
    alpha: float = 0.7
    beta: float = 0.0
    k: int = 10
    rrf_k0: float = 60.0
    power_p: float = 0.5
    tsallis_q: float = 1.5
    copula_theta: float | None = None  # None: estimate from overlap documents
    quantum_theta: float = 0.0
    t0: float | None = None  # None: per-system auto temperature
    gamma: float = 1.0
    pl_smoothing: float = 0.1
    pl_max_iterations: int = 200
    pl_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not (math.isfinite(self.alpha) and 0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must be finite and in [0, 1]")
        if not (math.isfinite(self.beta) and self.beta >= 0.0):
            raise ValueError("beta must be finite and >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.power_p == 0.0:
            raise ValueError("power mean exponent p must be nonzero")
        if self.tsallis_q <= 0.0:
            raise ValueError("tsallis q must be > 0")
        if self.copula_theta is not None and self.copula_theta < 1.0:
            raise ValueError("copula theta must be >= 1")
        if self.t0 is not None and self.t0 <= 0.0:
            raise ValueError("t0 must be > 0")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class FusedEntry:
    passage_id: str
    score: float
    in_vector: bool
    in_graph: bool

    @property
    def consensus(self) -> bool:
        return self.in_vector and self.in_graph


@dataclass(frozen=True)
class FusedRanking:
    entries: tuple[FusedEntry, ...]

    def ids(self) -> tuple[str, ...]:
        return tuple(e.passage_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _build_ranking(
    scores: Mapping[str, float], v_ids: set[str], g_ids: set[str], k: int
) -> FusedRanking:
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return FusedRanking(
        entries=tuple(
            FusedEntry(
                passage_id=pid,
                score=float(s),
                in_vector=pid in v_ids,
                in_graph=pid in g_ids,
            )
            for pid, s in ordered
        )
    )


def _prob_maps(
    v: CalibratedList | None, g: CalibratedList | None
) -> tuple[dict[str, float], dict[str, float]]:
    return (
        v.probability_map() if v is not None else {},
        g.probability_map() if g is not None else {},
    )


def thermo_fuse(
    v: CalibratedList | None,
    g: CalibratedList | None,
    alpha: float,
    beta: float,
    k: int,
) -> FusedRanking:
    """Weighted Boltzmann fusion with consensus boost."""
    pv, pg = _prob_maps(v, g)
    return _additive_fuse(pv, pg, alpha, beta, k)


def _additive_fuse(
    pv: Mapping[str, float], pg: Mapping[str, float], alpha: float, beta: float, k: int
) -> FusedRanking:
    scores = {}
    for pid in set(pv) | set(pg):
        s = alpha * pv.get(pid, 0.0) + (1.0 - alpha) * pg.get(pid, 0.0)
        if pid in pv and pid in pg:
            s += beta
        scores[pid] = s
    return _build_ranking(scores, set(pv), set(pg), k)


def rrf_fuse(
    v: ScoreList | None, g: ScoreList | None, k0: float = 60.0, k: int = 10
) -> FusedRanking:
    """Reciprocal rank fusion: score(d) = sum over lists of 1 / (k0 + rank).

    Ranks are 1-based within each list; raw score values are ignored.
    """
    scores: dict[str, float] = {}
    v_ids = set(v.ids()) if v is not None else set()
    g_ids = set(g.ids()) if g is not None else set()
    for score_list in (v, g):
        if score_list is None:
            continue
        for rank, (pid, _) in enumerate(score_list.entries, start=1):
            scores[pid] = scores.get(pid, 0.0) + 1.0 / (k0 + rank)
    return _build_ranking(scores, v_ids, g_ids, k)


def linear_fuse(
    v_percentiles: Mapping[str, float] | None,
    g_percentiles: Mapping[str, float] | None,
    alpha: float,
    beta: float,
    k: int,
) -> FusedRanking:
    """Linear combination of normalized scores with consensus boost."""
    return _additive_fuse(v_percentiles or {}, g_percentiles or {}, alpha, beta, k)


# ---------------------------------------------------------------------------
# Additional strategies
# ---------------------------------------------------------------------------


def _floor(v: CalibratedList | None, g: CalibratedList | None) -> float:
    for lst in (v, g):
        if lst is not None:
            return lst.epsilon
    return DEFAULT_EPSILON


def _log_linear(v, g, config: FusionConfig) -> FusedRanking:
    pv, pg = _prob_maps(v, g)
    floor = _floor(v, g)
    a = config.alpha
    scores = {
        pid: pv.get(pid, floor) ** a * pg.get(pid, floor) ** (1.0 - a)
        for pid in set(pv) | set(pg)
    }
    return _build_ranking(scores, set(pv), set(pg), config.k)


def _power_mean(v, g, config: FusionConfig) -> FusedRanking:
    """Weighted power mean of raw percentile ranks; p < 1 rewards consensus."""
    pv = v.percentile_map() if v is not None else {}
    pg = g.percentile_map() if g is not None else {}
    a, p = config.alpha, config.power_p
    scores = {}
    for pid in set(pv) | set(pg):
        x, y = pv.get(pid, 0.0), pg.get(pid, 0.0)
        if p < 0.0 and (x == 0.0 or y == 0.0):
            scores[pid] = 0.0  # harmonic-type mean with a zero argument
        else:
            scores[pid] = (a * x**p + (1.0 - a) * y**p) ** (1.0 / p)
    return _build_ranking(scores, set(pv), set(pg), config.k)


def _q_exponential(x: float, q: float) -> float:
    """Tsallis q-exponential [1 + (1-q) x]_+^(1/(1-q)); q = 1 recovers exp."""
    if q == 1.0:
        return math.exp(x)
    arg = (1.0 - q) * x
    if arg <= -1.0:
        return 0.0
    return math.exp(math.log1p(arg) / (1.0 - q))


def _tsallis_probabilities(cal: CalibratedList, q: float) -> dict[str, float]:
    weights = {
        e.passage_id: _q_exponential(-e.energy / cal.temperature, q)
        for e in cal.entries
    }
    z = sum(weights.values())
    if z == 0.0:
        # every weight truncated: fall back to the max-entropy choice
        return {pid: 1.0 / len(weights) for pid in weights}
    return {pid: w / z for pid, w in weights.items()}


def _tsallis(v, g, config: FusionConfig) -> FusedRanking:
    pv = _tsallis_probabilities(v, config.tsallis_q) if v is not None else {}
    pg = _tsallis_probabilities(g, config.tsallis_q) if g is not None else {}
    return _additive_fuse(pv, pg, config.alpha, config.beta, config.k)


def _estimate_copula_theta(
    v_pct: Mapping[str, float], g_pct: Mapping[str, float], overlap: Sequence[str]
) -> float:
    """Moment estimator theta = 1 / (1 - Kendall tau), clamped to [1, 20]."""
    tau = scipy_stats.kendalltau(
        [v_pct[pid] for pid in overlap], [g_pct[pid] for pid in overlap]
    ).statistic
    if tau is None or math.isnan(tau):
        return 1.0  # no usable signal: independence copula
    if tau >= 1.0:
        return 20.0
    return min(20.0, max(1.0, 1.0 / (1.0 - tau)))


def _gumbel_copula(v, g, config: FusionConfig) -> FusedRanking:
    v_pct = v.percentile_map() if v is not None else {}
    g_pct = g.percentile_map() if g is not None else {}
    overlap = sorted(set(v_pct) & set(g_pct))
    if config.copula_theta is not None:
        theta = config.copula_theta
    else:
        if len(overlap) < 2:
            logger.warning(
                "gumbel_copula: overlap %d < 2, falling back to thermo", len(overlap)
            )
            return thermo_fuse(v, g, config.alpha, config.beta, config.k)
        theta = _estimate_copula_theta(v_pct, g_pct, overlap)
    floor = _floor(v, g)
    scores = {}
    for pid in set(v_pct) | set(g_pct):
        u = min(1.0, max(floor, v_pct.get(pid, floor)))
        w = min(1.0, max(floor, g_pct.get(pid, floor)))
        scores[pid] = math.exp(
            -(((-math.log(u)) ** theta + (-math.log(w)) ** theta) ** (1.0 / theta))
        )
    return _build_ranking(scores, set(v_pct), set(g_pct), config.k)


def plackett_luce_strengths(
    ranked_ids: Sequence[str],
    smoothing: float = 0.1,
    max_iterations: int = 200,
    tol: float = 1e-9,
) -> dict[str, float]:
    """MM estimate of choice-model strengths from one total ranking.

    A single total ranking has no finite MLE (the last item's strength runs
    to zero), so each MM update adds a small pseudo-count. Strengths come
    back normalized to sum 1 and strictly decreasing along the ranking.
    """
    m = len(ranked_ids)
    if m == 0:
        return {}
    if m == 1:
        return {ranked_ids[0]: 1.0}
    gamma = np.full(m, 1.0 / m)
    wins = np.ones(m)
    wins[-1] = 0.0  # the last item never wins a choice stage
    for _ in range(max_iterations):
        # suffix[t] = total strength still available at choice stage t
        suffix = np.cumsum(gamma[::-1])[::-1]
        inv_cum = np.cumsum(1.0 / suffix[:-1])  # stages 0..m-2
        denom = inv_cum[np.minimum(np.arange(m), m - 2)]
        updated = (wins + smoothing) / denom
        updated /= updated.sum()
        delta = float(np.abs(updated - gamma).max())
        gamma = updated
        if delta < tol:
            break
    return {pid: float(s) for pid, s in zip(ranked_ids, gamma)}


def _plackett_luce(v, g, config: FusionConfig) -> FusedRanking:
    v_ids = v.ids() if v is not None else ()
    g_ids = g.ids() if g is not None else ()
    overlap = set(v_ids) & set(g_ids)
    if len(overlap) < 2:
        logger.warning(
            "plackett_luce: overlap %d < 2, falling back to thermo", len(overlap)
        )
        return thermo_fuse(v, g, config.alpha, config.beta, config.k)
    sv = plackett_luce_strengths(
        v_ids, config.pl_smoothing, config.pl_max_iterations, config.pl_tol
    )
    sg = plackett_luce_strengths(
        g_ids, config.pl_smoothing, config.pl_max_iterations, config.pl_tol
    )
    floor = _floor(v, g)
    a = config.alpha
    scores = {
        pid: sv.get(pid, floor) ** a * sg.get(pid, floor) ** (1.0 - a)
        for pid in set(v_ids) | set(g_ids)
    }
    return _build_ranking(scores, set(v_ids), set(g_ids), config.k)


def _quantum(v, g, config: FusionConfig) -> FusedRanking:
    """Interference combination P_v + P_g + 2 sqrt(P_v P_g) cos(theta)."""
    pv, pg = _prob_maps(v, g)
    floor = _floor(v, g)
    cos_t = math.cos(config.quantum_theta)
    scores = {}
    for pid in set(pv) | set(pg):
        x, y = pv.get(pid, floor), pg.get(pid, floor)
        scores[pid] = x + y + 2.0 * math.sqrt(x * y) * cos_t
    return _build_ranking(scores, set(pv), set(pg), config.k)


def _ot_align(v, g, config: FusionConfig) -> FusedRanking:
    """Quantile-match each system's percentiles to a standard normal, then mix."""
    v_pct = v.percentile_map() if v is not None else {}
    g_pct = g.percentile_map() if g is not None else {}
    floor = _floor(v, g)

    def z(p: float) -> float:
        return float(scipy_stats.norm.ppf(min(1.0 - floor, max(floor, p))))

    a = config.alpha
    scores = {}
    for pid in set(v_pct) | set(g_pct):
        zv = z(v_pct[pid]) if pid in v_pct else 0.0
        zg = z(g_pct[pid]) if pid in g_pct else 0.0
        scores[pid] = a * zv + (1.0 - a) * zg
    return _build_ranking(scores, set(v_pct), set(g_pct), config.k)


def _wasserstein_t(v, g, config: FusionConfig) -> FusedRanking:
    """Thermo fusion at temperatures scaled by T0 * (1 + gamma * W1).

    W1 is the Wasserstein-1 distance between the two systems' percentile
    distributions; far-apart score shapes soften both systems' weights.
    """
    if v is not None and g is not None:
        w1 = float(
            scipy_stats.wasserstein_distance(
                [e.percentile for e in v.entries], [e.percentile for e in g.entries]
            )
        )
    else:
        w1 = 0.0
    scale = 1.0 + config.gamma * w1

    def reweight(cal: CalibratedList | None) -> dict[str, float]:
        if cal is None:
            return {}
        t0 = config.t0 if config.t0 is not None else cal.temperature
        return boltzmann(cal.energy_map(), t0 * scale)

    return _additive_fuse(reweight(v), reweight(g), config.alpha, config.beta, config.k)


_STRATEGY_FNS = {
    "log_linear": _log_linear,
    "power_mean": _power_mean,
    "tsallis": _tsallis,
    "gumbel_copula": _gumbel_copula,
    "plackett_luce": _plackett_luce,
    "quantum": _quantum,
    "ot_align": _ot_align,
    "wasserstein_t": _wasserstein_t,
}


def strategy_fuse(
    name: str,
    v: CalibratedList | None,
    g: CalibratedList | None,
    config: FusionConfig,
) -> FusedRanking:
    """Dispatch to one of the eight alternative fusion strategies."""
    try:
        fn = _STRATEGY_FNS[name]
    except KeyError:
        raise ValueError(
            f"unknown fusion strategy {name!r}; expected one of {sorted(_STRATEGY_FNS)}"
        )
    return fn(v, g, config)


def fuse_score_lists(
    v_scores: ScoreList | None,
    g_scores: ScoreList | None,
    config: FusionConfig,
    normalizer: str = "pit",
    temperature: float | str = "auto",
    epsilon: float = DEFAULT_EPSILON,
) -> FusedRanking:
    """Calibrate raw score lists as needed and apply the configured strategy."""

    def cal(lst: ScoreList | None) -> CalibratedList | None:
        if lst is None or not lst.entries:
            return None
        return calibrate(lst, normalizer=normalizer, temperature=temperature, epsilon=epsilon)

    if config.strategy == "rrf":
        return rrf_fuse(v_scores, g_scores, k0=config.rrf_k0, k=config.k)
    if config.strategy == "linear":
        cv, cg = cal(v_scores), cal(g_scores)
        return linear_fuse(
            cv.percentile_map() if cv else None,
            cg.percentile_map() if cg else None,
            config.alpha,
            config.beta,
            config.k,
        )
    cv, cg = cal(v_scores), cal(g_scores)
    if config.strategy == "thermo":
        return thermo_fuse(cv, cg, config.alpha, config.beta, config.k)
    return strategy_fuse(config.strategy, cv, cg, config)
