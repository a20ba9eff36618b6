"""Score calibration: percentile ranks, energies, and Boltzmann weights.

Raw scores from each retrieval system are first mapped to a common unit-free
scale. The primary normalizer is the percentile rank

    p_hat(s_i) = |{j : s_j <= s_i}| / N,

i.e. the empirical CDF evaluated at each score (ties share a percentile).
Min-max and raw/max normalizers cover the ablation axes. Normalized values v
then become energies E = -ln(v + eps), a temperature is set to half the mean
energy (or fixed), and within-system Boltzmann probabilities follow from an
overflow-safe softmax of -E/T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .retrieval import ScoreList

DEFAULT_EPSILON = 1e-6
TEMPERATURE_FLOOR = 1e-6

NORMALIZERS = ("pit", "minmax", "rawmax")


def pit_normalize(score_list: ScoreList) -> dict[str, float]:
    """Percentile rank of each entry within its own list (empirical CDF)."""
    if not score_list.entries:
        raise ValueError("cannot compute percentiles of an empty score list")
    scores = score_list.scores()
    ascending = np.sort(scores)
    counts = np.searchsorted(ascending, scores, side="right")
    n = len(scores)
    return {
        pid: float(c) / n for (pid, _), c in zip(score_list.entries, counts)
    }


def minmax_normalize(score_list: ScoreList) -> dict[str, float]:
    """(s - min) / (max - min); a constant list maps to all ones."""
    if not score_list.entries:
        raise ValueError("cannot normalize an empty score list")
    scores = score_list.scores()
    lo, hi = float(scores.min()), float(scores.max())
    if hi == lo:
        return {pid: 1.0 for pid, _ in score_list.entries}
    span = hi - lo
    return {pid: (s - lo) / span for pid, s in score_list.entries}


def rawmax_normalize(score_list: ScoreList) -> dict[str, float]:
    """s / max; requires a positive maximum score."""
    if not score_list.entries:
        raise ValueError("cannot normalize an empty score list")
    hi = float(score_list.scores().max())
    if hi <= 0.0:
        raise ValueError(f"raw/max normalization needs max score > 0, got {hi}")
    return {pid: s / hi for pid, s in score_list.entries}


def energies(
    percentiles: Mapping[str, float], epsilon: float = DEFAULT_EPSILON
) -> dict[str, float]:
    """E = -ln(p + eps); eps > 0 prevents the singularity at p = 0."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    out = {}
    for pid, p in percentiles.items():
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"normalized value for {pid!r} outside [0, 1]: {p}")
        out[pid] = -math.log(p + epsilon)
    return out


def auto_temperature(energy_map: Mapping[str, float]) -> float:
    """Half the mean energy, floored at a tiny positive value.

    The floor covers degenerate lists where every percentile is 1 and all
    energies are slightly negative.
    """
    if not energy_map:
        raise ValueError("cannot compute a temperature from no energies")
    t = sum(energy_map.values()) / len(energy_map) / 2.0
    return t if t > 0.0 else TEMPERATURE_FLOOR


def boltzmann(energy_map: Mapping[str, float], temperature: float) -> dict[str, float]:
    """P_i = exp(-E_i / T) / Z, computed with a max-shift for overflow safety."""
    if temperature <= 0.0:
        raise ValueError("temperature must be > 0")
    if not energy_map:
        return {}
    pids = list(energy_map)
    logits = np.array([-energy_map[p] / temperature for p in pids])
    logits -= logits.max()
    weights = np.exp(logits)
    probs = weights / weights.sum()
    return {pid: float(p) for pid, p in zip(pids, probs)}


@dataclass(frozen=True)
class CalibratedEntry:
    passage_id: str
    raw_score: float
    percentile: float
    energy: float
    probability: float


@dataclass(frozen=True)
class CalibratedList:
    """A ScoreList pushed through normalize -> energy -> Boltzmann."""

    system: str
    entries: tuple[CalibratedEntry, ...]
    temperature: float
    epsilon: float
    normalizer: str

    @property
    def N(self) -> int:
        return len(self.entries)

    def ids(self) -> tuple[str, ...]:
        return tuple(e.passage_id for e in self.entries)

    def probability_map(self) -> dict[str, float]:
        return {e.passage_id: e.probability for e in self.entries}

    def percentile_map(self) -> dict[str, float]:
        return {e.passage_id: e.percentile for e in self.entries}

    def energy_map(self) -> dict[str, float]:
        return {e.passage_id: e.energy for e in self.entries}


_NORMALIZE_FNS = {
    "pit": pit_normalize,
    "minmax": minmax_normalize,
    "rawmax": rawmax_normalize,
}


def calibrate(
    score_list: ScoreList,
    normalizer: str = "pit",
    temperature: float | str = "auto",
    epsilon: float = DEFAULT_EPSILON,
) -> CalibratedList:
    """Full calibration pipeline for one system's score list.

    Min-max and raw/max values substitute for the percentile rank in the
    energy step, so all three normalizers share the temperature and Boltzmann
    machinery. temperature is either the string "auto" (half mean energy) or
    a fixed positive float.
    """
    try:
        normalize = _NORMALIZE_FNS[normalizer]
    except KeyError:
        raise ValueError(f"unknown normalizer {normalizer!r}; expected one of {NORMALIZERS}")
    percentiles = normalize(score_list)
    energy_map = energies(percentiles, epsilon=epsilon)
    if temperature == "auto":
        t = auto_temperature(energy_map)
    else:
        t = float(temperature)
        if t <= 0.0:
            raise ValueError("fixed temperature must be > 0")
    probabilities = boltzmann(energy_map, t)
    entries = tuple(
        CalibratedEntry(
            passage_id=pid,
            raw_score=raw,
            percentile=percentiles[pid],
            energy=energy_map[pid],
            probability=probabilities[pid],
        )
        for pid, raw in score_list.entries
    )
    return CalibratedList(
        system=score_list.system,
        entries=entries,
        temperature=t,
        epsilon=epsilon,
        normalizer=normalizer,
    )
