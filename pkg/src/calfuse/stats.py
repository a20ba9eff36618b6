"""Statistics for paired retrieval comparisons.

The exact McNemar test here is the two-sided binomial sign test on the
discordant counts: with n = W + L discordant pairs,

    p = min(1, 2 * P(X <= min(W, L))),  X ~ Binomial(n, 1/2),

summed exactly over binomial coefficients. The Wilson score interval is the
standard form without continuity correction, and the odds ratio applies the
Haldane 0.5 correction when a cell is empty. The bootstrap is a percentile
bootstrap of the mean with a seeded generator.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


def mcnemar_exact(wins: int, losses: int) -> float:
    """Exact two-sided binomial sign test on the discordant pair counts."""
    if wins < 0 or losses < 0:
        raise ValueError("wins and losses must be >= 0")
    n = wins + losses
    if n == 0:
        return 1.0
    m = min(wins, losses)
    tail = sum(math.comb(n, k) for k in range(m + 1))
    return min(1.0, 2.0 * tail / 2**n)


def wilson_ci(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (no continuity correction)."""
    if n <= 0:
        raise ValueError("n must be > 0")
    if not 0 <= successes <= n:
        raise ValueError("successes must be in [0, n]")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def needs_haldane(method_successes: int, baseline_successes: int, n: int) -> bool:
    """True when any cell of the odds-ratio table is zero."""
    return (
        method_successes in (0, n)
        or baseline_successes in (0, n)
    )


def odds_ratio(method_successes: int, baseline_successes: int, n: int) -> float:
    """(a / (n - a)) / (b / (n - b)); zero cells get the Haldane 0.5 correction.

    Callers that need to surface the correction in reports can check
    needs_haldane() on the same counts.
    """
    if n <= 0:
        raise ValueError("n must be > 0")
    a, b = method_successes, baseline_successes
    if not (0 <= a <= n and 0 <= b <= n):
        raise ValueError("success counts must be in [0, n]")
    if needs_haldane(a, b, n):
        a_, b_, n_ = a + 0.5, b + 0.5, n + 1.0
        return (a_ / (n_ - a_)) / (b_ / (n_ - b_))
    return (a / (n - a)) / (b / (n - b))


def bootstrap_ci(
    values: Sequence[float],
    resamples: int = 10_000,
    seed: int = 0,
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean; deterministic under a fixed seed."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValueError("values must be non-empty")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, data.size, size=(resamples, data.size))
    means = data[idx].mean(axis=1)
    lo, hi = np.percentile(means, [100 * alpha / 2.0, 100 * (1.0 - alpha / 2.0)])
    return (float(lo), float(hi))
