"""Retrieval metrics and paired win/loss comparison.

Four per-query booleans are recomputable pure functions of (retrieved,
gold_chain, K): the last gold hop in the top K, all gold passages in the
top K ("fullsup"; "full" is the same check under its report alias), and any
gold passage in the top K. Paired comparison tallies the 2x2 outcome table
between a method and a baseline for McNemar-style analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

METRIC_NAMES = ("lasthop", "fullsup", "any", "full")


def _check_inputs(gold_chain: Sequence[str], k: int) -> None:
    if not gold_chain:
        raise ValueError("gold_chain must be non-empty")
    if k < 1:
        raise ValueError("K must be >= 1")


def lasthop_at_k(retrieved: Sequence[str], gold_chain: Sequence[str], k: int) -> bool:
    """True iff the final gold hop appears in the first K retrieved ids."""
    _check_inputs(gold_chain, k)
    return gold_chain[-1] in retrieved[:k]


def fullsup_at_k(retrieved: Sequence[str], gold_chain: Sequence[str], k: int) -> bool:
    """True iff every gold passage appears in the first K retrieved ids."""
    _check_inputs(gold_chain, k)
    top = set(retrieved[:k])
    return all(pid in top for pid in gold_chain)


def any_at_k(retrieved: Sequence[str], gold_chain: Sequence[str], k: int) -> bool:
    """True iff at least one gold passage appears in the first K retrieved ids."""
    _check_inputs(gold_chain, k)
    top = set(retrieved[:k])
    return any(pid in top for pid in gold_chain)


def full_at_k(retrieved: Sequence[str], gold_chain: Sequence[str], k: int) -> bool:
    """Alias of fullsup_at_k, kept as a separate name for report parity."""
    return fullsup_at_k(retrieved, gold_chain, k)


_METRIC_FNS: dict[str, Callable[[Sequence[str], Sequence[str], int], bool]] = {
    "lasthop": lasthop_at_k,
    "fullsup": fullsup_at_k,
    "any": any_at_k,
    "full": full_at_k,
}


@dataclass(frozen=True)
class QueryOutcome:
    """Per-query retrieval outcome with metric booleans at each K."""

    query_id: str
    retrieved: tuple[str, ...]
    lasthop_hit: Mapping[int, bool]
    fullsup_hit: Mapping[int, bool]
    any_hit: Mapping[int, bool]
    full_hit: Mapping[int, bool]

    @classmethod
    def evaluate(
        cls,
        query_id: str,
        retrieved: Sequence[str],
        gold_chain: Sequence[str],
        ks: Iterable[int],
    ) -> "QueryOutcome":
        ks = tuple(ks)
        return cls(
            query_id=query_id,
            retrieved=tuple(retrieved),
            lasthop_hit={k: lasthop_at_k(retrieved, gold_chain, k) for k in ks},
            fullsup_hit={k: fullsup_at_k(retrieved, gold_chain, k) for k in ks},
            any_hit={k: any_at_k(retrieved, gold_chain, k) for k in ks},
            full_hit={k: full_at_k(retrieved, gold_chain, k) for k in ks},
        )

    def hit(self, metric: str, k: int) -> bool:
        field = {
            "lasthop": self.lasthop_hit,
            "fullsup": self.fullsup_hit,
            "any": self.any_hit,
            "full": self.full_hit,
        }[metric]
        return field[k]


def metric_selector(metric: str, k: int) -> Callable[[QueryOutcome], bool]:
    if metric not in _METRIC_FNS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRIC_NAMES}")
    return lambda outcome: outcome.hit(metric, k)


@dataclass(frozen=True)
class PairedComparison:
    """2x2 tally of per-query outcomes: method vs. baseline."""

    wins: int  # method hit, baseline miss
    losses: int  # baseline hit, method miss
    both: int
    neither: int

    @property
    def total(self) -> int:
        return self.wins + self.losses + self.both + self.neither


def pair_outcomes(
    baseline: Iterable[QueryOutcome],
    method: Iterable[QueryOutcome],
    selector: Callable[[QueryOutcome], bool],
) -> PairedComparison:
    """Tally the paired 2x2 table keyed by query id.

    The two runs must cover exactly the same query set.
    """
    base = {o.query_id: o for o in baseline}
    meth = {o.query_id: o for o in method}
    if set(base) != set(meth):
        only_base = sorted(set(base) - set(meth))[:3]
        only_meth = sorted(set(meth) - set(base))[:3]
        raise ValueError(
            f"mismatched query sets (baseline-only {only_base}, method-only {only_meth})"
        )
    wins = losses = both = neither = 0
    for qid in base:
        b, m = selector(base[qid]), selector(meth[qid])
        if m and not b:
            wins += 1
        elif b and not m:
            losses += 1
        elif b and m:
            both += 1
        else:
            neither += 1
    return PairedComparison(wins=wins, losses=losses, both=both, neither=neither)
