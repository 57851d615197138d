"""Influence-weighted Borda aggregation of stakeholder rankings.

Scores are positional: a strategy ranked r-th out of k by stakeholder j
earns w_j * (k - r) points. The consensus pick is the argmax with a
deterministic tie-break (lower token count, then lexicographic id), and
dispersion of the score vector is summarized by its coefficient of
variation.

Arithmetic is duck-typed: passing exact weights (fractions.Fraction) yields
exact scores, which is how the point-conservation identity is asserted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import RankingProfile
from .errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BordaResult:
    """Score vector plus the tie-broken consensus pick and its dispersion.

    ``cv`` is None when the score vector has zero mean (degenerate k=1
    populations); this is the documented undefined marker, never infinity.
    """

    scores: dict[str, float]
    consensus_id: str
    cv: float | None


def _check_profiles(profiles: Sequence[RankingProfile], k: int) -> list[str]:
    if k <= 0:
        raise ValidationError(f"population size must be positive, got {k}")
    if not profiles:
        raise ValidationError("at least one ranking profile is required")
    reference = sorted(profiles[0].ranking)
    if len(reference) != k:
        raise ValidationError(
            f"profile {profiles[0].stakeholder_id}: ranks {len(reference)} ids, expected {k}"
        )
    for profile in profiles[1:]:
        if sorted(profile.ranking) != reference:
            raise ValidationError(
                f"profile {profile.stakeholder_id}: id set differs from other profiles"
            )
    return reference


def consensus_from_scores(
    scores: Mapping[str, float], token_counts: Mapping[str, int] | None = None
) -> str:
    """Argmax of the score vector; ties prefer the shorter strategy, then the
    lexicographically smaller id."""
    if not scores:
        raise ValidationError("empty score vector")

    def sort_key(item):
        sid, score = item
        tokens = token_counts.get(sid, 0) if token_counts else 0
        return (-score, tokens, sid)

    return min(scores.items(), key=sort_key)[0]


def consensus_cv(scores: Sequence[float]) -> float | None:
    """Coefficient of variation using the population (divide-by-k) standard
    deviation. Returns None for a zero-mean vector."""
    if not scores:
        raise ValidationError("empty score vector")
    k = len(scores)
    mean = sum(scores) / k
    if mean == 0:
        logger.info("consensus dispersion undefined: zero-mean score vector")
        return None
    variance = sum((s - mean) ** 2 for s in scores) / k
    return math.sqrt(variance) / mean


def borda_scores(
    profiles: Sequence[RankingProfile],
    weights: Sequence[float],
    k: int,
    token_counts: Mapping[str, int] | None = None,
) -> BordaResult:
    """Aggregate ordinal rankings into influence-weighted positional scores.

    Each profile must be a permutation of the same k ids; weights align with
    profiles and must already be normalized (sum 1 within 1e-9).
    """
    ids = _check_profiles(profiles, k)
    if len(weights) != len(profiles):
        raise ValidationError(
            f"{len(weights)} weights for {len(profiles)} profiles"
        )
    total = sum(weights)
    if abs(float(total) - 1.0) > 1e-9:
        raise ValidationError(f"weights must be normalized, sum is {total}")
    scores: dict = {sid: 0 for sid in ids}
    for profile, weight in zip(profiles, weights):
        for position, sid in enumerate(profile.ranking):
            # rank is position+1, so positional points are k - rank.
            scores[sid] = scores[sid] + weight * (k - position - 1)
    cv = consensus_cv(list(scores.values()))
    consensus = consensus_from_scores(scores, token_counts)
    return BordaResult(scores=scores, consensus_id=consensus, cv=cv)


def average_scores(profiles: Sequence[RankingProfile], k: int) -> dict[str, float]:
    """Ablation scoring: unweighted mean of positional points across
    stakeholders, ignoring influence weights."""
    ids = _check_profiles(profiles, k)
    m = len(profiles)
    totals: dict = {sid: 0 for sid in ids}
    for profile in profiles:
        for position, sid in enumerate(profile.ranking):
            totals[sid] = totals[sid] + (k - position - 1)
    return {sid: totals[sid] / m for sid in ids}


def repair_ranking(
    candidate: Sequence[str], population_order: Sequence[str]
) -> tuple[tuple[str, ...], bool]:
    """Coerce a possibly invalid ranking into a permutation of the population.

    Keeps the first occurrence of each valid id in candidate order, drops
    unknown ids, then appends missing ids in current population order.
    Returns (ranking, repaired_flag).
    """
    valid = set(population_order)
    seen: list[str] = []
    for sid in candidate:
        if sid in valid and sid not in seen:
            seen.append(sid)
    missing = [sid for sid in population_order if sid not in seen]
    repaired = bool(missing) or list(candidate) != seen
    if repaired:
        logger.warning(
            "ranking repaired: kept %d of %d entries, appended %d missing",
            len(seen), len(candidate), len(missing),
        )
    return tuple(seen + missing), repaired
