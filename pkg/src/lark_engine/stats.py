"""Paired nonparametric statistics for score matrices.

Implements the paired Wilcoxon signed-rank test (exact for n <= 20 by full
enumeration of the sign-assignment distribution, normal approximation with
tie and continuity corrections beyond), Cohen's d_z paired effect size,
Holm step-down multiplicity adjustment, per-round average ranks, and
normal-approximation confidence intervals.

Conventions: zero differences are dropped before ranking; tied magnitudes
share average ranks; the reported W is min(W+, W-).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping, Sequence

from .errors import ValidationError

logger = logging.getLogger(__name__)

_Z95 = 1.959964  # pinned 95% two-sided normal quantile

EXACT_ENUMERATION_LIMIT = 20


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float
    p_value: float
    n_effective: int
    degenerate: bool
    method: str


@dataclass(frozen=True)
class PairedSample:
    """Per-round score pairs for one (full, comparator) contrast."""

    label_full: str
    label_comparator: str
    full_scores: tuple[float, ...]
    comparator_scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.full_scores) != len(self.comparator_scores):
            raise ValidationError("paired sample: score vectors differ in length")
        if not self.full_scores:
            raise ValidationError("paired sample: needs at least one round")

    @property
    def differences(self) -> list[float]:
        return [a - b for a, b in zip(self.full_scores, self.comparator_scores)]


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class despite the name

    comparator: str
    n_rounds: int
    n_effective: int
    delta_mean: float
    d_z: float | None
    w_statistic: float
    p_raw: float
    p_holm: float
    degenerate: bool


def _signed_ranks(differences: Sequence[float]) -> tuple[list[int], list[int], list[int]]:
    """Doubled average ranks of |d|, split by sign, plus tie-group sizes.

    Doubling keeps average ranks integral (a tie of two at positions 3,4
    gets doubled rank 3+4=7), so the exact distribution is pure integer
    counting.
    """
    nonzero = [d for d in differences if d != 0]
    order = sorted(range(len(nonzero)), key=lambda i: abs(nonzero[i]))
    doubled = [0] * len(nonzero)
    ties = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and abs(nonzero[order[j + 1]]) == abs(nonzero[order[i]]):
            j += 1
        # positions i+1 .. j+1 (1-based) share the average rank.
        doubled_rank = (i + 1) + (j + 1)
        for idx in order[i : j + 1]:
            doubled[idx] = doubled_rank
        ties.append(j - i + 1)
        i = j + 1
    positive = [doubled[i] for i, d in enumerate(nonzero) if d > 0]
    negative = [doubled[i] for i, d in enumerate(nonzero) if d < 0]
    return positive, negative, ties


def _exact_p(doubled_ranks: Sequence[int], doubled_w: int) -> float:
    """Two-sided exact p over all 2^n sign assignments.

    The count of assignments at each W+ value is built by convolving the
    per-rank (skip / take) choices, which enumerates the full sign
    distribution without materializing 2^n cases.
    """
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for rank in doubled_ranks:
        for w in range(total, rank - 1, -1):
            counts[w] += counts[w - rank]
    at_most = sum(counts[: doubled_w + 1])
    return min(1.0, 2.0 * at_most / (2 ** len(doubled_ranks)))


def _approx_p(w: float, n: int, ties: Sequence[int]) -> float:
    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0
    variance -= sum(t**3 - t for t in ties) / 48.0
    if variance <= 0:
        return 1.0
    z = (w - mean + 0.5) / math.sqrt(variance)
    return min(1.0, 2.0 * NormalDist().cdf(z))


def wilcoxon_signed_rank(differences: Sequence[float]) -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test on per-round differences.

    Zero differences are dropped. W = min(W+, W-). Exact enumeration when
    the effective n is at most 20, else the tie- and continuity-corrected
    normal approximation.
    """
    if not differences:
        raise ValidationError("wilcoxon: needs at least one difference")
    positive, negative, ties = _signed_ranks(differences)
    n_eff = len(positive) + len(negative)
    if n_eff == 0:
        return WilcoxonResult(0.0, 1.0, 0, True, "degenerate")
    w_plus2 = sum(positive)
    w_minus2 = sum(negative)
    w2 = min(w_plus2, w_minus2)
    w = w2 / 2.0
    if n_eff <= EXACT_ENUMERATION_LIMIT:
        p = _exact_p(positive + negative, w2)
        method = "exact"
    else:
        p = _approx_p(w, n_eff, ties)
        method = "normal-approximation"
    return WilcoxonResult(w, p, n_eff, False, method)


def cohens_dz(differences: Sequence[float]) -> float | None:
    """Paired effect size: mean difference over the sample (n-1) standard
    deviation. None marks the undefined zero-variance case."""
    n = len(differences)
    if n < 2:
        raise ValidationError("cohens_dz: needs at least two differences")
    mean = sum(differences) / n
    variance = sum((d - mean) ** 2 for d in differences) / (n - 1)
    if variance == 0:
        return None
    return mean / math.sqrt(variance)


def holm_adjust(p_values: Sequence[float]) -> list[float]:
    """Holm step-down adjustment, returned in input order."""
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"p-value out of range: {p}")
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for position, index in enumerate(order):
        value = min(1.0, (m - position) * p_values[index])
        running = max(running, value)
        adjusted[index] = running
    return adjusted


def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float | None, float | None]:
    """Mean with a normal-approximation confidence interval over rounds.

    Returns (mean, lower, upper); the bounds are None below n=2 where the
    interval is undefined.
    """
    n = len(values)
    if n == 0:
        raise ValidationError("mean_ci: empty sample")
    mean = sum(values) / n
    if n < 2:
        return mean, None, None
    if abs(level - 0.95) < 1e-12:
        z = _Z95
    else:
        z = NormalDist().inv_cdf(0.5 + level / 2.0)
    sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    half = z * sd / math.sqrt(n)
    return mean, mean - half, mean + half


def average_ranks(values: Sequence[float]) -> list[float]:
    """Rank 1 = highest value; tied values share the average rank."""
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        average = (i + 1 + j + 1) / 2.0
        for idx in order[i : j + 1]:
            ranks[idx] = average
        i = j + 1
    return ranks


def per_round_ranks(
    matrix: Mapping[str, Sequence[float | None]],
) -> dict[str, list[float | None]]:
    """Within each round, rank systems by score (1 = best, ties averaged).

    Missing cells stay missing; the affected round is ranked over the
    present systems only.
    """
    systems = list(matrix.keys())
    if not systems:
        raise ValidationError("per_round_ranks: empty matrix")
    n_rounds = len(next(iter(matrix.values())))
    for name, row in matrix.items():
        if len(row) != n_rounds:
            raise ValidationError(f"per_round_ranks: ragged row for {name!r}")
    ranks: dict[str, list[float | None]] = {name: [None] * n_rounds for name in systems}
    for round_index in range(n_rounds):
        present = [name for name in systems if matrix[name][round_index] is not None]
        if not present:
            continue
        values = [matrix[name][round_index] for name in present]
        for name, rank in zip(present, average_ranks(values)):
            ranks[name][round_index] = rank
    return ranks


def pair_rounds(
    matrix: Mapping[str, Sequence[float | None]], baseline: str, comparator: str
) -> PairedSample:
    """Pairwise-complete rounds for one contrast; rounds with a missing cell
    on either side are excluded (logged), preserving pairing validity."""
    pairs = [
        (a, b)
        for a, b in zip(matrix[baseline], matrix[comparator])
        if a is not None and b is not None
    ]
    if not pairs:
        raise ValidationError(f"no complete rounds shared by {baseline!r} and {comparator!r}")
    dropped = len(matrix[baseline]) - len(pairs)
    if dropped:
        logger.info(
            "excluding %d incomplete round(s) from %s vs %s", dropped, baseline, comparator
        )
    return PairedSample(
        label_full=baseline,
        label_comparator=comparator,
        full_scores=tuple(a for a, _ in pairs),
        comparator_scores=tuple(b for _, b in pairs),
    )


def paired_tests(
    matrix: Mapping[str, Sequence[float | None]], baseline: str
) -> list[TestResult]:
    """Wilcoxon + d_z for the baseline against every other system, with a
    single Holm family across all comparators."""
    if baseline not in matrix:
        raise ValidationError(f"baseline {baseline!r} not in the score matrix")
    comparators = [name for name in matrix if name != baseline]
    partial: list[tuple[PairedSample, WilcoxonResult]] = []
    for name in comparators:
        sample = pair_rounds(matrix, baseline, name)
        partial.append((sample, wilcoxon_signed_rank(sample.differences)))
    adjusted = holm_adjust([w.p_value for _, w in partial])
    results = []
    for (sample, wilcoxon), p_holm in zip(partial, adjusted):
        diffs = sample.differences
        results.append(
            TestResult(
                comparator=sample.label_comparator,
                n_rounds=len(diffs),
                n_effective=wilcoxon.n_effective,
                delta_mean=sum(diffs) / len(diffs),
                d_z=cohens_dz(diffs) if len(diffs) >= 2 else None,
                w_statistic=wilcoxon.w_statistic,
                p_raw=wilcoxon.p_value,
                p_holm=p_holm,
                degenerate=wilcoxon.degenerate,
            )
        )
    return results


def paired_deltas(
    matrix: Mapping[str, Sequence[float | None]],
    ranks: Mapping[str, Sequence[float | None]],
    baseline: str,
    comparator: str,
) -> tuple[tuple[float, float | None, float | None], tuple[float, float | None, float | None]]:
    """Ablation-style deltas: (score_baseline - score_comparator) and
    (rank_comparator - rank_baseline), each as (mean, ci_lo, ci_hi)."""
    score_diffs = [
        a - b
        for a, b in zip(matrix[baseline], matrix[comparator])
        if a is not None and b is not None
    ]
    rank_diffs = [
        b - a
        for a, b in zip(ranks[baseline], ranks[comparator])
        if a is not None and b is not None
    ]
    if not score_diffs or not rank_diffs:
        raise ValidationError(f"no shared rounds between {baseline!r} and {comparator!r}")
    return mean_ci(score_diffs), mean_ci(rank_diffs)
