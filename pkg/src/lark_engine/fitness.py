"""Compute-aware fitness shaping.

Three pure operations: the token-overage penalty applied to an aggregated
score, the logistic duplication probability, and the population
quality-per-token efficiency metric.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError

logger = logging.getLogger(__name__)

# Guards so recorded probabilities stay strictly inside (0, 1) even when the
# logistic saturates in float arithmetic.
_P_FLOOR = 1e-300
_P_CEIL = 1.0 - 2.220446049250313e-16


@dataclass(frozen=True)
class FitnessRecord:
    """Per-strategy fitness snapshot for one scoring round."""

    strategy_id: str
    borda: float
    adjusted: float
    token_count: int
    p_dup: float
    penalized: bool

    def to_dict(self) -> dict:
        return {
            "strategy_id": self.strategy_id,
            "borda": self.borda,
            "adjusted": self.adjusted,
            "token_count": self.token_count,
            "p_dup": self.p_dup,
            "penalized": self.penalized,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitnessRecord":
        return cls(
            strategy_id=data["strategy_id"],
            borda=data["borda"],
            adjusted=data["adjusted"],
            token_count=data["token_count"],
            p_dup=data["p_dup"],
            penalized=data["penalized"],
        )


def compute_adjusted(borda: float, tokens: int, target: int, lam: float) -> float:
    """Discount a score by the relative token overage.

    adjusted = borda * (1 - lam * max(0, (tokens - target) / target)),
    clamped at 0 when the factor goes negative (tokens > target * (1 + 1/lam)).
    """
    if target <= 0:
        raise ValidationError(f"token target must be positive, got {target}")
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"penalty coefficient must be in [0, 1], got {lam}")
    if borda < 0:
        raise ValidationError(f"score must be non-negative, got {borda}")
    overage = max(0.0, (tokens - target) / target)
    factor = 1.0 - lam * overage
    if factor <= 0.0:
        return 0.0
    return borda * factor


def duplication_probability(adjusted: float, population_mean: float, temperature: float) -> float:
    """Logistic fitness-proportional duplication probability.

    p = sigma((adjusted - population_mean) / temperature) with
    sigma(z) = 1 / (1 + exp(-z)); always strictly inside (0, 1).
    """
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    z = (adjusted - population_mean) / temperature
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        ez = math.exp(z)
        p = ez / (1.0 + ez)
    return min(max(p, _P_FLOOR), _P_CEIL)


def efficiency(borda_vector: Sequence[float], token_vector: Sequence[int]) -> float:
    """Mean quality-per-token across a population: (1/k) * sum(B_i / T_i).

    Zero-token entries contribute nothing (logged); the divisor stays k.
    """
    if len(borda_vector) != len(token_vector):
        raise ValidationError(
            f"score and token vectors differ in length: {len(borda_vector)} vs {len(token_vector)}"
        )
    if not borda_vector:
        raise ValidationError("efficiency needs at least one population member")
    total = 0.0
    for score, tokens in zip(borda_vector, token_vector):
        if tokens <= 0:
            logger.warning("efficiency: excluding zero-token entry (score=%s)", score)
            continue
        total += score / tokens
    return total / len(borda_vector)


def adaptive_tau(adjusted_values: Sequence[float], fraction: float = 0.25, epsilon: float = 1e-9) -> float:
    """Scale-free selection temperature: fraction * (max - min + epsilon).

    The epsilon keeps the temperature positive for uniform populations.
    """
    if not adjusted_values:
        raise ValidationError("adaptive temperature needs at least one value")
    spread = max(adjusted_values) - min(adjusted_values)
    return fraction * (spread + epsilon)
