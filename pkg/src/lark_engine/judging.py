"""Blinded rubric judging of system outputs.

System identities are replaced by salted anonymous ids before any judge
sees them, each judge receives the systems in an independently shuffled
order, and every judge-bound payload is persisted verbatim so blinding can
be audited. Judges are aggregated two ways: a uniform-weight positional
(Borda) ranking over the judge-induced orderings, and the mean composite,
which supplies the cardinal score the reports need.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import prompt_templates
from .aggregation import borda_scores
from .core import RankingProfile, Scenario, Tokenizer, UsageEvent
from .errors import ProviderError, ValidationError
from .providers import JUDGE_CRITERIA, Provider, make_provider
from .util import rng_for, sha256_text

logger = logging.getLogger(__name__)

DEFAULT_RUBRIC = (
    "coverage",
    "feasibility",
    "specificity",
    "constraint_adherence",
    "clarity",
)
POINTS_PER_CRITERION = 10


@dataclass(frozen=True)
class JudgeSpec:
    """One judge endpoint plus its private presentation-shuffle seed."""

    name: str
    provider: str | Mapping = "mock"
    shuffle_seed: int = 0


@dataclass(frozen=True)
class JudgeConfig:
    judges: tuple[JudgeSpec, ...] = (
        JudgeSpec(name="judge-a", shuffle_seed=11),
        JudgeSpec(name="judge-b", shuffle_seed=29),
    )
    rubric: tuple[str, ...] = DEFAULT_RUBRIC
    points_per_criterion: int = POINTS_PER_CRITERION
    temperature: float = 0.1
    blinding_salt: str = "lark-blind"

    def __post_init__(self):
        if len(self.rubric) != 5:
            raise ValidationError("rubric must have exactly five criteria")
        if self.points_per_criterion * len(self.rubric) != 50:
            raise ValidationError("rubric total must be 50 points")
        if not self.judges:
            raise ValidationError("at least one judge is required")
        if len({j.name for j in self.judges}) != len(self.judges):
            raise ValidationError("judge names must be unique")


def anonymize(salt: str, system_name: str) -> str:
    return "cand-" + sha256_text(f"{salt}|{system_name}")[:10]


@dataclass(frozen=True)
class EvaluationRecord:
    """One scenario's blinded evaluation, persisted with the de-blinding map.

    The anonymized-to-name mapping lives only here; judge-bound payloads are
    persisted separately so they can be scanned for blinding violations.
    """

    scenario_id: str
    mapping: dict[str, str]
    rubric: tuple[str, ...]
    judge_names: tuple[str, ...]
    presentation_orders: dict[str, list[str]]
    criterion_scores: dict[str, dict[str, dict[str, int]]]
    composites: dict[str, dict[str, int]]
    invalid_cells: tuple[tuple[str, str], ...]
    aggregated_composite: dict[str, float | None]
    aggregation_scores: dict[str, float]
    aggregation_ranking: tuple[str, ...]
    prompt_hash: str
    usage_events: tuple[UsageEvent, ...] = field(default_factory=tuple)

    def composite_for_system(self, system_name: str) -> float | None:
        for anon, name in self.mapping.items():
            if name == system_name:
                return self.aggregated_composite[anon]
        raise ValidationError(f"system {system_name!r} not in evaluation record")

    def to_dict(self) -> dict:
        return {
            "type": "evaluation",
            "schema": 1,
            "scenario_id": self.scenario_id,
            "mapping": dict(self.mapping),
            "rubric": list(self.rubric),
            "judge_names": list(self.judge_names),
            "presentation_orders": {k: list(v) for k, v in self.presentation_orders.items()},
            "criterion_scores": self.criterion_scores,
            "composites": self.composites,
            "invalid_cells": [list(cell) for cell in self.invalid_cells],
            "aggregated_composite": self.aggregated_composite,
            "aggregation_scores": self.aggregation_scores,
            "aggregation_ranking": list(self.aggregation_ranking),
            "prompt_hash": self.prompt_hash,
            "usage_events": [u.to_dict() for u in self.usage_events],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvaluationRecord":
        return cls(
            scenario_id=data["scenario_id"],
            mapping=dict(data["mapping"]),
            rubric=tuple(data["rubric"]),
            judge_names=tuple(data["judge_names"]),
            presentation_orders={k: list(v) for k, v in data["presentation_orders"].items()},
            criterion_scores=data["criterion_scores"],
            composites=data["composites"],
            invalid_cells=tuple(tuple(cell) for cell in data["invalid_cells"]),
            aggregated_composite=dict(data["aggregated_composite"]),
            aggregation_scores=dict(data["aggregation_scores"]),
            aggregation_ranking=tuple(data["aggregation_ranking"]),
            prompt_hash=data["prompt_hash"],
            usage_events=tuple(UsageEvent.from_dict(u) for u in data["usage_events"]),
        )


def _score_once(
    provider: Provider,
    scenario: Scenario,
    anon_id: str,
    text: str,
    config: JudgeConfig,
) -> tuple[dict[str, int], str]:
    scores, payload = provider.judge_score(scenario, anon_id, text, config.temperature)
    missing = [c for c in JUDGE_CRITERIA if c not in scores]
    if missing:
        raise ProviderError(f"judge response missing criteria {missing}", kind="judge_score")
    return scores, payload


def judge_outputs(
    outputs: Mapping[str, str],
    scenario: Scenario,
    config: JudgeConfig | None = None,
    providers: Mapping[str, Provider] | None = None,
    tokenizer: Tokenizer | None = None,
) -> tuple[EvaluationRecord, list[dict]]:
    """Score every system's output under the blinding protocol.

    Returns the evaluation record plus the judge-bound payload log (one
    entry per judge call, containing only anonymized ids).

    A judge response missing a criterion is re-requested once, then the
    judge-system cell is marked invalid and aggregation uses the remaining
    judges.
    """
    config = config or JudgeConfig()
    tokenizer = tokenizer or Tokenizer()
    if len(outputs) < 2:
        raise ValidationError("judging needs at least two systems")
    if providers is None:
        providers = {
            spec.name: make_provider(spec.provider, seed=spec.shuffle_seed, tokenizer=tokenizer)
            for spec in config.judges
        }

    mapping = {anonymize(config.blinding_salt, name): name for name in outputs}
    if len(mapping) != len(outputs):
        raise ValidationError("blinding produced colliding anonymous ids; change the salt")
    texts = {anon: outputs[name] for anon, name in mapping.items()}
    anon_ids = sorted(mapping)

    presentation_orders: dict[str, list[str]] = {}
    criterion_scores: dict[str, dict[str, dict[str, int]]] = {}
    composites: dict[str, dict[str, int]] = {}
    invalid: list[tuple[str, str]] = []
    payloads: list[dict] = []
    usage_events: list[UsageEvent] = []

    for spec in config.judges:
        provider = providers[spec.name]
        usage_start = len(provider.usage_log)
        order = list(anon_ids)
        rng_for("judge-shuffle", spec.shuffle_seed, scenario.id).shuffle(order)
        presentation_orders[spec.name] = order
        criterion_scores[spec.name] = {}
        composites[spec.name] = {}
        for anon in order:
            scores = None
            for attempt in range(2):
                try:
                    scores, payload = _score_once(provider, scenario, anon, texts[anon], config)
                    payloads.append(
                        {"judge": spec.name, "scenario_id": scenario.id, "anon_id": anon, "payload": payload}
                    )
                    break
                except ProviderError as exc:
                    logger.warning(
                        "judge %s failed on %s (attempt %d): %s", spec.name, anon, attempt + 1, exc
                    )
            if scores is None:
                invalid.append((spec.name, anon))
                continue
            criterion_scores[spec.name][anon] = {c: scores[c] for c in JUDGE_CRITERIA}
            composites[spec.name][anon] = sum(scores.values())
        usage_events.extend(provider.take_events(usage_start))

    # Cardinal aggregate: mean composite over the judges that scored the
    # system; None when every judge failed on it.
    aggregated: dict[str, float | None] = {}
    for anon in anon_ids:
        valid = [composites[j.name][anon] for j in config.judges if anon in composites[j.name]]
        aggregated[anon] = sum(valid) / len(valid) if valid else None

    # Ordinal aggregate: uniform-weight positional scoring over the judge
    # rankings, restricted to systems every judge scored.
    common = [
        anon
        for anon in anon_ids
        if all(anon in composites[j.name] for j in config.judges)
    ]
    token_counts = {anon: tokenizer.count(texts[anon]) for anon in anon_ids}
    if len(common) >= 1 and config.judges:
        profiles = []
        for spec in config.judges:
            ordered = sorted(common, key=lambda a: (-composites[spec.name][a], a))
            profiles.append(RankingProfile(stakeholder_id=spec.name, ranking=tuple(ordered)))
        weights = [1.0 / len(config.judges)] * len(config.judges)
        result = borda_scores(profiles, weights, len(common), token_counts)
        agg_scores = {anon: float(result.scores[anon]) for anon in common}
        ranking = sorted(
            common, key=lambda a: (-agg_scores[a], token_counts[a], a)
        )
        leftovers = sorted(
            (a for a in anon_ids if a not in common),
            key=lambda a: (-(aggregated[a] if aggregated[a] is not None else -1.0), a),
        )
        ranking = tuple(ranking + leftovers)
    else:
        agg_scores = {}
        ranking = tuple(anon_ids)

    record = EvaluationRecord(
        scenario_id=scenario.id,
        mapping=mapping,
        rubric=config.rubric,
        judge_names=tuple(j.name for j in config.judges),
        presentation_orders=presentation_orders,
        criterion_scores=criterion_scores,
        composites=composites,
        invalid_cells=tuple(invalid),
        aggregated_composite=aggregated,
        aggregation_scores=agg_scores,
        aggregation_ranking=ranking,
        prompt_hash=prompt_templates.template_hash("judge"),
        usage_events=tuple(usage_events),
    )
    return record, payloads


def blinding_violations(payloads: Sequence[Mapping], roster_names: Sequence[str]) -> list[str]:
    """Roster names found inside judge-bound payloads (must be empty)."""
    hits = []
    for entry in payloads:
        text = entry["payload"]
        for name in roster_names:
            if name in text:
                hits.append(f"{entry.get('judge')}/{entry.get('anon_id')}: contains {name!r}")
    return hits
