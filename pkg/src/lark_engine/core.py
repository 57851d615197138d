"""Shared domain vocabulary: scenarios, stakeholders, strategies, populations,
ranking profiles, and per-generation records.

All types are immutable after construction; the next generation is always
built from fresh values. Scenario documents are YAML with a mandatory
``version`` field (see ``docs/`` section of the README for the schema).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .errors import ScenarioFormatError, ValidationError
from .fitness import FitnessRecord

SCENARIO_SCHEMA_VERSION = 1

DOMAIN_TAGS = (
    "multi-stakeholder-trade-offs",
    "policy-proposal",
    "product-roadmap",
    "campaign-plan",
    "infrastructure-siting",
    "clinical-decision-making",
)

ORIGIN_SEED = "seed"
ORIGIN_PLASTICITY = "plasticity"
ORIGIN_MATURATION = "duplication+maturation"
ORIGINS = (ORIGIN_SEED, ORIGIN_PLASTICITY, ORIGIN_MATURATION)

TOKENIZER_MODES = ("whitespace", "chars4", "provider")

WEIGHT_TOLERANCE = 1e-9


def tokenize_count(text: str, mode: str = "whitespace") -> int:
    """Deterministic token count for the two offline tokenizer modes."""
    if mode == "whitespace":
        return len(text.split())
    if mode == "chars4":
        return math.ceil(len(text) / 4)
    if mode == "provider":
        raise ValidationError("provider token counts come from endpoint usage; use Tokenizer")
    raise ValidationError(f"unknown tokenizer mode {mode!r}")


@dataclass(frozen=True)
class Tokenizer:
    """Pluggable tokenizer. ``provider`` mode trusts endpoint-reported counts
    and falls back to chars4 for text that never went through an endpoint."""

    mode: str = "whitespace"

    def __post_init__(self):
        if self.mode not in TOKENIZER_MODES:
            raise ValidationError(f"unknown tokenizer mode {self.mode!r}")

    def count(self, text: str, reported: int | None = None) -> int:
        if self.mode == "provider":
            if reported is not None:
                if reported < 0:
                    raise ValidationError("reported token count must be non-negative")
                return reported
            return tokenize_count(text, "chars4")
        return tokenize_count(text, self.mode)


def normalize_weights(weights: Sequence[float]) -> list:
    """Scale weights to sum to 1. Idempotent: inputs already within the
    1e-9 tolerance of the invariant are returned unchanged."""
    if not weights:
        raise ValidationError("weight list is empty")
    for w in weights:
        if w < 0:
            raise ValidationError(f"influence weights must be non-negative, got {w}")
    total = sum(weights)
    if float(total) <= 0.0:
        raise ValidationError("total influence weight is zero")
    if abs(float(total) - 1.0) <= WEIGHT_TOLERANCE:
        return list(weights)
    return [w / total for w in weights]


@dataclass(frozen=True)
class Stakeholder:
    id: str
    persona: str
    influence_weight: float

    def __post_init__(self):
        if self.influence_weight < 0:
            raise ValidationError(
                f"stakeholder {self.id}: influence weight must be non-negative"
            )


@dataclass(frozen=True)
class ComputeBudget:
    """Token target and penalty coefficient for compute-aware scoring."""

    target_tokens: int
    penalty_lambda: float

    def __post_init__(self):
        if self.target_tokens <= 0:
            raise ValidationError("budget.target_tokens must be positive")
        if not 0.0 <= self.penalty_lambda <= 1.0:
            raise ValidationError("budget.lambda must be in [0, 1]")


@dataclass(frozen=True)
class Scenario:
    """A decision-making scenario: context, objectives, and a stakeholder
    roster with normalized influence weights."""

    id: str
    context: str
    objectives: tuple[str, ...]
    stakeholders: tuple[Stakeholder, ...]
    domain_tag: str
    budget: ComputeBudget
    extensions: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.objectives:
            raise ValidationError(f"scenario {self.id}: needs at least one objective")
        if not self.stakeholders:
            raise ValidationError(f"scenario {self.id}: needs at least one stakeholder")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ValidationError(
                f"scenario {self.id}: unknown domain tag {self.domain_tag!r}"
            )
        total = sum(s.influence_weight for s in self.stakeholders)
        if abs(float(total) - 1.0) > WEIGHT_TOLERANCE:
            raise ValidationError(
                f"scenario {self.id}: influence weights sum to {total}, expected 1"
            )

    @property
    def weights(self) -> list:
        return [s.influence_weight for s in self.stakeholders]

    @property
    def stakeholder_ids(self) -> list[str]:
        return [s.id for s in self.stakeholders]


def make_scenario(
    *,
    id: str,
    context: str,
    objectives: Sequence[str],
    stakeholders: Sequence[tuple[str, str, float]],
    domain_tag: str,
    target_tokens: int,
    penalty_lambda: float,
    extensions: Mapping[str, object] | None = None,
) -> Scenario:
    """Build a Scenario from raw stakeholder (id, persona, weight) triples,
    normalizing influence weights."""
    raw = [w for _, _, w in stakeholders]
    normalized = normalize_weights(raw)
    return Scenario(
        id=id,
        context=context,
        objectives=tuple(objectives),
        stakeholders=tuple(
            Stakeholder(id=sid, persona=persona, influence_weight=w)
            for (sid, persona, _), w in zip(stakeholders, normalized)
        ),
        domain_tag=domain_tag,
        budget=ComputeBudget(target_tokens=target_tokens, penalty_lambda=penalty_lambda),
        extensions=dict(extensions or {}),
    )


@dataclass(frozen=True)
class Strategy:
    """One natural-language candidate, with lineage metadata.

    ``token_count`` is always recomputed by the configured tokenizer; use
    ``make_strategy`` rather than trusting counts from external input.
    """

    id: str
    text: str
    token_count: int
    origin: str
    parent_id: str | None
    generation_born: int

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValidationError(f"strategy {self.id}: unknown origin {self.origin!r}")
        if self.token_count < 0:
            raise ValidationError(f"strategy {self.id}: negative token count")
        if self.generation_born < 0:
            raise ValidationError(f"strategy {self.id}: negative generation")
        if self.origin != ORIGIN_SEED and self.parent_id is None:
            raise ValidationError(f"strategy {self.id}: non-seed strategies need a parent")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "token_count": self.token_count,
            "origin": self.origin,
            "parent_id": self.parent_id,
            "generation_born": self.generation_born,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Strategy":
        return cls(
            id=data["id"],
            text=data["text"],
            token_count=data["token_count"],
            origin=data["origin"],
            parent_id=data["parent_id"],
            generation_born=data["generation_born"],
        )


def make_strategy(
    *,
    id: str,
    text: str,
    tokenizer: Tokenizer,
    origin: str,
    parent_id: str | None = None,
    generation_born: int = 0,
    reported_tokens: int | None = None,
) -> Strategy:
    return Strategy(
        id=id,
        text=text,
        token_count=tokenizer.count(text, reported=reported_tokens),
        origin=origin,
        parent_id=parent_id,
        generation_born=generation_born,
    )


@dataclass(frozen=True)
class Population:
    """Ordered strategy pool. Order is the tie-broken ranking of the previous
    selection step; generation 0 uses insertion order. Completed generations
    hold exactly k members (asserted by the evolution loop)."""

    generation: int
    members: tuple[Strategy, ...]

    def __post_init__(self):
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"population at generation {self.generation}: duplicate ids")
        if self.generation < 0:
            raise ValidationError("population generation must be >= 0")

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    @property
    def size(self) -> int:
        return len(self.members)

    def member(self, strategy_id: str) -> Strategy:
        for m in self.members:
            if m.id == strategy_id:
                return m
        raise ValidationError(f"no member {strategy_id} in population")

    def token_counts(self) -> dict[str, int]:
        return {m.id: m.token_count for m in self.members}


@dataclass(frozen=True)
class RankingProfile:
    """One stakeholder's ordinal ranking: position 0 is most preferred."""

    stakeholder_id: str
    ranking: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.ranking)) != len(self.ranking):
            raise ValidationError(
                f"profile {self.stakeholder_id}: ranking repeats an id"
            )

    def rank_of(self, strategy_id: str) -> int:
        """1-based rank position of the given strategy."""
        return self.ranking.index(strategy_id) + 1

    def to_dict(self) -> dict:
        return {"stakeholder_id": self.stakeholder_id, "ranking": list(self.ranking)}

    @classmethod
    def from_dict(cls, data: dict) -> "RankingProfile":
        return cls(stakeholder_id=data["stakeholder_id"], ranking=tuple(data["ranking"]))


def validate_profile(profile: RankingProfile, population_ids: Sequence[str]) -> None:
    """Assert the profile is a true permutation of the population ids."""
    if sorted(profile.ranking) != sorted(population_ids):
        raise ValidationError(
            f"profile {profile.stakeholder_id}: ranking is not a permutation of the population"
        )


@dataclass(frozen=True)
class UsageEvent:
    """One provider request's usage, keyed for deterministic merge order."""

    kind: str
    subject_id: str
    stakeholder_id: str
    prompt_tokens: int
    completion_tokens: int
    cost: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "subject_id": self.subject_id,
            "stakeholder_id": self.stakeholder_id,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UsageEvent":
        return cls(
            kind=data["kind"],
            subject_id=data["subject_id"],
            stakeholder_id=data["stakeholder_id"],
            prompt_tokens=data["prompt_tokens"],
            completion_tokens=data["completion_tokens"],
            cost=data["cost"],
        )


def usage_totals(events: Sequence[UsageEvent]) -> dict:
    """Sum usage in event order so totals replay exactly."""
    prompt = completion = 0
    cost = 0.0
    for event in events:
        prompt += event.prompt_tokens
        completion += event.completion_tokens
        cost += event.cost
    return {"prompt_tokens": prompt, "completion_tokens": completion, "cost": cost}


@dataclass(frozen=True)
class GenerationRecord:
    """Everything one generation produced, sufficient for replay.

    ``fitness`` holds one entry per member of the scored (post-plasticity)
    population; ``survivors`` is the selected next population in descending
    adjusted-score order. ``duration_s`` is wall-clock time and is the one
    field excluded from canonical trace comparisons.
    """

    generation: int
    tau: float
    p_plast_effective: float
    plasticity_events: tuple[dict, ...]
    profiles: tuple[RankingProfile, ...]
    borda: dict[str, float]
    cv: float | None
    consensus_id: str
    fitness: tuple[FitnessRecord, ...]
    efficiency: float
    duplication_selected: tuple[str, ...]
    duplication_events: tuple[dict, ...]
    union_profiles: tuple[RankingProfile, ...] | None
    union_scores: dict[str, dict] | None
    survivors: tuple[str, ...]
    new_members: tuple[Strategy, ...]
    usage_events: tuple[UsageEvent, ...]
    duration_s: float

    def to_dict(self) -> dict:
        return {
            "type": "generation",
            "generation": self.generation,
            "tau": self.tau,
            "p_plast_effective": self.p_plast_effective,
            "plasticity_events": list(self.plasticity_events),
            "profiles": [p.to_dict() for p in self.profiles],
            "borda": dict(self.borda),
            "cv": self.cv,
            "consensus_id": self.consensus_id,
            "fitness": [f.to_dict() for f in self.fitness],
            "efficiency": self.efficiency,
            "duplication_selected": list(self.duplication_selected),
            "duplication_events": list(self.duplication_events),
            "union_profiles": (
                None if self.union_profiles is None else [p.to_dict() for p in self.union_profiles]
            ),
            "union_scores": self.union_scores,
            "survivors": list(self.survivors),
            "new_members": [s.to_dict() for s in self.new_members],
            "usage_events": [u.to_dict() for u in self.usage_events],
            "usage_totals": usage_totals(self.usage_events),
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationRecord":
        return cls(
            generation=data["generation"],
            tau=data["tau"],
            p_plast_effective=data["p_plast_effective"],
            plasticity_events=tuple(data["plasticity_events"]),
            profiles=tuple(RankingProfile.from_dict(p) for p in data["profiles"]),
            borda=dict(data["borda"]),
            cv=data["cv"],
            consensus_id=data["consensus_id"],
            fitness=tuple(FitnessRecord.from_dict(f) for f in data["fitness"]),
            efficiency=data["efficiency"],
            duplication_selected=tuple(data["duplication_selected"]),
            duplication_events=tuple(data["duplication_events"]),
            union_profiles=(
                None
                if data["union_profiles"] is None
                else tuple(RankingProfile.from_dict(p) for p in data["union_profiles"])
            ),
            union_scores=data["union_scores"],
            survivors=tuple(data["survivors"]),
            new_members=tuple(Strategy.from_dict(s) for s in data["new_members"]),
            usage_events=tuple(UsageEvent.from_dict(u) for u in data["usage_events"]),
            duration_s=data["duration_s"],
        )


# --- scenario document io ---------------------------------------------------


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ScenarioFormatError(f"{where}: missing field {key!r}")
    return mapping[key]


def scenario_to_dict(scenario: Scenario) -> dict:
    doc: dict = {
        "version": SCENARIO_SCHEMA_VERSION,
        "id": scenario.id,
        "domain": scenario.domain_tag,
        "context": scenario.context,
        "objectives": list(scenario.objectives),
        "stakeholders": [
            {"id": s.id, "persona": s.persona, "weight": s.influence_weight}
            for s in scenario.stakeholders
        ],
        "budget": {
            "target_tokens": scenario.budget.target_tokens,
            "lambda": scenario.budget.penalty_lambda,
        },
    }
    for key, value in scenario.extensions.items():
        doc[key] = value
    return doc


def scenario_from_dict(doc: Mapping) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioFormatError("scenario: document is not a mapping")
    version = _require(doc, "version", "scenario")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ScenarioFormatError(f"scenario: unsupported version {version!r}")
    sid = _require(doc, "id", "scenario")
    context = _require(doc, "context", "scenario")
    if not isinstance(context, str) or not context.strip():
        raise ScenarioFormatError("scenario: field 'context' must be non-empty text")
    objectives = _require(doc, "objectives", "scenario")
    if not isinstance(objectives, list) or not objectives:
        raise ScenarioFormatError("scenario: field 'objectives' must be a non-empty list")
    raw_stakeholders = _require(doc, "stakeholders", "scenario")
    if not isinstance(raw_stakeholders, list) or not raw_stakeholders:
        raise ScenarioFormatError("scenario: field 'stakeholders' must be a non-empty list")
    triples = []
    for i, entry in enumerate(raw_stakeholders):
        where = f"stakeholders[{i}]"
        if not isinstance(entry, Mapping):
            raise ScenarioFormatError(f"scenario: {where} must be a mapping")
        weight = _require(entry, "weight", where)
        if not isinstance(weight, (int, float)):
            raise ScenarioFormatError(f"scenario: {where}.weight must be a number")
        triples.append(
            (str(_require(entry, "id", where)), str(entry.get("persona", "")), float(weight))
        )
    budget = _require(doc, "budget", "scenario")
    if not isinstance(budget, Mapping):
        raise ScenarioFormatError("scenario: field 'budget' must be a mapping")
    target = _require(budget, "target_tokens", "budget")
    lam = _require(budget, "lambda", "budget")
    known = {"version", "id", "domain", "context", "objectives", "stakeholders", "budget"}
    extensions = {k: v for k, v in doc.items() if k not in known}
    try:
        return make_scenario(
            id=str(sid),
            context=context,
            objectives=[str(o) for o in objectives],
            stakeholders=triples,
            domain_tag=str(_require(doc, "domain", "scenario")),
            target_tokens=int(target),
            penalty_lambda=float(lam),
            extensions=extensions,
        )
    except ValidationError as exc:
        raise ScenarioFormatError(f"scenario {sid}: {exc}") from exc


def load_scenario(source: str | Path | Mapping) -> Scenario:
    """Parse and validate a scenario document (path or mapping).

    Influence weights are normalized to sum to 1; malformed documents raise
    ScenarioFormatError naming the offending field.
    """
    if isinstance(source, Mapping):
        return scenario_from_dict(source)
    path = Path(source)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ScenarioFormatError(f"scenario {path}: invalid YAML ({exc})") from exc
    if doc is None:
        raise ScenarioFormatError(f"scenario {path}: empty document")
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    from .util import atomic_write_text

    text = yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, allow_unicode=False)
    atomic_write_text(path, text)
