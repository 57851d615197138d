"""Deterministic synthetic stakeholders.

Each synthetic stakeholder carries a known utility function over the mock
generator's feature vocabulary plus a signed preference on strategy length.
Because utilities are known in closed form, ranking, aggregation, and
selection dynamics can be verified against oracles without any network.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

from .core import (
    DOMAIN_TAGS,
    Population,
    RankingProfile,
    Scenario,
    Stakeholder,
    Strategy,
    make_scenario,
)
from .errors import ValidationError
from .util import rng_for

# Fixed vocabulary the mock generator draws feature tokens from. Single
# lowercase words so every tokenizer mode sees them as one token.
FEATURE_VOCABULARY = (
    "audit", "pilot", "rollout", "budget", "equity", "safety",
    "outreach", "metrics", "training", "automation", "transparency",
    "resilience", "staffing", "subsidy", "zoning", "triage",
    "consent", "privacy", "feedback", "phasing", "procurement",
    "maintenance", "incentives", "moratorium",
)

_WORD_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


def feature_set(text: str) -> set[str]:
    """Vocabulary tokens present in the text (case-insensitive, punctuation
    stripped)."""
    words = set(_WORD_RE.findall(text.lower()))
    return words & set(FEATURE_VOCABULARY)


@dataclass(frozen=True)
class SyntheticUtility:
    """Closed-form stakeholder utility: feature indicator weights plus a
    signed length preference and optional seeded tie-jitter."""

    stakeholder_id: str
    feature_weights: Mapping[str, float] = field(default_factory=dict)
    length_preference: float = 0.0
    noise_amplitude: float = 0.0
    noise_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "stakeholder_id": self.stakeholder_id,
            "feature_weights": dict(self.feature_weights),
            "length_preference": self.length_preference,
            "noise_amplitude": self.noise_amplitude,
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticUtility":
        return cls(
            stakeholder_id=data["stakeholder_id"],
            feature_weights=dict(data.get("feature_weights", {})),
            length_preference=float(data.get("length_preference", 0.0)),
            noise_amplitude=float(data.get("noise_amplitude", 0.0)),
            noise_seed=int(data.get("noise_seed", 0)),
        )


def utility(u: SyntheticUtility, strategy: Strategy) -> float:
    """Deterministic utility of a strategy for one synthetic stakeholder."""
    present = feature_set(strategy.text)
    value = sum(w for token, w in u.feature_weights.items() if token in present)
    value += u.length_preference * strategy.token_count
    if u.noise_amplitude:
        jitter_rng = rng_for("jitter", u.noise_seed, u.stakeholder_id, strategy.id)
        value += u.noise_amplitude * jitter_rng.uniform(-1.0, 1.0)
    return value


def rank_by_utility(u: SyntheticUtility, population: Population) -> RankingProfile:
    """Rank members by descending utility; exact ties break by id."""
    ordered = sorted(
        population.members, key=lambda s: (-utility(u, s), s.id)
    )
    return RankingProfile(
        stakeholder_id=u.stakeholder_id, ranking=tuple(s.id for s in ordered)
    )


def derived_utility(scenario_id: str, stakeholder_id: str) -> SyntheticUtility:
    """Fallback utility for scenarios without an explicit extension block,
    derived deterministically from the scenario and stakeholder ids."""
    rng = rng_for("derived-utility", scenario_id, stakeholder_id)
    tokens = rng.sample(FEATURE_VOCABULARY, 6)
    weights = {t: round(rng.uniform(-1.0, 1.5), 6) for t in tokens}
    return SyntheticUtility(
        stakeholder_id=stakeholder_id,
        feature_weights=weights,
        length_preference=-round(rng.uniform(0.0, 0.02), 6),
    )


def utilities_for(scenario: Scenario) -> dict[str, SyntheticUtility]:
    """Utility per stakeholder id, from the scenario's extension block when
    present, otherwise derived deterministically."""
    loaded: dict[str, SyntheticUtility] = {}
    block = scenario.extensions.get("synthetic_utilities")
    if block is not None:
        if not isinstance(block, list):
            raise ValidationError("synthetic_utilities extension must be a list")
        for entry in block:
            u = SyntheticUtility.from_dict(entry)
            loaded[u.stakeholder_id] = u
    return {
        sid: loaded.get(sid, derived_utility(scenario.id, sid))
        for sid in scenario.stakeholder_ids
    }


# --- benchmark scenario generation ------------------------------------------

_PERSONA_POOL = (
    "community representative focused on fair access",
    "finance lead accountable for cost control",
    "operations manager responsible for delivery",
    "regulator enforcing compliance requirements",
    "frontline staff delegate concerned with workload",
    "long-term planner weighing resilience",
    "advocate for underserved groups",
    "technical specialist judging feasibility",
)

_OBJECTIVE_TEMPLATES = (
    "improve {a} without weakening {b}",
    "contain {a} spending while expanding {b}",
    "raise {a} standards across the program",
    "deliver measurable gains in {a} within one year",
    "protect {a} while piloting {b}",
)

_CONTEXT_TEMPLATES = {
    "multi-stakeholder-trade-offs": "A cross-functional board must pick one program design balancing several competing groups.",
    "policy-proposal": "A public agency is drafting a policy and needs one recommended course of action.",
    "product-roadmap": "A product team must commit to a roadmap for the next two quarters.",
    "campaign-plan": "An outreach group is planning a campaign with limited funds and volunteers.",
    "infrastructure-siting": "A municipality must decide where and how to site a new facility.",
    "clinical-decision-making": "A clinical committee must agree on a care pathway under resource limits.",
}


def make_benchmark_scenarios(
    count: int,
    seed: int,
    stakeholder_range: tuple[int, int] = (3, 7),
) -> list[Scenario]:
    """Generate synthetic benchmark scenarios, round-robin across the six
    domain tags, each with seeded stakeholder weights and utilities.

    Fully deterministic for a given (count, seed, stakeholder_range).
    """
    if count < 1:
        raise ValidationError("scenario count must be >= 1")
    lo, hi = stakeholder_range
    if not 1 <= lo <= hi:
        raise ValidationError(f"invalid stakeholder range {stakeholder_range}")
    scenarios = []
    for index in range(count):
        domain = DOMAIN_TAGS[index % len(DOMAIN_TAGS)]
        rng = rng_for("benchmark-scenario", seed, index)
        m = rng.randint(lo, hi)
        shared = rng.sample(FEATURE_VOCABULARY, 6)

        objectives = []
        for _ in range(rng.randint(2, 4)):
            template = rng.choice(_OBJECTIVE_TEMPLATES)
            objectives.append(template.format(a=rng.choice(shared), b=rng.choice(shared)))

        triples = []
        utilities = []
        for j in range(m):
            sid = f"sh{j + 1}"
            persona = _PERSONA_POOL[(index + j) % len(_PERSONA_POOL)]
            weight = round(rng.uniform(0.5, 2.5), 6)
            triples.append((sid, persona, weight))
            own = rng.sample(FEATURE_VOCABULARY, 4)
            weights = {t: round(rng.uniform(0.2, 1.5), 6) for t in own}
            # Opposed signs on shared tokens create real stakeholder conflict.
            sign = 1.0 if j % 2 == 0 else -1.0
            for t in shared[:3]:
                weights[t] = round(sign * rng.uniform(0.4, 1.2), 6)
            utilities.append(
                SyntheticUtility(
                    stakeholder_id=sid,
                    feature_weights=weights,
                    length_preference=-round(rng.uniform(0.0, 0.02), 6),
                ).to_dict()
            )

        scenario_id = f"scn-{index:03d}-{domain}"
        scenarios.append(
            make_scenario(
                id=scenario_id,
                context=f"{_CONTEXT_TEMPLATES[domain]} Decision group of {m} stakeholders.",
                objectives=objectives,
                stakeholders=triples,
                domain_tag=domain,
                target_tokens=rng.randint(40, 110),
                penalty_lambda=round(rng.uniform(0.2, 0.8), 3),
                extensions={"synthetic_utilities": utilities},
            )
        )
    return scenarios


def stakeholder_for(scenario: Scenario, stakeholder_id: str) -> Stakeholder:
    for s in scenario.stakeholders:
        if s.id == stakeholder_id:
            return s
    raise ValidationError(f"scenario {scenario.id}: no stakeholder {stakeholder_id}")


def mock_rank(
    scenario: Scenario, stakeholder_id: str, population: Population
) -> RankingProfile:
    """Ranking a mock provider delegates to: utility sort for the scenario's
    synthetic stakeholder."""
    utilities = utilities_for(scenario)
    return rank_by_utility(utilities[stakeholder_id], population)
