"""Strategy text production and ranking elicitation.

One provider interface with two implementations: a live OpenAI-compatible
chat-completions client and a deterministic mock whose entire output is a
pure function of its inputs and RNG seed. All provider traffic is metered
into UsageEvents so run-level cost totals replay exactly.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import httpx

from . import prompt_templates, stakeholder_sim
from .core import (
    ORIGIN_MATURATION,
    ORIGIN_PLASTICITY,
    ORIGIN_SEED,
    Population,
    RankingProfile,
    Scenario,
    Stakeholder,
    Strategy,
    Tokenizer,
    UsageEvent,
    make_strategy,
)
from .errors import ProviderError, ValidationError
from .util import canonical_json, rng_for, sha256_text

logger = logging.getLogger(__name__)

REQUEST_KINDS = ("seed", "plasticity", "maturation", "stakeholder_rank", "judge_score")

# Only the judge temperature is anchored; the others are conventional
# defaults, all config-exposed.
DEFAULT_TEMPERATURES = {
    "seed": 0.8,
    "plasticity": 0.7,
    "maturation": 0.7,
    "stakeholder_rank": 0.3,
    "judge_score": 0.1,
}

# Fraction of the input length a plasticity edit may add.
PLASTICITY_DELTA_FRACTION = 0.2

JUDGE_CRITERIA = ("coverage", "feasibility", "specificity", "constraint_adherence", "clarity")


@dataclass(frozen=True)
class GenerationRequest:
    """Bookkeeping record of one provider call."""

    kind: str
    scenario_id: str
    subject_id: str | None = None
    stakeholder_id: str | None = None
    subgroup_hint: str | None = None
    temperature: float | None = None
    max_tokens_hint: int | None = None

    def __post_init__(self):
        if self.kind not in REQUEST_KINDS:
            raise ValidationError(f"unknown request kind {self.kind!r}")
        if self.kind in ("plasticity", "maturation") and self.subject_id is None:
            raise ValidationError(f"{self.kind} requests carry a subject strategy")
        if self.kind == "seed" and self.subject_id is not None:
            raise ValidationError("seed requests do not carry a subject strategy")


@dataclass(frozen=True)
class ProviderUsage:
    """Token counts and the currency cost of one request."""

    prompt_tokens: int
    completion_tokens: int
    cost: float

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValidationError("token counts must be non-negative")


@dataclass(frozen=True)
class PriceTable:
    """Per-model input/output prices per 1e6 tokens."""

    prices: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def cost(self, model: str, prompt_tokens: int, completion_tokens: int) -> float:
        price_in, price_out = self.prices.get(model, (0.0, 0.0))
        return prompt_tokens * price_in / 1e6 + completion_tokens * price_out / 1e6


DEFAULT_MOCK_PRICES = PriceTable({"mock-model": (0.20, 0.40)})


def _objectives_block(scenario: Scenario) -> str:
    return "\n".join(f"- {o}" for o in scenario.objectives)


def _stakeholders_block(scenario: Scenario) -> str:
    return "\n".join(
        f"- {s.id} (weight {s.influence_weight:.3f}): {s.persona}"
        for s in scenario.stakeholders
    )


def _candidates_block(population: Population) -> str:
    return "\n".join(f"[{m.id}] {m.text}" for m in population.members)


class Provider:
    """Base provider: usage metering plus the shared prompt rendering."""

    model = "unknown"

    def __init__(self, price_table: PriceTable | None = None, tokenizer: Tokenizer | None = None):
        self.price_table = price_table or PriceTable()
        self.tokenizer = tokenizer or Tokenizer()
        self.usage_log: list[UsageEvent] = []
        self._log_lock = threading.Lock()

    # -- metering --------------------------------------------------------

    def _record(
        self,
        request: GenerationRequest,
        prompt_tokens: int,
        completion_tokens: int,
    ) -> ProviderUsage:
        usage = ProviderUsage(
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            cost=self.price_table.cost(self.model, prompt_tokens, completion_tokens),
        )
        event = UsageEvent(
            kind=request.kind,
            subject_id=request.subject_id or "",
            stakeholder_id=request.stakeholder_id or "",
            prompt_tokens=usage.prompt_tokens,
            completion_tokens=usage.completion_tokens,
            cost=usage.cost,
        )
        with self._log_lock:
            self.usage_log.append(event)
        return usage

    def take_events(self, start: int) -> list[UsageEvent]:
        """Events recorded since ``start``, in deterministic merge order."""
        with self._log_lock:
            events = self.usage_log[start:]
        return sorted(events, key=lambda e: (e.kind, e.subject_id, e.stakeholder_id))

    # -- prompt rendering shared by both implementations ------------------

    def seed_prompt(self, scenario: Scenario, index: int) -> str:
        return prompt_templates.render(
            "seed",
            context=scenario.context,
            objectives=_objectives_block(scenario),
            stakeholders=_stakeholders_block(scenario),
            target_tokens=str(scenario.budget.target_tokens),
        ) + f"\n(variant {index + 1})"

    def plasticity_prompt(self, strategy: Strategy, scenario: Scenario) -> str:
        return prompt_templates.render(
            "plasticity",
            context=scenario.context,
            objectives=_objectives_block(scenario),
            strategy=strategy.text,
            delta_pct=str(int(PLASTICITY_DELTA_FRACTION * 100)),
        )

    def maturation_prompt(self, strategy: Strategy, scenario: Scenario, hint: str) -> str:
        return prompt_templates.render(
            "maturation",
            context=scenario.context,
            objectives=_objectives_block(scenario),
            strategy=strategy.text,
            hint=hint,
        )

    def rank_prompt(self, stakeholder: Stakeholder, population: Population, scenario: Scenario) -> str:
        return prompt_templates.render(
            "stakeholder_rank",
            persona=stakeholder.persona,
            context=scenario.context,
            objectives=_objectives_block(scenario),
            candidates=_candidates_block(population),
        )

    def judge_prompt(self, scenario: Scenario, anon_id: str, output: str) -> str:
        return prompt_templates.render(
            "judge",
            context=scenario.context,
            objectives=_objectives_block(scenario),
            anon_id=anon_id,
            output=output,
        )

    # -- operations (implemented by subclasses) ----------------------------

    def sample_seeds(self, scenario: Scenario, k: int, seed: int) -> list[Strategy]:
        raise NotImplementedError

    def plasticity(self, strategy: Strategy, scenario: Scenario, *, new_id: str, generation: int) -> Strategy:
        raise NotImplementedError

    def maturation(
        self, strategy: Strategy, scenario: Scenario, subgroup_hint: str, *, new_id: str, generation: int
    ) -> Strategy:
        raise NotImplementedError

    def rank_population(
        self, stakeholder: Stakeholder, population: Population, scenario: Scenario
    ) -> RankingProfile:
        raise NotImplementedError

    def judge_score(
        self, scenario: Scenario, anon_id: str, output: str, temperature: float
    ) -> tuple[dict[str, int], str]:
        """Five criterion scores (0-10 each) plus the judge-bound payload."""
        raise NotImplementedError


class MockProvider(Provider):
    """Deterministic offline provider.

    Text is assembled from scenario objectives plus seeded feature tokens
    from the fixed vocabulary, so synthetic stakeholders have measurable
    features to rank. Every output is a pure function of (inputs, seed).
    """

    model = "mock-model"

    def __init__(
        self,
        seed: int = 0,
        price_table: PriceTable | None = None,
        tokenizer: Tokenizer | None = None,
    ):
        super().__init__(price_table or DEFAULT_MOCK_PRICES, tokenizer)
        self.seed = seed

    _FILLER = (
        "with", "clear", "owners", "and", "review", "points", "set", "up",
        "front", "so", "progress", "stays", "visible", "to", "the", "group",
    )

    def _feature_words(self, rng, count: int) -> list[str]:
        return rng.sample(stakeholder_sim.FEATURE_VOCABULARY, count)

    def sample_seeds(self, scenario: Scenario, k: int, seed: int) -> list[Strategy]:
        if k < 1:
            raise ValidationError("k must be >= 1")
        strategies = []
        for i in range(k):
            rng = rng_for("mock-seed", scenario.id, k, seed, i)
            features = self._feature_words(rng, rng.randint(3, 6))
            objective = scenario.objectives[i % len(scenario.objectives)]
            filler = " ".join(rng.choices(self._FILLER, k=rng.randint(0, 24)))
            text = (
                f"Plan {i + 1}: to {objective}, start with {features[0]} and "
                f"{features[1]}, then add {' and '.join(features[2:])}. {filler}"
            ).strip()
            request = GenerationRequest(
                kind="seed", scenario_id=scenario.id, temperature=DEFAULT_TEMPERATURES["seed"]
            )
            prompt = self.seed_prompt(scenario, i)
            self._record(request, self.tokenizer.count(prompt), self.tokenizer.count(text))
            strategies.append(
                make_strategy(
                    id=f"g0-{i:02d}",
                    text=text,
                    tokenizer=self.tokenizer,
                    origin=ORIGIN_SEED,
                    generation_born=0,
                )
            )
        return strategies

    def plasticity(self, strategy: Strategy, scenario: Scenario, *, new_id: str, generation: int) -> Strategy:
        if not strategy.text:
            raise ValidationError("plasticity needs non-empty strategy text")
        rng = rng_for("mock-plasticity", self.seed, scenario.id, strategy.id)
        words = strategy.text.split()
        present = sorted(stakeholder_sim.feature_set(strategy.text))
        # Swap one feature for a fresh one, keeping the edit bounded.
        if present:
            old = rng.choice(present)
            new = rng.choice(
                [t for t in stakeholder_sim.FEATURE_VOCABULARY if t not in present]
            )
            words = [new if w.strip(".,;:") == old else w for w in words]
        delta = max(1, int(PLASTICITY_DELTA_FRACTION * strategy.token_count))
        words = words + ["refine", self._feature_words(rng, 1)[0]]
        text = " ".join(words)
        while self.tokenizer.count(text) > strategy.token_count + delta and words:
            words.pop()
            text = " ".join(words)
        request = GenerationRequest(
            kind="plasticity",
            scenario_id=scenario.id,
            subject_id=strategy.id,
            temperature=DEFAULT_TEMPERATURES["plasticity"],
        )
        prompt = self.plasticity_prompt(strategy, scenario)
        self._record(request, self.tokenizer.count(prompt), self.tokenizer.count(text))
        return make_strategy(
            id=new_id,
            text=text,
            tokenizer=self.tokenizer,
            origin=ORIGIN_PLASTICITY,
            parent_id=strategy.id,
            generation_born=generation,
        )

    def maturation(
        self, strategy: Strategy, scenario: Scenario, subgroup_hint: str, *, new_id: str, generation: int
    ) -> Strategy:
        rng = rng_for("mock-maturation", self.seed, scenario.id, strategy.id, subgroup_hint)
        features = self._feature_words(rng, 2)
        text = (
            f"{strategy.text} Specialized for {subgroup_hint}: prioritize "
            f"{features[0]} backed by {features[1]}."
        )
        request = GenerationRequest(
            kind="maturation",
            scenario_id=scenario.id,
            subject_id=strategy.id,
            subgroup_hint=subgroup_hint,
            temperature=DEFAULT_TEMPERATURES["maturation"],
        )
        prompt = self.maturation_prompt(strategy, scenario, subgroup_hint)
        self._record(request, self.tokenizer.count(prompt), self.tokenizer.count(text))
        return make_strategy(
            id=new_id,
            text=text,
            tokenizer=self.tokenizer,
            origin=ORIGIN_MATURATION,
            parent_id=strategy.id,
            generation_born=generation,
        )

    def rank_population(
        self, stakeholder: Stakeholder, population: Population, scenario: Scenario
    ) -> RankingProfile:
        profile = stakeholder_sim.mock_rank(scenario, stakeholder.id, population)
        request = GenerationRequest(
            kind="stakeholder_rank",
            scenario_id=scenario.id,
            stakeholder_id=stakeholder.id,
            temperature=DEFAULT_TEMPERATURES["stakeholder_rank"],
        )
        prompt = self.rank_prompt(stakeholder, population, scenario)
        completion = ", ".join(profile.ranking)
        self._record(request, self.tokenizer.count(prompt), self.tokenizer.count(completion))
        return profile

    def judge_score(
        self, scenario: Scenario, anon_id: str, output: str, temperature: float
    ) -> tuple[dict[str, int], str]:
        # Order-blind by construction: scores depend only on the text.
        tokens = max(1, len(output.split()))
        density = len(stakeholder_sim.feature_set(output)) / tokens
        coefficients = (35, 40, 45, 50, 55)
        scores = {
            name: min(10, int(density * coeff))
            for name, coeff in zip(JUDGE_CRITERIA, coefficients)
        }
        payload = self.judge_prompt(scenario, anon_id, output)
        request = GenerationRequest(
            kind="judge_score", scenario_id=scenario.id, subject_id=anon_id, temperature=temperature
        )
        self._record(request, self.tokenizer.count(payload), len(JUDGE_CRITERIA) * 4)
        return scores, payload


class OpenAICompatProvider(Provider):
    """Chat-completions client for any OpenAI-compatible endpoint.

    Bearer token comes from the LARK_API_KEY environment variable; request
    and response bodies are logged with the token redacted. Responses are
    cached on disk when LARK_CACHE_DIR (or cache_dir) is set.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        price_table: PriceTable | None = None,
        tokenizer: Tokenizer | None = None,
        api_key_env: str = "LARK_API_KEY",
        temperatures: Mapping[str, float] | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        max_tokens: int = 1024,
        cache_dir: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(price_table, tokenizer)
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.temperatures = dict(DEFAULT_TEMPERATURES)
        if temperatures:
            self.temperatures.update(temperatures)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.max_tokens = max_tokens
        self._sleep = sleep
        cache = cache_dir if cache_dir is not None else os.environ.get("LARK_CACHE_DIR")
        self.cache_dir = Path(cache) if cache else None
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    # -- wire protocol -----------------------------------------------------

    def _cache_path(self, payload: dict) -> Path | None:
        if self.cache_dir is None:
            return None
        key = sha256_text(canonical_json(payload))
        return self.cache_dir / f"{key}.json"

    def _post_chat(self, payload: dict, kind: str) -> dict:
        cache_path = self._cache_path(payload)
        if cache_path is not None and cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                logger.debug("POST %s payload=%s", url, canonical_json(payload))
                response = self._client.post(url, headers=headers, json=payload)
                if response.status_code >= 500 or response.status_code == 429:
                    raise httpx.HTTPStatusError(
                        f"status {response.status_code}", request=response.request, response=response
                    )
                response.raise_for_status()
                body = response.json()
                logger.debug("response=%s", canonical_json(body))
                if cache_path is not None:
                    from .util import atomic_write_text

                    atomic_write_text(cache_path, canonical_json(body))
                return body
            except (httpx.HTTPError, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff_base * (2**attempt))
        raise ProviderError(f"provider call failed after {self.max_retries} attempts: {last_error}", kind=kind)

    def _chat(self, prompt: str, kind: str, request: GenerationRequest) -> tuple[str, int | None]:
        """Returns (completion text, endpoint-reported completion tokens)."""
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens_hint or self.max_tokens,
        }
        body = self._post_chat(payload, kind)
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion body: {exc}", kind=kind) from exc
        usage = body.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens", self.tokenizer.count(prompt))
        reported = usage.get("completion_tokens")
        completion_tokens = reported if reported is not None else self.tokenizer.count(text)
        self._record(request, prompt_tokens, completion_tokens)
        return text, reported

    # -- operations --------------------------------------------------------

    def sample_seeds(self, scenario: Scenario, k: int, seed: int) -> list[Strategy]:
        if k < 1:
            raise ValidationError("k must be >= 1")
        strategies = []
        for i in range(k):
            request = GenerationRequest(
                kind="seed", scenario_id=scenario.id, temperature=self.temperatures["seed"]
            )
            text, reported = self._chat(self.seed_prompt(scenario, i), "seed", request)
            text = text.strip()
            if not text:
                raise ProviderError("seed request returned empty text", kind="seed")
            strategies.append(
                make_strategy(
                    id=f"g0-{i:02d}",
                    text=text,
                    tokenizer=self.tokenizer,
                    origin=ORIGIN_SEED,
                    generation_born=0,
                    reported_tokens=reported,
                )
            )
        return strategies

    def plasticity(self, strategy: Strategy, scenario: Scenario, *, new_id: str, generation: int) -> Strategy:
        request = GenerationRequest(
            kind="plasticity",
            scenario_id=scenario.id,
            subject_id=strategy.id,
            temperature=self.temperatures["plasticity"],
        )
        text, reported = self._chat(self.plasticity_prompt(strategy, scenario), "plasticity", request)
        text = text.strip()
        if not text:
            logger.warning("plasticity returned empty text for %s; keeping input", strategy.id)
            return strategy
        return make_strategy(
            id=new_id,
            text=text,
            tokenizer=self.tokenizer,
            origin=ORIGIN_PLASTICITY,
            parent_id=strategy.id,
            generation_born=generation,
            reported_tokens=reported,
        )

    def maturation(
        self, strategy: Strategy, scenario: Scenario, subgroup_hint: str, *, new_id: str, generation: int
    ) -> Strategy:
        request = GenerationRequest(
            kind="maturation",
            scenario_id=scenario.id,
            subject_id=strategy.id,
            subgroup_hint=subgroup_hint,
            temperature=self.temperatures["maturation"],
        )
        text, reported = self._chat(
            self.maturation_prompt(strategy, scenario, subgroup_hint), "maturation", request
        )
        text = text.strip()
        if not text:
            logger.warning("maturation returned empty text for %s; keeping input", strategy.id)
            return strategy
        return make_strategy(
            id=new_id,
            text=text,
            tokenizer=self.tokenizer,
            origin=ORIGIN_MATURATION,
            parent_id=strategy.id,
            generation_born=generation,
            reported_tokens=reported,
        )

    def rank_population(
        self, stakeholder: Stakeholder, population: Population, scenario: Scenario
    ) -> RankingProfile:
        from .aggregation import repair_ranking

        request = GenerationRequest(
            kind="stakeholder_rank",
            scenario_id=scenario.id,
            stakeholder_id=stakeholder.id,
            temperature=self.temperatures["stakeholder_rank"],
        )
        text, _ = self._chat(self.rank_prompt(stakeholder, population, scenario), "stakeholder_rank", request)
        mentioned = re.findall(r"[\w-]+", text)
        ranking, repaired = repair_ranking(mentioned, population.ids)
        if repaired:
            logger.warning(
                "stakeholder %s ranking repaired for scenario %s", stakeholder.id, scenario.id
            )
        return RankingProfile(stakeholder_id=stakeholder.id, ranking=ranking)

    def judge_score(
        self, scenario: Scenario, anon_id: str, output: str, temperature: float
    ) -> tuple[dict[str, int], str]:
        prompt = self.judge_prompt(scenario, anon_id, output)
        request = GenerationRequest(
            kind="judge_score", scenario_id=scenario.id, subject_id=anon_id, temperature=temperature
        )
        text, _ = self._chat(prompt, "judge_score", request)
        match = re.search(r"\{.*\}", text, re.DOTALL)
        if not match:
            raise ProviderError("judge response contains no JSON object", kind="judge_score")
        try:
            raw = json.loads(match.group(0))
        except json.JSONDecodeError as exc:
            raise ProviderError(f"judge JSON unparseable: {exc}", kind="judge_score") from exc
        scores = {}
        for name in JUDGE_CRITERIA:
            if name not in raw:
                raise ProviderError(f"judge response missing criterion {name!r}", kind="judge_score")
            value = int(raw[name])
            scores[name] = min(10, max(0, value))
        return scores, prompt


def make_provider(
    spec: str | Mapping,
    seed: int = 0,
    tokenizer: Tokenizer | None = None,
) -> Provider:
    """Provider factory used by the CLI: 'mock' or a live-endpoint mapping
    with base_url, model, and an optional price table."""
    if spec == "mock":
        return MockProvider(seed=seed, tokenizer=tokenizer)
    if isinstance(spec, Mapping):
        kind = spec.get("kind", "live")
        if kind == "mock":
            return MockProvider(seed=seed, tokenizer=tokenizer)
        prices = {
            model: (entry["input_per_1e6"], entry["output_per_1e6"])
            for model, entry in (spec.get("prices") or {}).items()
        }
        return OpenAICompatProvider(
            base_url=spec["base_url"],
            model=spec["model"],
            price_table=PriceTable(prices),
            tokenizer=tokenizer or Tokenizer("provider"),
            temperatures=spec.get("temperatures"),
            max_retries=int(spec.get("max_retries", 3)),
            backoff_base=float(spec.get("backoff_base", 1.0)),
            max_tokens=int(spec.get("max_tokens", 1024)),
        )
    raise ValidationError(f"unknown provider spec {spec!r}")
