"""Multi-system benchmark orchestration.

A roster row is either a runnable engine variant or a directory of
pre-generated outputs (one ``<scenario_id>.txt`` per round). Every scenario
round runs each system, judges the outputs under the blinding protocol,
and contributes one column to the per-round composite score matrix that
feeds the statistics module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import Scenario, Strategy, Tokenizer
from .errors import ProviderError, ValidationError
from .evolution import (
    EvolutionConfig,
    RunTrace,
    VARIANTS,
    run,
    variant_config,
)
from .judging import EvaluationRecord, JudgeConfig, judge_outputs
from .providers import make_provider
from .util import atomic_write_text, canonical_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RosterEntry:
    """One benchmarked system: an engine variant (with optional config
    overrides) or an external output directory."""

    name: str
    variant: str | None = None
    output_dir: str | None = None
    overrides: Mapping | None = None

    def __post_init__(self):
        if (self.variant is None) == (self.output_dir is None):
            raise ValidationError(
                f"roster entry {self.name!r}: exactly one of variant/output_dir required"
            )
        if self.variant is not None and self.variant not in VARIANTS:
            raise ValidationError(f"roster entry {self.name!r}: unknown variant {self.variant!r}")
        if self.output_dir is not None and self.overrides is not None:
            raise ValidationError(
                f"roster entry {self.name!r}: overrides apply only to runnable variants"
            )

    def config_for(self, base: EvolutionConfig) -> EvolutionConfig:
        config = base
        if self.overrides:
            merged = base.to_dict()
            merged.update(self.overrides)
            config = EvolutionConfig.from_dict(merged)
        return variant_config(config, self.variant)


def default_roster() -> list[RosterEntry]:
    return [RosterEntry(name=f"lark-{variant}", variant=variant) for variant in VARIANTS]


def strategies_in(trace: RunTrace) -> dict[str, Strategy]:
    known = {s.id: s for s in trace.seed_population}
    for record in trace.records:
        for s in record.new_members:
            known[s.id] = s
    return known


def final_best_text(trace: RunTrace) -> str | None:
    """Text of the top survivor (the final population is stored in
    descending adjusted-score order)."""
    if trace.aborted or not trace.final_population:
        return None
    return strategies_in(trace)[trace.final_population[0]].text


@dataclass
class BenchmarkResult:
    systems: list[str]
    scenario_ids: list[str]
    matrix: dict[str, list[float | None]]
    costs: dict[str, float | None]
    evaluations: list[EvaluationRecord]
    trajectories: list[tuple[str, str, tuple[float, ...]]]


def run_benchmark(
    scenarios: Sequence[Scenario],
    roster: Sequence[RosterEntry],
    base_config: EvolutionConfig,
    judge_config: JudgeConfig | None = None,
    out_dir: str | Path | None = None,
) -> BenchmarkResult:
    """Run every roster system on every scenario and judge the outputs.

    Artifacts land under ``out_dir``: runs/<system>/<scenario>.trace.jsonl,
    evaluations/<scenario>.json plus the judge-bound payload log, all
    written atomically. Missing external outputs and aborted runs become
    missing matrix cells.
    """
    judge_config = judge_config or JudgeConfig()
    names = [entry.name for entry in roster]
    if len(set(names)) != len(names):
        raise ValidationError("roster names must be unique")
    out = Path(out_dir) if out_dir else None
    tokenizer = Tokenizer(base_config.tokenizer_mode)

    matrix: dict[str, list[float | None]] = {name: [] for name in names}
    costs_accumulator: dict[str, list[float]] = {name: [] for name in names}
    has_cost: dict[str, bool] = {name: False for name in names}
    evaluations: list[EvaluationRecord] = []
    trajectories: list[tuple[str, str, tuple[float, ...]]] = []

    for scenario in scenarios:
        outputs: dict[str, str] = {}
        round_cost: dict[str, float] = {}
        for entry in roster:
            if entry.variant is not None:
                config = entry.config_for(base_config)
                provider = make_provider(config.provider, seed=config.rng_seed, tokenizer=tokenizer)
                trace_path = (
                    out / "runs" / entry.name / f"{scenario.id}.trace.jsonl" if out else None
                )
                try:
                    trace = run(scenario, config, provider, trace_path)
                except ProviderError as exc:
                    logger.error("run %s/%s aborted: %s", entry.name, scenario.id, exc)
                    continue
                text = final_best_text(trace)
                if text is None:
                    continue
                outputs[entry.name] = text
                round_cost[entry.name] = trace.usage_total["cost"]
                has_cost[entry.name] = True
                trajectories.append((entry.name, scenario.id, trace.efficiency_trajectory))
            else:
                path = Path(entry.output_dir) / f"{scenario.id}.txt"
                if not path.exists():
                    logger.warning("external output missing: %s", path)
                    continue
                outputs[entry.name] = path.read_text(encoding="utf-8").strip()
                round_cost[entry.name] = 0.0

        if len(outputs) >= 2:
            record, payloads = judge_outputs(
                outputs, scenario, judge_config, tokenizer=tokenizer
            )
            evaluations.append(record)
            if out:
                base = out / "evaluations"
                atomic_write_text(
                    base / f"{scenario.id}.json", canonical_json(record.to_dict()) + "\n"
                )
                atomic_write_text(
                    base / f"{scenario.id}.payloads.jsonl",
                    "".join(canonical_json(p) + "\n" for p in payloads),
                )
            judge_cost = sum(e.cost for e in record.usage_events)
            share = judge_cost / len(outputs)
            for name in outputs:
                composite = record.composite_for_system(name)
                matrix[name].append(composite)
                costs_accumulator[name].append(round_cost.get(name, 0.0) + share)
            for name in names:
                if name not in outputs:
                    matrix[name].append(None)
        else:
            logger.warning("scenario %s: fewer than two outputs, skipping judging", scenario.id)
            for name in names:
                matrix[name].append(None)

    # External systems have unknown generation cost, so no figure is reported
    # for them; engine variants average trace cost plus their judge share.
    costs: dict[str, float | None] = {}
    for name in names:
        rounds = costs_accumulator[name]
        costs[name] = sum(rounds) / len(rounds) if rounds and has_cost[name] else None

    return BenchmarkResult(
        systems=names,
        scenario_ids=[s.id for s in scenarios],
        matrix=matrix,
        costs=costs,
        evaluations=evaluations,
        trajectories=trajectories,
    )
