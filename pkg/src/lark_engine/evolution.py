"""The generational evolutionary loop and its append-only run trace.

Each generation: an optional plasticity pass rewrites members in place,
stakeholders rank the pool, scores are aggregated (weighted Borda, or plain
averaging under the rcv_off ablation), the token penalty produces adjusted
scores, duplication is sampled per-member from the logistic probability,
matured copies are scored in a supplementary ranking round over the union
pool, and the top-k of the union survive. Four ablation flags disable one
mechanism each.

Traces are line-oriented JSON (config, seeds, one line per generation,
summary), self-describing via a schema version, and replayable: every
computed field can be re-derived from the stored inputs. Wall-clock
durations are the single field excluded from canonical comparisons.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import prompt_templates
from .aggregation import average_scores, borda_scores, consensus_cv, consensus_from_scores
from .core import (
    GenerationRecord,
    Population,
    Scenario,
    Strategy,
    Tokenizer,
    UsageEvent,
    scenario_from_dict,
    scenario_to_dict,
    usage_totals,
    validate_profile,
)
from .errors import ProviderError, TraceError, ValidationError
from .fitness import FitnessRecord, adaptive_tau, compute_adjusted, duplication_probability, efficiency
from .providers import Provider, make_provider
from .util import canonical_json, read_jsonl, rng_for, sha256_text

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1

ABLATION_FLAGS = ("plasticity_off", "rcv_off", "dup_mat_off", "penalty_off")

# The full system plus the four single-flag ablation variants.
VARIANTS = {
    "full": (),
    "no-plasticity": ("plasticity_off",),
    "no-rcv": ("rcv_off",),
    "no-dup-mat": ("dup_mat_off",),
    "no-penalty": ("penalty_off",),
}


@dataclass(frozen=True)
class EvolutionConfig:
    """Run parameters. Token target and penalty coefficient default to the
    scenario budget; the overrides exist for sweeps."""

    k: int = 6
    generations: int = 5
    p_plast: float = 0.6
    plasticity_decay: float = 0.8
    tau_mode: str = "adaptive"
    tau_fraction: float = 0.25
    tau_constant: float | None = None
    lambda_override: float | None = None
    target_tokens_override: int | None = None
    plasticity_off: bool = False
    rcv_off: bool = False
    dup_mat_off: bool = False
    penalty_off: bool = False
    rng_seed: int = 0
    provider: str | Mapping = "mock"
    parallelism: int = 1
    tokenizer_mode: str = "whitespace"

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("config: k must be >= 1")
        if self.generations < 1:
            raise ValidationError("config: generations must be >= 1")
        if not 0.0 <= self.p_plast <= 1.0:
            raise ValidationError("config: p_plast must be in [0, 1]")
        if not 0.0 < self.plasticity_decay <= 1.0:
            raise ValidationError("config: plasticity decay must be in (0, 1]")
        if self.tau_mode not in ("adaptive", "constant"):
            raise ValidationError(f"config: unknown tau mode {self.tau_mode!r}")
        if self.tau_mode == "constant" and (self.tau_constant is None or self.tau_constant <= 0):
            raise ValidationError("config: constant tau mode needs tau_constant > 0")
        if self.tau_mode == "adaptive" and self.tau_fraction <= 0:
            raise ValidationError("config: tau_fraction must be positive")
        if self.parallelism < 1:
            raise ValidationError("config: parallelism must be >= 1")
        if self.lambda_override is not None and not 0.0 <= self.lambda_override <= 1.0:
            raise ValidationError("config: lambda override must be in [0, 1]")
        if self.target_tokens_override is not None and self.target_tokens_override <= 0:
            raise ValidationError("config: target token override must be positive")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "generations": self.generations,
            "p_plast": self.p_plast,
            "plasticity_decay": self.plasticity_decay,
            "tau_mode": self.tau_mode,
            "tau_fraction": self.tau_fraction,
            "tau_constant": self.tau_constant,
            "lambda_override": self.lambda_override,
            "target_tokens_override": self.target_tokens_override,
            "plasticity_off": self.plasticity_off,
            "rcv_off": self.rcv_off,
            "dup_mat_off": self.dup_mat_off,
            "penalty_off": self.penalty_off,
            "rng_seed": self.rng_seed,
            "provider": self.provider if isinstance(self.provider, str) else dict(self.provider),
            "parallelism": self.parallelism,
            "tokenizer_mode": self.tokenizer_mode,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvolutionConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def variant_config(base: EvolutionConfig, variant: str) -> EvolutionConfig:
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")
    return replace(base, **{flag: True for flag in VARIANTS[variant]})


@dataclass(frozen=True)
class RunTrace:
    """Full account of one run: enough to replay every computed field."""

    scenario: Scenario
    config: EvolutionConfig
    prompt_hashes: dict[str, str]
    provider_model: str
    seed_population: tuple[Strategy, ...]
    seed_usage: tuple[UsageEvent, ...]
    records: tuple[GenerationRecord, ...]
    final_population: tuple[str, ...]
    efficiency_trajectory: tuple[float, ...]
    aborted: bool

    @property
    def usage_total(self) -> dict:
        events = list(self.seed_usage)
        for record in self.records:
            events.extend(record.usage_events)
        return usage_totals(events)

    def to_lines(self) -> list[dict]:
        lines: list[dict] = [
            {
                "type": "config",
                "schema": TRACE_SCHEMA_VERSION,
                "scenario": scenario_to_dict(self.scenario),
                "config": self.config.to_dict(),
                "prompt_hashes": dict(self.prompt_hashes),
                "provider_model": self.provider_model,
            },
            {
                "type": "seeds",
                "members": [s.to_dict() for s in self.seed_population],
                "usage_events": [u.to_dict() for u in self.seed_usage],
            },
        ]
        lines.extend(r.to_dict() for r in self.records)
        lines.append(
            {
                "type": "summary",
                "aborted": self.aborted,
                "generations_completed": len(self.records),
                "final_population": list(self.final_population),
                "efficiency_trajectory": list(self.efficiency_trajectory),
                "usage_totals": self.usage_total,
            }
        )
        return lines

    @classmethod
    def from_lines(cls, lines: Sequence[dict]) -> "RunTrace":
        if len(lines) < 3:
            raise TraceError("trace too short: need config, seeds and summary lines")
        head, seeds_line, *rest = lines
        if head.get("type") != "config":
            raise TraceError("first trace line must be the config record")
        if head.get("schema") != TRACE_SCHEMA_VERSION:
            raise TraceError(f"unsupported trace schema {head.get('schema')!r}")
        if seeds_line.get("type") != "seeds":
            raise TraceError("second trace line must be the seed population")
        summary = rest[-1]
        if summary.get("type") != "summary":
            raise TraceError("last trace line must be the summary record")
        records = tuple(GenerationRecord.from_dict(line) for line in rest[:-1])
        return cls(
            scenario=scenario_from_dict(head["scenario"]),
            config=EvolutionConfig.from_dict(head["config"]),
            prompt_hashes=dict(head["prompt_hashes"]),
            provider_model=head["provider_model"],
            seed_population=tuple(Strategy.from_dict(s) for s in seeds_line["members"]),
            seed_usage=tuple(UsageEvent.from_dict(u) for u in seeds_line["usage_events"]),
            records=records,
            final_population=tuple(summary["final_population"]),
            efficiency_trajectory=tuple(summary["efficiency_trajectory"]),
            aborted=summary["aborted"],
        )


def write_trace(trace: RunTrace, path: str | Path) -> None:
    from .util import atomic_write_text

    atomic_write_text(path, "".join(canonical_json(line) + "\n" for line in trace.to_lines()))


def read_trace(path: str | Path) -> RunTrace:
    return RunTrace.from_lines(read_jsonl(path))


def canonical_trace_text(lines: Sequence[dict]) -> str:
    """Canonical trace serialization: wall-clock durations stripped, since
    they are the one legitimately non-reproducible field."""
    cleaned = []
    for line in lines:
        line = dict(line)
        line.pop("duration_s", None)
        cleaned.append(canonical_json(line))
    return "\n".join(cleaned) + "\n"


def trace_hash(trace: RunTrace) -> str:
    return sha256_text(canonical_trace_text(trace.to_lines()))


def select_survivors(candidates: Sequence[tuple[Strategy, float]], k: int) -> list[tuple[Strategy, float]]:
    """Top-k by adjusted score; ties prefer lower token count, then smaller
    id. Output is in descending score order."""
    if len(candidates) < k:
        raise ValidationError(f"cannot select {k} survivors from {len(candidates)} candidates")
    ordered = sorted(candidates, key=lambda item: (-item[1], item[0].token_count, item[0].id))
    return list(ordered[:k])


def sample_duplications(records: Sequence[FitnessRecord], rng) -> list[str]:
    """One independent Bernoulli draw per member, in population order."""
    return [record.strategy_id for record in records if rng.random() < record.p_dup]


class _TraceWriter:
    """Append-only line writer; no-op when no path is configured."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, line: dict) -> None:
        if self.path:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(canonical_json(line) + "\n")


def _fan_out(tasks: Sequence[Callable[[], object]], parallelism: int) -> list:
    """Run independent provider calls, preserving input order in the result."""
    if parallelism <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda task: task(), tasks))


def run(
    scenario: Scenario,
    config: EvolutionConfig,
    provider: Provider | None = None,
    trace_path: str | Path | None = None,
) -> RunTrace:
    """Execute the full loop for G generations and return the trace.

    On a provider hard failure the partial trace (config, seeds, completed
    generations, aborted summary) is persisted and ProviderError re-raised.
    """
    tokenizer = Tokenizer(config.tokenizer_mode)
    if provider is None:
        provider = make_provider(config.provider, seed=config.rng_seed, tokenizer=tokenizer)
    k = config.k
    t_target = config.target_tokens_override or scenario.budget.target_tokens
    lam = (
        config.lambda_override
        if config.lambda_override is not None
        else scenario.budget.penalty_lambda
    )
    writer = _TraceWriter(trace_path)
    prompt_hashes = prompt_templates.all_template_hashes()
    config_line = {
        "type": "config",
        "schema": TRACE_SCHEMA_VERSION,
        "scenario": scenario_to_dict(scenario),
        "config": config.to_dict(),
        "prompt_hashes": prompt_hashes,
        "provider_model": provider.model,
    }
    writer.write(config_line)

    records: list[GenerationRecord] = []
    trajectory: list[float] = []

    def finish(seeds, seed_events, final_ids, aborted):
        trace = RunTrace(
            scenario=scenario,
            config=config,
            prompt_hashes=prompt_hashes,
            provider_model=provider.model,
            seed_population=tuple(seeds),
            seed_usage=tuple(seed_events),
            records=tuple(records),
            final_population=tuple(final_ids),
            efficiency_trajectory=tuple(trajectory),
            aborted=aborted,
        )
        writer.write(trace.to_lines()[-1])
        return trace

    usage_start = len(provider.usage_log)
    try:
        seeds = provider.sample_seeds(scenario, k, config.rng_seed)
    except ProviderError:
        writer.write(
            {
                "type": "summary",
                "aborted": True,
                "generations_completed": 0,
                "final_population": [],
                "efficiency_trajectory": [],
                "usage_totals": usage_totals(provider.take_events(usage_start)),
            }
        )
        raise
    if len(seeds) != k:
        raise ProviderError(f"provider produced {len(seeds)} seeds, expected {k}", kind="seed")
    seed_events = provider.take_events(usage_start)
    writer.write(
        {
            "type": "seeds",
            "members": [s.to_dict() for s in seeds],
            "usage_events": [u.to_dict() for u in seed_events],
        }
    )

    population = Population(generation=0, members=tuple(seeds))
    try:
        for t in range(1, config.generations + 1):
            started = time.perf_counter()
            usage_start = len(provider.usage_log)
            id_counter = itertools.count()

            # Plasticity pass: per-member Bernoulli at the decayed rate,
            # replacement in place so the pool size never changes here.
            p_eff = 0.0 if config.plasticity_off else config.p_plast * config.plasticity_decay ** (t - 1)
            draw_rng = rng_for("plasticity-draw", config.rng_seed, scenario.id, t)
            chosen = [draw_rng.random() < p_eff for _ in population.members]
            plasticity_events: list[dict] = []
            new_ids = {
                member.id: f"g{t}-{next(id_counter):02d}"
                for member, hit in zip(population.members, chosen)
                if hit
            }
            tasks = [
                (lambda m=member: provider.plasticity(
                    m, scenario, new_id=new_ids[m.id], generation=t
                ))
                for member, hit in zip(population.members, chosen)
                if hit
            ]
            refined = _fan_out(tasks, config.parallelism)
            refined_by_parent = {}
            for member, result in zip(
                [m for m, hit in zip(population.members, chosen) if hit], refined
            ):
                if result is member or result.id == member.id:
                    plasticity_events.append({"member": member.id, "child": None, "no_op": True})
                else:
                    refined_by_parent[member.id] = result
                    plasticity_events.append({"member": member.id, "child": result.id, "no_op": False})
            pool_members = tuple(
                refined_by_parent.get(m.id, m) for m in population.members
            )
            pool = Population(generation=population.generation, members=pool_members)
            new_members = [refined_by_parent[pid] for pid in sorted(refined_by_parent)]

            # Stakeholder ranking round over the post-plasticity pool.
            rank_tasks = [
                (lambda s=stakeholder: provider.rank_population(s, pool, scenario))
                for stakeholder in scenario.stakeholders
            ]
            profiles = _fan_out(rank_tasks, config.parallelism)
            for profile in profiles:
                validate_profile(profile, pool.ids)

            token_counts = pool.token_counts()
            if config.rcv_off:
                scores = average_scores(profiles, k)
                cv = consensus_cv(list(scores.values()))
                consensus_id = consensus_from_scores(scores, token_counts)
            else:
                result = borda_scores(profiles, scenario.weights, k, token_counts)
                scores, cv, consensus_id = result.scores, result.cv, result.consensus_id

            lam_eff = 0.0 if config.penalty_off else lam
            adjusted = {
                sid: compute_adjusted(scores[sid], token_counts[sid], t_target, lam_eff)
                for sid in pool.ids
            }
            if config.tau_mode == "constant":
                tau = float(config.tau_constant)
            else:
                tau = adaptive_tau(list(adjusted.values()), config.tau_fraction)
            mean_adjusted = sum(adjusted.values()) / k
            fitness = tuple(
                FitnessRecord(
                    strategy_id=m.id,
                    borda=float(scores[m.id]),
                    adjusted=adjusted[m.id],
                    token_count=m.token_count,
                    p_dup=duplication_probability(adjusted[m.id], mean_adjusted, tau),
                    penalized=m.token_count > t_target,
                )
                for m in pool.members
            )
            gen_efficiency = efficiency(
                [float(scores[m.id]) for m in pool.members],
                [m.token_count for m in pool.members],
            )
            trajectory.append(gen_efficiency)

            # Duplication sampling plus maturation of the copies; the union
            # pool is re-ranked so selection compares like against like.
            duplication_selected: tuple[str, ...] = ()
            duplication_events: list[dict] = []
            union_profiles = None
            union_scores_rec = None
            if config.dup_mat_off:
                candidates = [(m, adjusted[m.id]) for m in pool.members]
            else:
                dup_rng = rng_for("duplication", config.rng_seed, scenario.id, t)
                duplication_selected = tuple(sample_duplications(fitness, dup_rng))
                hint_rng = rng_for("maturation-hint", config.rng_seed, scenario.id, t)
                hint_options = list(scenario.stakeholder_ids) + list(scenario.objectives)
                parent_hints = [
                    (pool.member(pid), hint_rng.choice(hint_options))
                    for pid in duplication_selected
                ]
                child_ids = {
                    parent.id: f"g{t}-{next(id_counter):02d}" for parent, _ in parent_hints
                }
                mat_tasks = [
                    (lambda p=parent, h=hint: provider.maturation(
                        p, scenario, h, new_id=child_ids[p.id], generation=t
                    ))
                    for parent, hint in parent_hints
                ]
                children = []
                for (parent, hint), child in zip(parent_hints, _fan_out(mat_tasks, config.parallelism)):
                    if child is parent or child.id == parent.id:
                        duplication_events.append(
                            {"parent": parent.id, "child": None, "hint": hint, "no_op": True}
                        )
                    else:
                        children.append(child)
                        duplication_events.append(
                            {"parent": parent.id, "child": child.id, "hint": hint, "no_op": False}
                        )
                new_members.extend(children)
                if children:
                    union_pool = Population(
                        generation=population.generation,
                        members=pool.members + tuple(children),
                    )
                    union_rank_tasks = [
                        (lambda s=stakeholder: provider.rank_population(s, union_pool, scenario))
                        for stakeholder in scenario.stakeholders
                    ]
                    union_profiles = tuple(_fan_out(union_rank_tasks, config.parallelism))
                    for profile in union_profiles:
                        validate_profile(profile, union_pool.ids)
                    k_union = union_pool.size
                    union_tokens = union_pool.token_counts()
                    if config.rcv_off:
                        union_scores = average_scores(union_profiles, k_union)
                    else:
                        union_scores = borda_scores(
                            union_profiles, scenario.weights, k_union, union_tokens
                        ).scores
                    union_adjusted = {
                        sid: compute_adjusted(
                            union_scores[sid], union_tokens[sid], t_target, lam_eff
                        )
                        for sid in union_pool.ids
                    }
                    union_scores_rec = {
                        sid: {"borda": float(union_scores[sid]), "adjusted": union_adjusted[sid]}
                        for sid in union_pool.ids
                    }
                    candidates = [(m, union_adjusted[m.id]) for m in union_pool.members]
                else:
                    candidates = [(m, adjusted[m.id]) for m in pool.members]

            survivors = select_survivors(candidates, k)
            population = Population(generation=t, members=tuple(m for m, _ in survivors))
            if population.size != k:
                raise ValidationError(f"generation {t}: population size {population.size} != k")

            record = GenerationRecord(
                generation=t,
                tau=tau,
                p_plast_effective=p_eff,
                plasticity_events=tuple(plasticity_events),
                profiles=tuple(profiles),
                borda={sid: float(scores[sid]) for sid in pool.ids},
                cv=cv,
                consensus_id=consensus_id,
                fitness=fitness,
                efficiency=gen_efficiency,
                duplication_selected=duplication_selected,
                duplication_events=tuple(duplication_events),
                union_profiles=union_profiles,
                union_scores=union_scores_rec,
                survivors=tuple(population.ids),
                new_members=tuple(new_members),
                usage_events=tuple(provider.take_events(usage_start)),
                duration_s=time.perf_counter() - started,
            )
            records.append(record)
            writer.write(record.to_dict())
    except ProviderError:
        finish(seeds, seed_events, [], aborted=True)
        raise

    return finish(seeds, seed_events, population.ids, aborted=False)


def run_ablation_suite(
    scenarios: Sequence[Scenario],
    base_config: EvolutionConfig,
    trace_dir: str | Path | None = None,
    provider_factory: Callable[[EvolutionConfig], Provider] | None = None,
) -> dict[tuple[str, str], RunTrace | None]:
    """Full plus the four ablation variants on every scenario under matched
    seeds. A failed run is recorded as a missing pair, not a suite failure."""
    results: dict[tuple[str, str], RunTrace | None] = {}
    for scenario in scenarios:
        for variant in VARIANTS:
            config = variant_config(base_config, variant)
            tokenizer = Tokenizer(config.tokenizer_mode)
            if provider_factory is not None:
                provider = provider_factory(config)
            else:
                provider = make_provider(config.provider, seed=config.rng_seed, tokenizer=tokenizer)
            path = (
                Path(trace_dir) / f"{scenario.id}--{variant}.trace.jsonl" if trace_dir else None
            )
            try:
                results[(scenario.id, variant)] = run(scenario, config, provider, path)
            except ProviderError as exc:
                logger.error("run (%s, %s) aborted: %s", scenario.id, variant, exc)
                results[(scenario.id, variant)] = None
    return results


# --- replay ------------------------------------------------------------------


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def replay(trace: RunTrace) -> list[str]:
    """Re-derive every computed field of a trace and report mismatches.

    An empty result means the trace is internally consistent. Token counts
    are recomputed from the stored texts except in provider-tokenizer mode,
    where the original counts came from the endpoint.
    """
    diffs: list[str] = []
    scenario = trace.scenario
    config = trace.config
    tokenizer = Tokenizer(config.tokenizer_mode)
    t_target = config.target_tokens_override or scenario.budget.target_tokens
    lam = (
        config.lambda_override
        if config.lambda_override is not None
        else scenario.budget.penalty_lambda
    )
    lam_eff = 0.0 if config.penalty_off else lam

    known: dict[str, Strategy] = {}

    def register(strategy: Strategy, where: str):
        if strategy.parent_id is not None and strategy.parent_id not in known:
            diffs.append(f"{where}: parent {strategy.parent_id} of {strategy.id} unknown")
        if config.tokenizer_mode != "provider":
            expected = tokenizer.count(strategy.text)
            if expected != strategy.token_count:
                diffs.append(
                    f"{where}: token count of {strategy.id} is {strategy.token_count}, recomputed {expected}"
                )
        known[strategy.id] = strategy

    for seed in trace.seed_population:
        register(seed, "seeds")
    if len(trace.seed_population) != config.k:
        diffs.append(f"seeds: {len(trace.seed_population)} members, expected k={config.k}")

    current_ids = [s.id for s in trace.seed_population]
    for record in trace.records:
        where = f"generation {record.generation}"
        for strategy in record.new_members:
            register(strategy, where)

        replaced = {
            e["member"]: e["child"] for e in record.plasticity_events if not e.get("no_op")
        }
        scored_ids = [replaced.get(sid, sid) for sid in current_ids]
        fitness_ids = [f.strategy_id for f in record.fitness]
        if fitness_ids != scored_ids:
            diffs.append(f"{where}: scored pool {fitness_ids} != expected {scored_ids}")
            scored_ids = fitness_ids

        token_counts = {}
        for sid in scored_ids:
            if sid in known:
                token_counts[sid] = known[sid].token_count
        for f in record.fitness:
            token_counts.setdefault(f.strategy_id, f.token_count)

        k = len(scored_ids)
        if config.rcv_off:
            expected_scores = average_scores(record.profiles, k)
            expected_cv = consensus_cv(list(expected_scores.values()))
            expected_consensus = consensus_from_scores(expected_scores, token_counts)
        else:
            result = borda_scores(record.profiles, scenario.weights, k, token_counts)
            expected_scores, expected_cv, expected_consensus = (
                result.scores,
                result.cv,
                result.consensus_id,
            )
        for sid in scored_ids:
            if not _close(record.borda.get(sid, float("nan")), expected_scores[sid], 1e-12):
                diffs.append(
                    f"{where}: borda[{sid}] stored {record.borda.get(sid)} != recomputed {expected_scores[sid]}"
                )
        if (record.cv is None) != (expected_cv is None) or (
            record.cv is not None and not _close(record.cv, expected_cv, 1e-12)
        ):
            diffs.append(f"{where}: cv stored {record.cv} != recomputed {expected_cv}")
        if record.consensus_id != expected_consensus:
            diffs.append(
                f"{where}: consensus stored {record.consensus_id} != recomputed {expected_consensus}"
            )

        adjusted = {}
        for f in record.fitness:
            expected_adjusted = compute_adjusted(
                record.borda[f.strategy_id], f.token_count, t_target, lam_eff
            )
            adjusted[f.strategy_id] = expected_adjusted
            if not _close(f.adjusted, expected_adjusted, 1e-12):
                diffs.append(
                    f"{where}: adjusted[{f.strategy_id}] stored {f.adjusted} != recomputed {expected_adjusted}"
                )
            if f.penalized != (f.token_count > t_target):
                diffs.append(f"{where}: penalized flag wrong for {f.strategy_id}")
        mean_adjusted = sum(adjusted.values()) / k
        for f in record.fitness:
            expected_p = duplication_probability(adjusted[f.strategy_id], mean_adjusted, record.tau)
            if not _close(f.p_dup, expected_p, 1e-12):
                diffs.append(
                    f"{where}: p_dup[{f.strategy_id}] stored {f.p_dup} != recomputed {expected_p}"
                )

        expected_eff = efficiency(
            [record.borda[sid] for sid in scored_ids],
            [token_counts[sid] for sid in scored_ids],
        )
        if not _close(record.efficiency, expected_eff, 1e-9):
            diffs.append(
                f"{where}: efficiency stored {record.efficiency} != recomputed {expected_eff}"
            )
        index = record.generation - 1
        if index >= len(trace.efficiency_trajectory) or trace.efficiency_trajectory[
            index
        ] != record.efficiency:
            diffs.append(f"{where}: trajectory entry does not match record efficiency")

        # Survivor selection replays from the union scores when a
        # supplementary round happened, else from the main adjusted scores.
        if record.union_scores is not None:
            union_ids = list(record.union_scores.keys())
            union_tokens = {}
            for sid in union_ids:
                union_tokens[sid] = known[sid].token_count if sid in known else token_counts.get(sid, 0)
            k_union = len(union_ids)
            if record.union_profiles is None:
                diffs.append(f"{where}: union scores present without union profiles")
            else:
                if config.rcv_off:
                    expected_union = average_scores(record.union_profiles, k_union)
                else:
                    expected_union = borda_scores(
                        record.union_profiles, scenario.weights, k_union, union_tokens
                    ).scores
                for sid in union_ids:
                    stored = record.union_scores[sid]
                    if not _close(stored["borda"], expected_union[sid], 1e-12):
                        diffs.append(f"{where}: union borda[{sid}] mismatch")
                    expected_adj = compute_adjusted(
                        expected_union[sid], union_tokens[sid], t_target, lam_eff
                    )
                    if not _close(stored["adjusted"], expected_adj, 1e-12):
                        diffs.append(f"{where}: union adjusted[{sid}] mismatch")
            pool_scores = {sid: record.union_scores[sid]["adjusted"] for sid in union_ids}
            pool_tokens = union_tokens
        else:
            pool_scores = adjusted
            pool_tokens = token_counts
        ordered = sorted(
            pool_scores,
            key=lambda sid: (-pool_scores[sid], pool_tokens.get(sid, 0), sid),
        )
        expected_survivors = tuple(ordered[: len(record.survivors)])
        if tuple(record.survivors) != expected_survivors:
            diffs.append(
                f"{where}: survivors stored {list(record.survivors)} != recomputed {list(expected_survivors)}"
            )
        if len(record.survivors) != config.k:
            diffs.append(f"{where}: population size {len(record.survivors)} != k={config.k}")

        current_ids = list(record.survivors)

    if not trace.aborted:
        if len(trace.records) != config.generations:
            diffs.append(
                f"trace: {len(trace.records)} generation records, expected {config.generations}"
            )
        if list(trace.final_population) != current_ids:
            diffs.append("trace: final population does not match last survivors")
    if len(trace.efficiency_trajectory) != len(trace.records):
        diffs.append("trace: efficiency trajectory length differs from record count")
    return diffs
