"""Command-line surface: scenario generation, runs, ablations, judging,
benchmarks, statistics, reports, and trace replay."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml

from .benchmark import (
    BenchmarkResult,
    RosterEntry,
    default_roster,
    final_best_text,
    run_benchmark,
)
from .core import Scenario, load_scenario, save_scenario
from .errors import LarkError, ProviderError
from .evolution import (
    EvolutionConfig,
    VARIANTS,
    read_trace,
    replay,
    run,
    run_ablation_suite,
    variant_config,
)
from .judging import JudgeConfig, JudgeSpec, judge_outputs
from .reporting import (
    generate_reports,
    read_costs_csv,
    read_overall_rows_csv,
    read_score_matrix,
    render_overall_table,
    render_pairwise_table,
    write_costs_csv,
    write_efficiency_csv,
    write_score_matrix,
    write_stats_csv,
)
from .stakeholder_sim import make_benchmark_scenarios
from .stats import paired_tests
from .util import atomic_write_text, canonical_json


def _load_scenarios(path: str) -> list[Scenario]:
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.yaml"))
        if not files:
            raise click.ClickException(f"no *.yaml scenarios under {p}")
        return [load_scenario(f) for f in files]
    return [load_scenario(p)]


def _load_run_config(path: str | None) -> tuple[EvolutionConfig, JudgeConfig]:
    if path is None:
        return EvolutionConfig(), JudgeConfig()
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    evolution = EvolutionConfig.from_dict(doc.get("evolution", {}))
    judges = doc.get("judges")
    if judges:
        specs = tuple(
            JudgeSpec(
                name=j["name"],
                provider=j.get("provider", "mock"),
                shuffle_seed=int(j.get("shuffle_seed", i)),
            )
            for i, j in enumerate(judges)
        )
    else:
        specs = JudgeConfig().judges
    judge_config = JudgeConfig(
        judges=specs,
        temperature=float(doc.get("judge_temperature", 0.1)),
        blinding_salt=str(doc.get("blinding_salt", "lark-blind")),
    )
    return evolution, judge_config


def _apply_overrides(config: EvolutionConfig, seed, generations, population) -> EvolutionConfig:
    data = config.to_dict()
    if seed is not None:
        data["rng_seed"] = seed
    if generations is not None:
        data["generations"] = generations
    if population is not None:
        data["k"] = population
    return EvolutionConfig.from_dict(data)


@click.group()
def main():
    """Compute-aware evolutionary strategy search and evaluation harness."""


@main.command("gen-scenarios")
@click.option("--count", default=30, show_default=True, help="How many scenarios to generate.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--min-stakeholders", default=3, show_default=True, type=int)
@click.option("--max-stakeholders", default=7, show_default=True, type=int)
def gen_scenarios_cmd(count: int, seed: int, out: str, min_stakeholders: int, max_stakeholders: int):
    """Generate synthetic benchmark scenarios with attached utilities."""
    scenarios = make_benchmark_scenarios(
        count, seed, stakeholder_range=(min_stakeholders, max_stakeholders)
    )
    out_dir = Path(out)
    for scenario in scenarios:
        save_scenario(scenario, out_dir / f"{scenario.id}.yaml")
    click.echo(f"wrote {len(scenarios)} scenarios to {out_dir}")


@main.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--out", "trace_path", default=None, type=click.Path(), help="Trace file path.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--variant", default="full", type=click.Choice(sorted(VARIANTS)), show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--generations", default=None, type=int)
@click.option("--population", default=None, type=int, help="Population size k.")
def run_cmd(scenario_path, trace_path, config_path, variant, seed, generations, population):
    """Run the evolutionary loop on one scenario."""
    scenario = load_scenario(scenario_path)
    base, _ = _load_run_config(config_path)
    config = variant_config(_apply_overrides(base, seed, generations, population), variant)
    try:
        trace = run(scenario, config, trace_path=trace_path)
    except ProviderError as exc:
        raise click.ClickException(f"run aborted: {exc}")
    click.echo(f"scenario={scenario.id} variant={variant} generations={len(trace.records)}")
    click.echo("efficiency trajectory: " + ", ".join(f"{e:.6f}" for e in trace.efficiency_trajectory))
    click.echo(f"final population: {', '.join(trace.final_population)}")
    click.echo(f"total cost: {trace.usage_total['cost']:.6f}")
    best = final_best_text(trace)
    if best:
        click.echo(f"best strategy:\n{best}")


@main.command("ablate")
@click.option("--scenarios", "scenarios_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Trace directory.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def ablate_cmd(scenarios_path, out, config_path, seed):
    """Run the full system plus all four ablations under matched seeds."""
    scenarios = _load_scenarios(scenarios_path)
    base, _ = _load_run_config(config_path)
    base = _apply_overrides(base, seed, None, None)
    results = run_ablation_suite(scenarios, base, trace_dir=out)
    missing = [key for key, trace in results.items() if trace is None]
    click.echo(f"completed {len(results) - len(missing)}/{len(results)} runs")
    for key in missing:
        click.echo(f"missing pair: {key}", err=True)
    if missing:
        sys.exit(1)


@main.command("judge")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--outputs", "outputs_dir", required=True, type=click.Path(exists=True),
              help="Directory of <system>.txt files for this scenario.")
@click.option("--out", required=True, type=click.Path(), help="Evaluation output directory.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def judge_cmd(scenario_path, outputs_dir, out, config_path):
    """Judge externally supplied system outputs under the blinding protocol."""
    scenario = load_scenario(scenario_path)
    _, judge_config = _load_run_config(config_path)
    outputs = {
        path.stem: path.read_text(encoding="utf-8").strip()
        for path in sorted(Path(outputs_dir).glob("*.txt"))
    }
    if len(outputs) < 2:
        raise click.ClickException("need at least two <system>.txt outputs to judge")
    record, payloads = judge_outputs(outputs, scenario, judge_config)
    out_dir = Path(out)
    atomic_write_text(out_dir / f"{scenario.id}.json", canonical_json(record.to_dict()) + "\n")
    atomic_write_text(
        out_dir / f"{scenario.id}.payloads.jsonl",
        "".join(canonical_json(p) + "\n" for p in payloads),
    )
    for anon in record.aggregation_ranking:
        composite = record.aggregated_composite[anon]
        shown = "invalid" if composite is None else f"{composite:.1f}/50"
        click.echo(f"{record.mapping[anon]}: {shown}")


def _load_roster(path: str | None) -> list[RosterEntry]:
    if path is None:
        return default_roster()
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list) or not doc:
        raise click.ClickException(f"roster {path}: expected a non-empty list")
    return [
        RosterEntry(
            name=entry["name"],
            variant=entry.get("variant"),
            output_dir=entry.get("output_dir"),
            overrides=entry.get("overrides"),
        )
        for entry in doc
    ]


def _persist_benchmark(result: BenchmarkResult, out_dir: Path) -> None:
    reports = out_dir / "reports"
    write_score_matrix(result.matrix, result.scenario_ids, reports / "score_matrix.csv")
    write_costs_csv(result.costs, reports / "costs.csv")
    write_efficiency_csv(result.trajectories, reports / "efficiency.csv")


@main.command("bench")
@click.option("--scenarios", "scenarios_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--roster", "roster_path", default=None, type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def bench_cmd(scenarios_path, out, config_path, roster_path, seed):
    """Run a system roster over a scenario set and judge every round."""
    scenarios = _load_scenarios(scenarios_path)
    base, judge_config = _load_run_config(config_path)
    base = _apply_overrides(base, seed, None, None)
    roster = _load_roster(roster_path)
    result = run_benchmark(scenarios, roster, base, judge_config, out_dir=out)
    _persist_benchmark(result, Path(out))
    click.echo(
        f"benchmarked {len(result.systems)} systems x {len(result.scenario_ids)} rounds; "
        f"artifacts under {out}"
    )


@main.command("stats")
@click.option("--matrix", "matrix_path", required=True, type=click.Path(exists=True))
@click.option("--baseline", default="lark-full", show_default=True)
@click.option("--out", default=None, type=click.Path(), help="Where to write stats.csv.")
def stats_cmd(matrix_path, baseline, out):
    """Paired Wilcoxon, effect sizes, and Holm adjustment vs. a baseline."""
    matrix, _ = read_score_matrix(matrix_path)
    try:
        results = paired_tests(matrix, baseline)
    except LarkError as exc:
        raise click.ClickException(str(exc))
    results.sort(key=lambda r: (r.delta_mean, r.comparator))
    click.echo(render_pairwise_table(results), nl=False)
    if out:
        write_stats_csv(results, Path(out) / "stats.csv")


@main.command("report")
@click.option("--matrix", "matrix_path", default=None, type=click.Path(exists=True))
@click.option("--costs", "costs_path", default=None, type=click.Path(exists=True))
@click.option("--baseline", default="lark-full", show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--precomputed", default=None, type=click.Path(exists=True),
              help="Render a hand-entered summary CSV instead of recomputing.")
def report_cmd(matrix_path, costs_path, baseline, out, precomputed):
    """Render the overall/ablation/pairwise tables and CSV artifacts."""
    out_dir = Path(out)
    if precomputed:
        table = render_overall_table(read_overall_rows_csv(precomputed))
        atomic_write_text(out_dir / "overall.txt", table)
        click.echo(table, nl=False)
        return
    if matrix_path is None:
        raise click.ClickException("either --matrix or --precomputed is required")
    matrix, scenario_ids = read_score_matrix(matrix_path)
    costs = read_costs_csv(costs_path) if costs_path else {}
    try:
        artifacts = generate_reports(matrix, costs, baseline, out_dir, scenario_ids)
    except LarkError as exc:
        raise click.ClickException(str(exc))
    for name, path in sorted(artifacts.items()):
        click.echo(f"{name}: {path}")


@main.command("replay")
@click.argument("trace_path", type=click.Path(exists=True))
def replay_cmd(trace_path):
    """Re-derive all computed fields of a trace and diff them."""
    try:
        trace = read_trace(trace_path)
    except LarkError as exc:
        raise click.ClickException(f"unreadable trace: {exc}")
    diffs = replay(trace)
    if diffs:
        for diff in diffs:
            click.echo(diff, err=True)
        click.echo(f"replay found {len(diffs)} mismatches", err=True)
        sys.exit(1)
    click.echo("replay clean: all computed fields match")


if __name__ == "__main__":
    main()
