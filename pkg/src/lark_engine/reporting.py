"""Report rendering: the three summary tables plus CSV artifacts.

Tables mirror the benchmark conventions: overall quality (mean rank and
mean composite with 95% CIs, average cost per task), ablation deltas
against the full system, and pairwise significance tests. Values render
with fixed formats so repeated runs produce byte-identical reports.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ValidationError
from .stats import TestResult, mean_ci, paired_deltas, paired_tests, per_round_ranks
from .util import atomic_write_text


def _fmt_ci(lo: float | None, hi: float | None) -> str:
    if lo is None or hi is None:
        return "[-, -]"
    return f"[{lo:.2f}, {hi:.2f}]"


@dataclass(frozen=True)
class OverallRow:
    name: str
    mean_rank: float
    rank_lo: float | None
    rank_hi: float | None
    mean_score: float
    score_lo: float | None
    score_hi: float | None
    cost: float | None


def overall_rows(
    matrix: Mapping[str, Sequence[float | None]],
    costs: Mapping[str, float | None] | None = None,
) -> list[OverallRow]:
    """Per-system mean rank and mean score with CIs, best rank first."""
    ranks = per_round_ranks(matrix)
    rows = []
    for name, row in matrix.items():
        rank_values = [r for r in ranks[name] if r is not None]
        score_values = [s for s in row if s is not None]
        if not rank_values or not score_values:
            raise ValidationError(f"system {name!r} has no completed rounds")
        mean_rank, rank_lo, rank_hi = mean_ci(rank_values)
        mean_score, score_lo, score_hi = mean_ci(score_values)
        rows.append(
            OverallRow(
                name=name,
                mean_rank=mean_rank,
                rank_lo=rank_lo,
                rank_hi=rank_hi,
                mean_score=mean_score,
                score_lo=score_lo,
                score_hi=score_hi,
                cost=(costs or {}).get(name),
            )
        )
    return sorted(rows, key=lambda r: (r.mean_rank, r.name))


def render_overall_table(rows: Sequence[OverallRow]) -> str:
    header = ("System", "Mean Rank v", "Mean Score /50 ^", "Avg. Cost ($/task)")
    body = []
    for row in rows:
        body.append(
            (
                row.name,
                f"{row.mean_rank:.2f} {_fmt_ci(row.rank_lo, row.rank_hi)}",
                f"{row.mean_score:.1f} {_fmt_ci(row.score_lo, row.score_hi)}",
                "-" if row.cost is None else f"{row.cost:.6f}",
            )
        )
    return _render_columns(header, body)


@dataclass(frozen=True)
class AblationRow:
    variant: str
    delta_score: float
    score_lo: float | None
    score_hi: float | None
    delta_rank: float
    rank_lo: float | None
    rank_hi: float | None


def ablation_rows(
    matrix: Mapping[str, Sequence[float | None]],
    baseline: str,
    variants: Sequence[str],
) -> list[AblationRow]:
    """Score and rank deltas of each ablation variant against the baseline,
    smallest score deficit first."""
    ranks = per_round_ranks(matrix)
    rows = []
    for variant in variants:
        (score_mean, score_lo, score_hi), (rank_mean, rank_lo, rank_hi) = paired_deltas(
            matrix, ranks, baseline, variant
        )
        rows.append(
            AblationRow(
                variant=variant,
                delta_score=score_mean,
                score_lo=score_lo,
                score_hi=score_hi,
                delta_rank=rank_mean,
                rank_lo=rank_lo,
                rank_hi=rank_hi,
            )
        )
    return sorted(rows, key=lambda r: (r.delta_score, r.variant))


def render_ablation_table(rows: Sequence[AblationRow]) -> str:
    header = ("Variant", "dScore (/50) ^", "95% CI", "dRank (pos.) v", "95% CI")
    body = [
        (
            row.variant,
            f"{row.delta_score:.1f}",
            _fmt_ci(row.score_lo, row.score_hi),
            f"{row.delta_rank:.2f}",
            _fmt_ci(row.rank_lo, row.rank_hi),
        )
        for row in rows
    ]
    return _render_columns(header, body)


def render_pairwise_table(results: Sequence[TestResult]) -> str:
    header = ("Comparator", "dMean (/50)", "d_z", "W", "p (raw)", "p (Holm)", "n_eff")
    body = [
        (
            r.comparator,
            f"{r.delta_mean:.1f}",
            "undef" if r.d_z is None else f"{r.d_z:.2f}",
            f"{r.w_statistic:.1f}",
            f"{r.p_raw:.3g}",
            f"{r.p_holm:.3g}",
            str(r.n_effective),
        )
        for r in results
    ]
    return _render_columns(header, body)


def _render_columns(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    table = [tuple(header)] + [tuple(row) for row in body]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = []
    for index, row in enumerate(table):
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"


# --- CSV interchange ----------------------------------------------------------


def write_score_matrix(
    matrix: Mapping[str, Sequence[float | None]],
    scenario_ids: Sequence[str],
    path: str | Path,
) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["system", *scenario_ids])
    for name, row in matrix.items():
        writer.writerow([name] + ["" if v is None else repr(v) for v in row])
    atomic_write_text(path, buffer.getvalue())


def read_score_matrix(path: str | Path) -> tuple[dict[str, list[float | None]], list[str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "system":
            raise ValidationError(f"score matrix {path}: first header cell must be 'system'")
        scenario_ids = header[1:]
        matrix: dict[str, list[float | None]] = {}
        for row in reader:
            if not row:
                continue
            name, cells = row[0], row[1:]
            if len(cells) != len(scenario_ids):
                raise ValidationError(f"score matrix {path}: ragged row for {name!r}")
            matrix[name] = [float(c) if c != "" else None for c in cells]
    if not matrix:
        raise ValidationError(f"score matrix {path}: no systems")
    return matrix, scenario_ids


def write_stats_csv(results: Sequence[TestResult], path: str | Path) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["comparator", "n_rounds", "n_effective", "delta_mean", "d_z", "w_statistic", "p_raw", "p_holm", "degenerate"]
    )
    for r in results:
        writer.writerow(
            [
                r.comparator,
                r.n_rounds,
                r.n_effective,
                repr(r.delta_mean),
                "" if r.d_z is None else repr(r.d_z),
                repr(r.w_statistic),
                repr(r.p_raw),
                repr(r.p_holm),
                int(r.degenerate),
            ]
        )
    atomic_write_text(path, buffer.getvalue())


def write_efficiency_csv(
    trajectories: Sequence[tuple[str, str, Sequence[float]]], path: str | Path
) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["system", "scenario", "generation", "efficiency"])
    for system, scenario_id, trajectory in trajectories:
        for generation, value in enumerate(trajectory, start=1):
            writer.writerow([system, scenario_id, generation, repr(value)])
    atomic_write_text(path, buffer.getvalue())


def write_costs_csv(costs: Mapping[str, float | None], path: str | Path) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["system", "avg_cost_per_task"])
    for name, value in costs.items():
        writer.writerow([name, "" if value is None else repr(value)])
    atomic_write_text(path, buffer.getvalue())


def read_costs_csv(path: str | Path) -> dict[str, float | None]:
    costs: dict[str, float | None] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader, None)
        for row in reader:
            if row:
                costs[row[0]] = float(row[1]) if len(row) > 1 and row[1] != "" else None
    return costs


def read_overall_rows_csv(path: str | Path) -> list[OverallRow]:
    """Pre-computed summary rows (hand-entered means/CIs), for rendering
    published figures without recomputation."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        for entry in csv.DictReader(handle):
            def _opt(key):
                value = entry.get(key, "")
                return float(value) if value not in ("", None) else None

            rows.append(
                OverallRow(
                    name=entry["system"],
                    mean_rank=float(entry["mean_rank"]),
                    rank_lo=_opt("rank_lo"),
                    rank_hi=_opt("rank_hi"),
                    mean_score=float(entry["mean_score"]),
                    score_lo=_opt("score_lo"),
                    score_hi=_opt("score_hi"),
                    cost=_opt("cost"),
                )
            )
    if not rows:
        raise ValidationError(f"summary csv {path}: no rows")
    return rows


def generate_reports(
    matrix: Mapping[str, Sequence[float | None]],
    costs: Mapping[str, float | None],
    baseline: str,
    out_dir: str | Path,
    scenario_ids: Sequence[str] | None = None,
    trajectories: Sequence[tuple[str, str, Sequence[float]]] | None = None,
) -> dict[str, Path]:
    """Write every report artifact and return their paths."""
    out = Path(out_dir)
    artifacts: dict[str, Path] = {}

    rows = overall_rows(matrix, costs)
    artifacts["overall"] = out / "overall.txt"
    atomic_write_text(artifacts["overall"], render_overall_table(rows))

    variants = [name for name in matrix if name != baseline]
    ablation = ablation_rows(matrix, baseline, variants)
    artifacts["ablations"] = out / "ablations.txt"
    atomic_write_text(artifacts["ablations"], render_ablation_table(ablation))

    tests = paired_tests(matrix, baseline)
    tests.sort(key=lambda r: (r.delta_mean, r.comparator))
    artifacts["pairwise"] = out / "pairwise.txt"
    atomic_write_text(artifacts["pairwise"], render_pairwise_table(tests))

    artifacts["stats_csv"] = out / "stats.csv"
    write_stats_csv(tests, artifacts["stats_csv"])

    if scenario_ids is not None:
        artifacts["matrix_csv"] = out / "score_matrix.csv"
        write_score_matrix(matrix, scenario_ids, artifacts["matrix_csv"])
    if trajectories is not None:
        artifacts["efficiency_csv"] = out / "efficiency.csv"
        write_efficiency_csv(trajectories, artifacts["efficiency_csv"])
    return artifacts
