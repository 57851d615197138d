"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The heavyweight fixtures (50-run corpora, the full 30-scenario
benchmark executed twice) are module-scoped so the suite stays fast.
"""

import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import pytest
from click.testing import CliRunner

from lark_engine.aggregation import average_scores, borda_scores, consensus_from_scores
from lark_engine.cli import main as cli_main
from lark_engine.core import normalize_weights, RankingProfile
from lark_engine.evolution import (
    EvolutionConfig,
    canonical_trace_text,
    read_trace,
    replay,
    run,
    run_ablation_suite,
    sample_duplications,
)
from lark_engine.fitness import FitnessRecord, compute_adjusted, duplication_probability
from lark_engine.reporting import read_overall_rows_csv, render_overall_table
from lark_engine.stakeholder_sim import make_benchmark_scenarios
from lark_engine.stats import (
    _approx_p,
    _signed_ranks,
    cohens_dz,
    holm_adjust,
    mean_ci,
    wilcoxon_signed_rank,
)
from lark_engine.util import rng_for


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number:2d} ({name}): FAIL")
        raise
    print(f"[acceptance] criterion {number:2d} ({name}): PASS")


# --- shared corpora -----------------------------------------------------------


@pytest.fixture(scope="module")
def full_corpus():
    """50 full-variant mock runs: 10 scenarios x 5 seeds."""
    scenarios = make_benchmark_scenarios(10, seed=401)
    traces = []
    for scenario in scenarios:
        for seed in range(5):
            traces.append(run(scenario, EvolutionConfig(k=6, generations=5, rng_seed=seed)))
    return traces


@pytest.fixture(scope="module")
def static_corpus():
    """50 runs with plasticity and duplication/maturation disabled, so the
    pool is static and scores cannot drift."""
    scenarios = make_benchmark_scenarios(10, seed=402)
    config_base = dict(k=6, generations=5, plasticity_off=True, dup_mat_off=True)
    traces = []
    for scenario in scenarios:
        for seed in range(5):
            traces.append(run(scenario, EvolutionConfig(rng_seed=seed, **config_base)))
    return traces


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """The full mock pipeline (30 scenarios, 5 variants, G=5, k=6) executed
    twice with identical seeds, via the CLI surface."""
    runner = CliRunner()
    roots = []
    started = time.monotonic()
    for attempt in ("one", "two"):
        root = tmp_path_factory.mktemp(f"pipeline-{attempt}")
        steps = [
            ["gen-scenarios", "--count", "30", "--seed", "1104", "--out", str(root / "scenarios")],
            ["bench", "--scenarios", str(root / "scenarios"), "--out", str(root / "bench"), "--seed", "1104"],
            [
                "report",
                "--matrix", str(root / "bench" / "reports" / "score_matrix.csv"),
                "--costs", str(root / "bench" / "reports" / "costs.csv"),
                "--baseline", "lark-full",
                "--out", str(root / "reports"),
            ],
        ]
        for step in steps:
            result = runner.invoke(cli_main, step)
            assert result.exit_code == 0, f"{step[0]} failed: {result.output}"
        roots.append(root)
    elapsed = time.monotonic() - started
    return roots[0], roots[1], elapsed


# --- criteria -----------------------------------------------------------------


def naive_borda(profiles, weights, k):
    scores = {}
    for sid in profiles[0].ranking:
        total = 0.0
        for p, w in zip(profiles, weights):
            for position, candidate in enumerate(p.ranking):
                if candidate == sid:
                    total += w * (k - (position + 1))
        scores[sid] = total
    return scores


def test_criterion_1_borda_oracle_equivalence():
    with criterion(1, "borda oracle equivalence"):
        started = time.monotonic()
        rng = random.Random(8467)
        for _ in range(1000):
            k = rng.randint(1, 5)
            m = rng.randint(1, 4)
            ids = [f"s{i}" for i in range(k)]
            raw = [rng.randint(1, 60) for _ in range(m)]
            rankings = []
            for _ in range(m):
                order = ids[:]
                rng.shuffle(order)
                rankings.append(order)
            profiles = [
                RankingProfile(stakeholder_id=f"sh{j}", ranking=tuple(r))
                for j, r in enumerate(rankings)
            ]
            float_weights = normalize_weights([float(w) for w in raw])
            result = borda_scores(profiles, float_weights, k)
            oracle = naive_borda(profiles, float_weights, k)
            for sid in ids:
                assert abs(result.scores[sid] - oracle[sid]) <= 1e-12
            # exact point conservation under exact rational weights
            exact_weights = normalize_weights([Fraction(w) for w in raw])
            exact = borda_scores(profiles, exact_weights, k)
            assert sum(exact.scores.values()) == Fraction(k * (k - 1), 2)
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_criterion_2_penalty():
    with criterion(2, "token penalty"):
        assert compute_adjusted(10.0, 150, 100, 0.5) == 7.5
        for tokens in range(1, 101):
            assert compute_adjusted(8.0, tokens, 100, 0.9) == 8.0
        token_grid = [10 + 5 * i for i in range(100)]
        lambda_grid = [i / 99 for i in range(100)]
        for lam in lambda_grid:
            values = [compute_adjusted(10.0, t, 100, lam) for t in token_grid]
            assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
        for tokens in token_grid:
            values = [compute_adjusted(10.0, tokens, 100, lam) for lam in lambda_grid]
            assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_criterion_3_duplication_probability():
    with criterion(3, "duplication probability"):
        assert duplication_probability(3.0, 3.0, 0.7) == 0.5
        sigma_one = duplication_probability(1.25, 1.0, 0.25)
        assert sigma_one == pytest.approx(0.731059, abs=1e-6)
        record = [FitnessRecord("m", 1.0, 1.25, 10, sigma_one, False)]
        hits = sum(
            bool(sample_duplications(record, rng_for("mc-dup-z1", i))) for i in range(10_000)
        )
        assert 0.72 <= hits / 10_000 <= 0.74
        low = [FitnessRecord("lo", 1.0, 0.0, 10, duplication_probability(-10.0, 0.0, 1.0), False)]
        low_hits = sum(
            bool(sample_duplications(low, rng_for("mc-dup-z-neg10", i))) for i in range(10_000)
        )
        assert low_hits / 10_000 < 0.01


def test_criterion_4_efficiency_bookkeeping(full_corpus):
    with criterion(4, "efficiency bookkeeping"):
        assert len(full_corpus) == 50
        for trace in full_corpus:
            k = trace.config.k
            for record in trace.records:
                recomputed = (
                    sum(e.borda / e.token_count for e in record.fitness if e.token_count > 0) / k
                )
                assert abs(record.efficiency - recomputed) <= 1e-9
                assert trace.efficiency_trajectory[record.generation - 1] == record.efficiency


def test_criterion_5_algorithm_dynamics(full_corpus, static_corpus):
    with criterion(5, "evolutionary loop dynamics"):
        assert len(static_corpus) == 50
        non_decreasing = 0
        for trace in static_corpus:
            best = [max(e.adjusted for e in record.fitness) for record in trace.records]
            if all(b >= a - 1e-12 for a, b in zip(best, best[1:])):
                non_decreasing += 1
        assert non_decreasing == 50
        # population size and lineage closure on the full variant
        for trace in full_corpus:
            known = {s.id for s in trace.seed_population}
            for record in trace.records:
                assert len(record.survivors) == trace.config.k
                assert len(record.fitness) == trace.config.k
                for member in record.new_members:
                    assert member.parent_id in known
                    known.add(member.id)
            assert replay(trace) == []


def test_criterion_6_ablation_contract():
    with criterion(6, "ablation contract"):
        scenarios = make_benchmark_scenarios(2, seed=403)
        base = EvolutionConfig(k=6, generations=5, rng_seed=44)
        results = run_ablation_suite(scenarios, base)
        assert all(trace is not None for trace in results.values())
        for scenario in scenarios:
            seeds = {
                variant: [s.text for s in results[(scenario.id, variant)].seed_population]
                for variant in ("full", "no-plasticity", "no-rcv", "no-dup-mat", "no-penalty")
            }
            assert all(texts == seeds["full"] for texts in seeds.values())

            trace = results[(scenario.id, "no-dup-mat")]
            assert all(r.duplication_selected == () for r in trace.records)
            assert all(
                m.origin != "duplication+maturation"
                for r in trace.records
                for m in r.new_members
            )

            trace = results[(scenario.id, "no-penalty")]
            assert all(e.adjusted == e.borda for r in trace.records for e in r.fitness)

            trace = results[(scenario.id, "no-plasticity")]
            assert all(r.plasticity_events == () for r in trace.records)

            trace = results[(scenario.id, "no-rcv")]
            for record in trace.records:
                expected = average_scores(list(record.profiles), len(record.fitness))
                assert record.borda == pytest.approx(expected, abs=1e-12)

        # skewed influence weights: weighted and unweighted scoring disagree
        profiles = [
            RankingProfile("sh1", ("a", "b", "c")),
            RankingProfile("sh2", ("c", "b", "a")),
        ]
        tokens = {"a": 50, "b": 30, "c": 40}
        weighted = borda_scores(profiles, [0.9, 0.1], 3, tokens)
        averaged = consensus_from_scores(average_scores(profiles, 3), tokens)
        assert weighted.consensus_id == "a"
        assert averaged == "b"
        assert weighted.consensus_id != averaged


def test_criterion_7_statistics():
    with criterion(7, "statistics"):
        result = wilcoxon_signed_rank([1, 2, 3, 4, 5])
        assert result.p_value == 0.0625
        assert cohens_dz([1, 2, 3]) == 2.0
        assert holm_adjust([0.01, 0.04, 0.03]) == pytest.approx(
            [0.03, 0.06, 0.06], abs=1e-12
        )
        rng = random.Random(514)
        worst = 0.0
        for _ in range(200):
            diffs = [rng.gauss(0.25, 1.0) for _ in range(20)]
            exact = wilcoxon_signed_rank(diffs)
            assert exact.method == "exact"
            _, _, ties = _signed_ranks(diffs)
            approx = _approx_p(exact.w_statistic, exact.n_effective, ties)
            worst = max(worst, abs(exact.p_value - approx))
        assert worst <= 0.01, f"worst |delta p| = {worst:.4f}"
        mean, lo, hi = mean_ci([1, 2, 3])
        assert mean == 2.0
        assert lo == pytest.approx(0.8684, abs=1e-4)
        assert hi == pytest.approx(3.1316, abs=1e-4)


def test_criterion_8_report_fidelity(tmp_path):
    with criterion(8, "report fidelity"):
        summary = tmp_path / "published.csv"
        summary.write_text(
            "system,mean_rank,rank_lo,rank_hi,mean_score,score_lo,score_hi,cost\n"
            "Lark Full,2.55,2.17,2.93,29.4,26.34,32.46,0.016006\n"
            "GPT o3,4.30,3.10,5.50,28.8,26.30,31.30,0.016424\n"
        )
        table = render_overall_table(read_overall_rows_csv(summary))
        assert "2.55 [2.17, 2.93]" in table
        assert "29.4 [26.34, 32.46]" in table
        row = next(line for line in table.splitlines() if line.startswith("Lark Full"))
        normalized = " ".join(row.split())
        assert normalized == "Lark Full 2.55 [2.17, 2.93] 29.4 [26.34, 32.46] 0.016006"


def _tree_bytes(root: Path, patterns: tuple[str, ...]) -> dict[str, bytes]:
    files: dict[str, bytes] = {}
    for pattern in patterns:
        for path in sorted(root.glob(pattern)):
            files[str(path.relative_to(root))] = path.read_bytes()
    return files


def test_criterion_9_end_to_end_determinism(pipeline):
    with criterion(9, "end-to-end determinism"):
        first, second, elapsed = pipeline
        assert elapsed < 600.0, f"pipeline pair took {elapsed:.0f}s"
        patterns = (
            "scenarios/*.yaml",
            "bench/evaluations/*.json",
            "bench/evaluations/*.payloads.jsonl",
            "bench/reports/*.csv",
            "reports/*.txt",
            "reports/*.csv",
        )
        tree_a = _tree_bytes(first, patterns)
        tree_b = _tree_bytes(second, patterns)
        assert tree_a.keys() == tree_b.keys()
        assert len(tree_a) > 70  # 30 scenarios + 60 evaluation files + reports
        for name in tree_a:
            assert tree_a[name] == tree_b[name], f"artifact differs: {name}"
        # traces match canonically (wall-clock durations excluded)
        trace_names = sorted(
            str(p.relative_to(first)) for p in first.glob("bench/runs/*/*.trace.jsonl")
        )
        assert len(trace_names) == 150
        for name in trace_names:
            a = canonical_trace_text(read_trace(first / name).to_lines())
            b = canonical_trace_text(read_trace(second / name).to_lines())
            assert a == b, f"trace differs: {name}"


def test_criterion_10_blinding_audit(pipeline):
    with criterion(10, "blinding audit"):
        first, _, _ = pipeline
        roster_names = [
            "lark-full",
            "lark-no-plasticity",
            "lark-no-rcv",
            "lark-no-dup-mat",
            "lark-no-penalty",
        ]
        payload_files = sorted(first.glob("bench/evaluations/*.payloads.jsonl"))
        assert len(payload_files) == 30
        scanned = 0
        for path in payload_files:
            for line in path.read_text().splitlines():
                entry = json.loads(line)
                scanned += 1
                for name in roster_names:
                    assert name not in entry["payload"], f"{path.name}: leaked {name}"
        assert scanned == 30 * 2 * 5  # scenarios x judges x systems
