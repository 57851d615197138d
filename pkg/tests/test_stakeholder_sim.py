import filecmp

from lark_engine.aggregation import borda_scores
from lark_engine.core import DOMAIN_TAGS, Population, save_scenario
from lark_engine.fitness import compute_adjusted
from lark_engine.stakeholder_sim import (
    FEATURE_VOCABULARY,
    SyntheticUtility,
    derived_utility,
    feature_set,
    make_benchmark_scenarios,
    rank_by_utility,
    utilities_for,
    utility,
)
from lark_engine.util import rng_for

from conftest import strategy, tiny_scenario


class TestUtility:
    def test_empty_text_zero(self):
        u = SyntheticUtility("sh1", {"audit": 2.0})
        assert utility(u, strategy(text="")) == 0.0

    def test_single_feature_hit(self):
        u = SyntheticUtility("sh1", {"audit": 2.0}, length_preference=0.0)
        s = strategy(text="run an audit now")
        assert utility(u, s) == 2.0

    def test_deterministic_without_jitter(self):
        u = SyntheticUtility("sh1", {"pilot": 1.0}, length_preference=-0.1)
        a = strategy("a", text="pilot the pilot")
        b = strategy("b", text="pilot the pilot")
        assert utility(u, a) == utility(u, b)

    def test_length_preference_counts_tokens(self):
        u = SyntheticUtility("sh1", {}, length_preference=-0.5)
        assert utility(u, strategy(text="one two three four")) == -2.0

    def test_feature_detection_strips_punctuation(self):
        assert feature_set("Start with audit, then zoning.") == {"audit", "zoning"}

    def test_jitter_is_seeded_and_bounded(self):
        u = SyntheticUtility("sh1", {}, noise_amplitude=0.5, noise_seed=3)
        s = strategy("a", text="plain text")
        first = utility(u, s)
        assert first == utility(u, s)
        assert abs(first) <= 0.5


class TestRankByUtility:
    def test_sorted_by_descending_utility(self):
        u = SyntheticUtility(
            "sh1", {"audit": 3.0, "pilot": 1.0, "zoning": 2.0}, length_preference=0.0
        )
        pop = Population(
            0,
            (
                strategy("a", text="audit"),
                strategy("b", text="pilot"),
                strategy("c", text="zoning"),
            ),
        )
        assert rank_by_utility(u, pop).ranking == ("a", "c", "b")

    def test_ties_break_by_id(self):
        u = SyntheticUtility("sh1", {})
        pop = Population(
            0, (strategy("c", text="x"), strategy("a", text="y"), strategy("b", text="z"))
        )
        assert rank_by_utility(u, pop).ranking == ("a", "b", "c")

    def test_negating_weights_reverses_distinct_ranking(self):
        weights = {"audit": 3.0, "pilot": 1.0, "zoning": 2.0}
        pop = Population(
            0,
            (
                strategy("a", text="audit"),
                strategy("b", text="pilot"),
                strategy("c", text="zoning"),
            ),
        )
        forward = rank_by_utility(SyntheticUtility("sh1", weights), pop).ranking
        negated = {t: -w for t, w in weights.items()}
        backward = rank_by_utility(SyntheticUtility("sh1", negated), pop).ranking
        assert backward == tuple(reversed(forward))


class TestBenchmarkScenarios:
    def test_thirty_scenarios_five_per_domain(self):
        scenarios = make_benchmark_scenarios(30, seed=5)
        counts = {tag: 0 for tag in DOMAIN_TAGS}
        for s in scenarios:
            counts[s.domain_tag] += 1
        assert all(count == 5 for count in counts.values())

    def test_six_scenarios_one_per_domain(self):
        scenarios = make_benchmark_scenarios(6, seed=5)
        assert sorted(s.domain_tag for s in scenarios) == sorted(DOMAIN_TAGS)

    def test_same_seed_byte_identical_files(self, tmp_path):
        for name in ("first", "second"):
            out = tmp_path / name
            out.mkdir()
            for s in make_benchmark_scenarios(8, seed=42):
                save_scenario(s, out / f"{s.id}.yaml")
        names = sorted(p.name for p in (tmp_path / "first").iterdir())
        match, mismatch, errors = filecmp.cmpfiles(
            tmp_path / "first", tmp_path / "second", names, shallow=False
        )
        assert mismatch == [] and errors == []
        assert len(match) == 8

    def test_stakeholder_count_in_range_and_weights_normalized(self):
        for s in make_benchmark_scenarios(12, seed=9):
            assert 3 <= len(s.stakeholders) <= 7
            assert abs(sum(s.weights) - 1.0) <= 1e-9

    def test_utilities_cover_every_stakeholder(self):
        for s in make_benchmark_scenarios(6, seed=1):
            utilities = utilities_for(s)
            assert set(utilities) == set(s.stakeholder_ids)


class TestDerivedFallback:
    def test_scenario_without_extension_gets_deterministic_utilities(self):
        scenario = tiny_scenario()
        first = utilities_for(scenario)
        second = utilities_for(scenario)
        assert first == second
        assert set(first) == {"sh1", "sh2"}
        assert derived_utility(scenario.id, "sh1").feature_weights

    def test_all_features_in_vocabulary(self):
        u = derived_utility("scn-x", "sh9")
        assert set(u.feature_weights) <= set(FEATURE_VOCABULARY)


class TestInvariants:
    def test_single_stakeholder_consensus_is_max_utility(self):
        rng = rng_for("oracle-alignment", 77)
        for trial in range(50):
            u = SyntheticUtility(
                "sh1",
                {t: rng.uniform(-2, 2) for t in rng.sample(FEATURE_VOCABULARY, 8)},
                length_preference=rng.uniform(-0.05, 0.01),
            )
            members = tuple(
                strategy(
                    f"s{i}",
                    text=" ".join(rng.sample(FEATURE_VOCABULARY, rng.randint(1, 6))),
                )
                for i in range(4)
            )
            pop = Population(0, members)
            profile = rank_by_utility(u, pop)
            result = borda_scores([profile], [1.0], 4, pop.token_counts())
            best = max(members, key=lambda s: (utility(u, s), s.id))
            # consensus under one voter is the top-ranked = max-utility member
            assert result.consensus_id == profile.ranking[0]
            assert utility(u, pop.member(result.consensus_id)) == utility(u, best)

    def test_brevity_stakeholder_aligns_penalty_on_and_off(self):
        u = SyntheticUtility("sh1", {}, length_preference=-1.0)
        pop = Population(
            0,
            (
                strategy("long", text="word " * 60),
                strategy("mid", text="word " * 30),
                strategy("short", text="word " * 10),
            ),
        )
        profile = rank_by_utility(u, pop)
        result = borda_scores([profile], [1.0], 3, pop.token_counts())
        adjusted = {
            sid: compute_adjusted(score, pop.member(sid).token_count, 20, 0.8)
            for sid, score in result.scores.items()
        }
        consensus_off = result.consensus_id
        consensus_on = max(adjusted, key=lambda sid: (adjusted[sid], -pop.member(sid).token_count))
        assert consensus_off == consensus_on == "short"

    def test_opposed_stakeholders_flatten_scores_vs_single(self):
        # Perfectly opposed utilities reverse the ranking, so positional
        # scores equalize: dispersion is strictly below the single-voter
        # case (which is the maximum achievable) on every population.
        rng = rng_for("conflict", 13)
        for trial in range(100):
            tokens = rng.sample(FEATURE_VOCABULARY, 5)
            weights = {t: rng.uniform(0.5, 2.0) * (i + 1) for i, t in enumerate(tokens)}
            members = tuple(
                strategy(f"s{i}", text=tokens[i]) for i in range(5)
            )
            pop = Population(0, members)
            u_for = SyntheticUtility("sh1", weights)
            u_against = SyntheticUtility("sh2", {t: -w for t, w in weights.items()})
            single = borda_scores([rank_by_utility(u_for, pop)], [1.0], 5)
            both = borda_scores(
                [rank_by_utility(u_for, pop), rank_by_utility(u_against, pop)],
                [0.5, 0.5],
                5,
            )
            assert both.cv is not None and single.cv is not None
            assert both.cv < single.cv
