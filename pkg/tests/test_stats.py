import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lark_engine.errors import ValidationError
from lark_engine.stats import (
    PairedSample,
    average_ranks,
    cohens_dz,
    holm_adjust,
    mean_ci,
    paired_deltas,
    paired_tests,
    per_round_ranks,
    wilcoxon_signed_rank,
)


def enumerated_p(differences):
    """Independent oracle: literally enumerate all 2^n sign assignments."""
    d = [x for x in differences if x != 0]
    n = len(d)
    indexed = sorted(range(n), key=lambda i: abs(d[i]))
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and abs(d[indexed[j + 1]]) == abs(d[indexed[i]]):
            j += 1
        for idx in indexed[i : j + 1]:
            ranks[idx] = (i + 1 + j + 1) / 2
        i = j + 1
    w_plus = sum(r for r, x in zip(ranks, d) if x > 0)
    w_minus = sum(r for r, x in zip(ranks, d) if x < 0)
    w_obs = min(w_plus, w_minus)
    count = 0
    for signs in itertools.product((1, -1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s > 0)
        if w <= w_obs + 1e-9:
            count += 1
    return min(1.0, 2 * count / 2**n)


class TestWilcoxon:
    def test_all_positive_five(self):
        result = wilcoxon_signed_rank([1, 2, 3, 4, 5])
        assert result.w_statistic == 0.0
        assert result.p_value == 0.0625
        assert result.method == "exact"
        assert result.n_effective == 5

    def test_perfect_symmetry_pair(self):
        result = wilcoxon_signed_rank([1, -1])
        assert result.w_statistic == 1.5
        assert result.p_value == 1.0

    def test_six_tied_magnitudes(self):
        result = wilcoxon_signed_rank([5, 5, 5, 5, 5, 5])
        assert result.p_value == 0.03125

    def test_zeros_dropped(self):
        result = wilcoxon_signed_rank([0.0, 0.0, 1.0])
        assert result.n_effective == 1
        assert result.p_value == 1.0

    def test_all_zero_degenerate(self):
        result = wilcoxon_signed_rank([0.0, 0.0])
        assert result.degenerate
        assert result.p_value == 1.0
        assert result.n_effective == 0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            wilcoxon_signed_rank([])

    def test_matches_literal_enumeration_oracle(self):
        rng = random.Random(99)
        for _ in range(40):
            n = rng.randint(1, 9)
            d = [round(rng.uniform(-3, 3), 1) for _ in range(n)]
            if all(x == 0 for x in d):
                continue
            assert wilcoxon_signed_rank(d).p_value == pytest.approx(
                enumerated_p(d), abs=1e-12
            )

    def test_method_switches_beyond_twenty(self):
        d20 = list(range(1, 21))
        d21 = list(range(1, 22))
        assert wilcoxon_signed_rank(d20).method == "exact"
        assert wilcoxon_signed_rank(d21).method == "normal-approximation"

    def test_exact_and_approximation_agree_at_boundary(self):
        from lark_engine.stats import _approx_p, _signed_ranks

        rng = random.Random(7)
        worst = 0.0
        for _ in range(50):
            d = [rng.gauss(0.2, 1.0) for _ in range(20)]
            exact = wilcoxon_signed_rank(d)
            positive, negative, ties = _signed_ranks(d)
            approx = _approx_p(exact.w_statistic, exact.n_effective, ties)
            worst = max(worst, abs(exact.p_value - approx))
        assert worst <= 0.01

    @given(st.lists(st.floats(-20, 20).filter(lambda x: x != 0), min_size=1, max_size=15))
    def test_rank_sum_identity(self, d):
        from lark_engine.stats import _signed_ranks

        positive, negative, _ = _signed_ranks(d)
        n = len(d)
        assert (sum(positive) + sum(negative)) / 2 == n * (n + 1) / 2


class TestCohensDz:
    def test_hand_worked(self):
        assert cohens_dz([1, 2, 3]) == pytest.approx(2.0)

    def test_sign_antisymmetry(self):
        assert cohens_dz([-1, -2, -3]) == pytest.approx(-2.0)

    def test_constant_vector_undefined(self):
        assert cohens_dz([4.0, 4.0, 4.0]) is None

    def test_small_sample_rejected(self):
        with pytest.raises(ValidationError):
            cohens_dz([1.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=20))
    def test_sign_matches_mean(self, d):
        dz = cohens_dz(d)
        if dz is None:
            return
        mean = sum(d) / len(d)
        if abs(mean) > 1e-9:
            assert (dz > 0) == (mean > 0)


class TestHolm:
    def test_documented_example(self):
        assert holm_adjust([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])

    def test_single_p_unchanged(self):
        assert holm_adjust([0.2]) == [0.2]

    def test_monotone_running_max_and_cap(self):
        assert holm_adjust([0.5, 0.9]) == [1.0, 1.0]

    def test_adjusted_at_least_raw(self):
        raw = [0.001, 0.2, 0.04, 0.9]
        adjusted = holm_adjust(raw)
        assert all(a >= r for a, r in zip(adjusted, raw))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            holm_adjust([1.2])

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.randoms())
    def test_permutation_invariance(self, ps, rng):
        base = holm_adjust(ps)
        order = list(range(len(ps)))
        rng.shuffle(order)
        shuffled = holm_adjust([ps[i] for i in order])
        assert shuffled == pytest.approx([base[i] for i in order])


class TestMeanCI:
    def test_hand_worked(self):
        mean, lo, hi = mean_ci([1, 2, 3])
        assert mean == pytest.approx(2.0)
        assert lo == pytest.approx(0.8684, abs=1e-4)
        assert hi == pytest.approx(3.1316, abs=1e-4)

    def test_constant_vector_zero_width(self):
        mean, lo, hi = mean_ci([7.0, 7.0, 7.0])
        assert mean == lo == hi == 7.0

    def test_scaling_linearity(self):
        mean, lo, hi = mean_ci([1, 2, 3])
        mean10, lo10, hi10 = mean_ci([10, 20, 30])
        assert mean10 == pytest.approx(10 * mean)
        assert hi10 - lo10 == pytest.approx(10 * (hi - lo))

    def test_undefined_below_two(self):
        mean, lo, hi = mean_ci([5.0])
        assert mean == 5.0 and lo is None and hi is None


class TestRanks:
    def test_strict_ordering(self):
        assert average_ranks([30, 20, 10]) == [1.0, 2.0, 3.0]

    def test_tied_scores_average(self):
        assert average_ranks([30, 30, 10]) == [1.5, 1.5, 3.0]

    def test_constant_shift_invariance(self):
        values = [12.0, 9.0, 30.0, 9.0]
        shifted = [v + 100 for v in values]
        assert average_ranks(values) == average_ranks(shifted)

    def test_matrix_with_missing_cells(self):
        matrix = {"a": [30.0, None], "b": [20.0, 12.0], "c": [10.0, 20.0]}
        ranks = per_round_ranks(matrix)
        assert ranks["a"] == [1.0, None]
        assert ranks["b"] == [2.0, 2.0]
        assert ranks["c"] == [3.0, 1.0]

    def test_ragged_matrix_rejected(self):
        with pytest.raises(ValidationError):
            per_round_ranks({"a": [1.0], "b": [1.0, 2.0]})


class TestPairedPipeline:
    def test_paired_sample_validation(self):
        with pytest.raises(ValidationError):
            PairedSample("full", "x", (1.0,), (1.0, 2.0))
        sample = PairedSample("full", "x", (3.0, 4.0), (1.0, 1.0))
        assert sample.differences == [2.0, 3.0]

    def test_paired_tests_family(self):
        matrix = {
            "full": [30.0, 31.0, 29.0, 32.0, 30.5],
            "weak": [25.5, 26.0, 24.0, 27.5, 25.0],
            "close": [30.0, 30.5, 29.5, 31.5, 30.0],
        }
        results = {r.comparator: r for r in paired_tests(matrix, "full")}
        assert set(results) == {"weak", "close"}
        weak = results["weak"]
        assert weak.delta_mean == pytest.approx(4.9)
        assert weak.p_holm >= weak.p_raw
        assert weak.d_z is not None and weak.d_z > 0

    def test_missing_cells_excluded_pairwise(self):
        matrix = {
            "full": [30.0, None, 29.0],
            "other": [20.0, 25.0, 27.0],
        }
        result = paired_tests(matrix, "full")[0]
        assert result.n_rounds == 2

    def test_unknown_baseline_rejected(self):
        with pytest.raises(ValidationError):
            paired_tests({"a": [1.0]}, "nope")

    def test_paired_deltas_hand_worked(self):
        matrix = {
            "full": [30.0, 32.0],
            "variant": [28.0, 29.0],
        }
        ranks = per_round_ranks(matrix)
        (score_mean, _, _), (rank_mean, _, _) = paired_deltas(matrix, ranks, "full", "variant")
        assert score_mean == pytest.approx(2.5)
        assert rank_mean == pytest.approx(1.0)
