from __future__ import annotations

import math
import random

import pytest

from licensekit.stats import (
    SampleGroup,
    StatsError,
    bonferroni,
    cliffs_delta,
    cohens_d,
    sk_esd_rank,
    wilcoxon_signed_rank,
)

from .oracles import (
    cliffs_delta_oracle,
    cohens_d_oracle,
    sk_esd_oracle,
    wilcoxon_exact_oracle,
)


class TestCohensD:
    def test_identical_samples_zero(self):
        assert cohens_d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_hand_computed_value(self):
        # a={2,4}, b={0,2}: both sds are sqrt(2), pooled sd sqrt(2),
        # d = (3 - 1)/sqrt(2) = sqrt(2).
        assert cohens_d([2.0, 4.0], [0.0, 2.0]) == pytest.approx(1.41421, abs=1e-5)
        assert cohens_d([2.0, 4.0], [0.0, 2.0]) == pytest.approx(math.sqrt(2), abs=1e-9)

    def test_scale_invariance(self):
        a = [3.0, 5.5, 4.2, 6.1]
        b = [2.0, 2.5, 3.3, 1.9]
        base = cohens_d(a, b)
        scaled = cohens_d([3 * v for v in a], [3 * v for v in b])
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_antisymmetry(self):
        a = [1.0, 4.0, 2.0]
        b = [0.5, 1.5, 0.7]
        assert cohens_d(a, b) == pytest.approx(-cohens_d(b, a))

    def test_degenerate_spread_errors(self):
        with pytest.raises(StatsError, match="zero pooled variance"):
            cohens_d([2.0, 2.0], [5.0, 5.0])

    def test_too_few_values_errors(self):
        with pytest.raises(StatsError):
            cohens_d([1.0], [2.0, 3.0])

    def test_matches_oracle_random(self):
        rng = random.Random(17)
        for _ in range(200):
            a = [rng.uniform(-5, 5) for _ in range(rng.randint(2, 9))]
            b = [rng.uniform(-5, 5) for _ in range(rng.randint(2, 9))]
            assert cohens_d(a, b) == pytest.approx(cohens_d_oracle(a, b), abs=1e-12)


class TestSkEsd:
    def test_single_group_rank_one(self):
        table = sk_esd_rank([SampleGroup("only", (1.0, 2.0))])
        assert [(e.group_id, e.rank) for e in table.entries] == [("only", 1)]

    def test_top_two_merge_third_separates(self):
        # Means 60 / 59.9 / 20. The top pair differs by 0.1 with sd ~0.7,
        # |d| ~ 0.14 < 0.2 -> merged; the third sits far below -> own rank.
        groups = [
            SampleGroup("a", (59.5, 60.5)),
            SampleGroup("b", (59.4, 60.4)),
            SampleGroup("c", (19.5, 20.5)),
        ]
        table = sk_esd_rank(groups, direction="higher", d_threshold=0.2)
        ranks = {e.group_id: e.rank for e in table.entries}
        assert ranks == {"a": 1, "b": 1, "c": 2}
        oracle = sk_esd_oracle([(g.group_id, list(g.values)) for g in groups], "higher", 0.2)
        assert ranks == oracle

    def test_ranks_contiguous_and_order_consistent(self):
        rng = random.Random(2)
        for trial in range(50):
            groups = [
                SampleGroup(f"g{i}", tuple(rng.uniform(0, 100) for _ in range(rng.randint(2, 8))))
                for i in range(rng.randint(1, 5))
            ]
            table = sk_esd_rank(groups, direction="higher")
            ranks = [e.rank for e in table.entries]
            assert ranks == sorted(ranks)
            assert sorted(set(ranks)) == list(range(1, max(ranks) + 1))
            means = [e.mean for e in table.entries]
            assert means == sorted(means, reverse=True)

    def test_permutation_invariance(self):
        rng = random.Random(3)
        groups = [
            SampleGroup(f"g{i}", tuple(rng.uniform(0, 10) for _ in range(5))) for i in range(5)
        ]
        base = {e.group_id: e.rank for e in sk_esd_rank(groups).entries}
        for _ in range(5):
            shuffled = groups[:]
            rng.shuffle(shuffled)
            assert {e.group_id: e.rank for e in sk_esd_rank(shuffled).entries} == base

    def test_accepted_splits_respect_threshold_post_hoc(self):
        # Reconstruct the split tree from the produced partition: every
        # boundary between consecutive ranks at every recursion level came
        # from an accepted split, whose two concatenated sides must differ
        # by at least the threshold.
        rng = random.Random(4)
        threshold = 0.5
        for trial in range(30):
            groups = [
                SampleGroup(f"g{i}", tuple(rng.uniform(0, 50) for _ in range(4)))
                for i in range(4)
            ]
            table = sk_esd_rank(groups, d_threshold=threshold)
            values_of = {g.group_id: list(g.values) for g in groups}
            clusters: dict[int, list[str]] = {}
            for e in table.entries:
                clusters.setdefault(e.rank, []).append(e.group_id)

            def explainable(segment_ranks) -> bool:
                if len(segment_ranks) <= 1:
                    return True
                for cut in range(1, len(segment_ranks)):
                    left = [v for r in segment_ranks[:cut] for g in clusters[r] for v in values_of[g]]
                    right = [v for r in segment_ranks[cut:] for g in clusters[r] for v in values_of[g]]
                    if (
                        abs(cohens_d(left, right)) >= threshold
                        and explainable(segment_ranks[:cut])
                        and explainable(segment_ranks[cut:])
                    ):
                        return True
                return False

            assert explainable(sorted(clusters)), f"no accepted split tree explains trial {trial}"

    def test_lower_direction_puts_smallest_first(self):
        groups = [SampleGroup("slow", (30.0, 31.0)), SampleGroup("fast", (1.0, 1.2))]
        table = sk_esd_rank(groups, direction="lower")
        assert table.entries[0].group_id == "fast"
        assert table.rank_of("fast") < table.rank_of("slow")

    def test_matches_exhaustive_oracle_random(self):
        rng = random.Random(99)
        for trial in range(60):
            groups = [
                SampleGroup(
                    f"g{i}",
                    tuple(round(rng.uniform(0, 100), 3) for _ in range(rng.randint(2, 8))),
                )
                for i in range(rng.randint(1, 5))
            ]
            direction = rng.choice(["higher", "lower"])
            threshold = rng.choice([0.2, 0.5, 1.0])
            table = sk_esd_rank(groups, direction=direction, d_threshold=threshold)
            got = {e.group_id: e.rank for e in table.entries}
            want = sk_esd_oracle(
                [(g.group_id, list(g.values)) for g in groups], direction, threshold
            )
            assert got == want

    def test_group_with_single_value_errors(self):
        with pytest.raises(StatsError, match="at least 2"):
            sk_esd_rank([SampleGroup("a", (1.0,)), SampleGroup("b", (1.0, 2.0))])


class TestWilcoxon:
    def test_identical_samples_degenerate(self):
        with pytest.raises(StatsError, match="all paired differences are zero"):
            wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])

    def test_constant_shift_is_minimum_p(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        y = [v - 10 for v in x]
        result = wilcoxon_signed_rank(x, y, mode="exact")
        assert result.w == 0
        assert result.p_value == pytest.approx(2 / 2**6)

    def test_zero_differences_dropped_and_reported(self):
        x = [1.0, 2.0, 3.0, 4.0]
        y = [1.0, 0.0, 3.0, 1.0]
        result = wilcoxon_signed_rank(x, y, mode="exact")
        assert result.n_zeros_dropped == 2
        assert result.n_used == 2

    def test_two_sided_symmetry(self):
        rng = random.Random(6)
        for _ in range(30):
            n = rng.randint(2, 10)
            x = [rng.uniform(0, 10) for _ in range(n)]
            y = [rng.uniform(0, 10) for _ in range(n)]
            if all(a == b for a, b in zip(x, y)):
                continue
            fwd = wilcoxon_signed_rank(x, y, mode="exact")
            rev = wilcoxon_signed_rank(y, x, mode="exact")
            assert fwd.p_value == pytest.approx(rev.p_value)
            assert fwd.w == rev.w

    def test_exact_matches_enumeration_oracle(self):
        rng = random.Random(7)
        for _ in range(100):
            n = rng.randint(1, 10)
            x = [round(rng.uniform(0, 5), 2) for _ in range(n)]
            y = [round(rng.uniform(0, 5), 2) for _ in range(n)]
            if all(a == b for a, b in zip(x, y)):
                continue
            got = wilcoxon_signed_rank(x, y, mode="exact")
            w_want, p_want = wilcoxon_exact_oracle(x, y)
            assert got.w == pytest.approx(w_want)
            assert got.p_value == pytest.approx(p_want, abs=1e-12)

    def test_exact_close_to_approx_at_boundary_n(self):
        rng = random.Random(8)
        for trial in range(100):
            x = [rng.gauss(0, 1) for _ in range(12)]
            y = [rng.gauss(0.4, 1) for _ in range(12)]
            exact = wilcoxon_signed_rank(x, y, mode="exact")
            approx = wilcoxon_signed_rank(x, y, mode="approx")
            assert abs(exact.p_value - approx.p_value) < 0.05

    def test_auto_mode_picks_exact_for_small_n(self):
        x = [float(i) for i in range(1, 11)]
        y = [v + ((-1) ** i) * 0.5 for i, v in enumerate(x)]
        assert wilcoxon_signed_rank(x, y).mode_used == "exact"
        x_big = [float(i) for i in range(1, 21)]
        y_big = [v + ((-1) ** i) * 0.5 for i, v in enumerate(x_big)]
        assert wilcoxon_signed_rank(x_big, y_big).mode_used == "approx"

    def test_p_in_unit_interval(self):
        rng = random.Random(9)
        for _ in range(50):
            n = rng.randint(13, 30)
            x = [rng.uniform(0, 1) for _ in range(n)]
            y = [rng.uniform(0, 1) for _ in range(n)]
            if all(a == b for a, b in zip(x, y)):
                continue
            p = wilcoxon_signed_rank(x, y).p_value
            assert 0 < p <= 1

    def test_unpaired_lengths_error(self):
        with pytest.raises(StatsError):
            wilcoxon_signed_rank([1.0, 2.0], [1.0])


class TestCliffsDelta:
    def test_same_multiset_zero_small(self):
        result = cliffs_delta([3.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        assert result.delta == 0.0
        assert result.magnitude == "small"
        assert result.is_zero

    def test_complete_dominance(self):
        result = cliffs_delta([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert result.delta == 1.0
        assert result.magnitude == "large"

    def test_swap_negates(self):
        rng = random.Random(10)
        for _ in range(50):
            x = [rng.uniform(0, 10) for _ in range(rng.randint(1, 8))]
            y = [rng.uniform(0, 10) for _ in range(rng.randint(1, 8))]
            assert cliffs_delta(x, y).delta == pytest.approx(-cliffs_delta(y, x).delta)

    def test_shift_invariance(self):
        x = [1.0, 5.0, 2.0]
        y = [0.0, 4.0, 9.0]
        base = cliffs_delta(x, y).delta
        shifted = cliffs_delta([v + 100 for v in x], [v + 100 for v in y]).delta
        assert shifted == base

    def test_magnitude_thresholds(self):
        # Engineered deltas around the 0.33 and 0.66 boundaries (inclusive
        # on the small/medium side per the band definitions).
        assert cliffs_delta([1.0], [0.0] * 34 + [2.0] * 66).magnitude == "small"  # |d| = 0.32
        assert cliffs_delta([1.0], [0.0] * 133 + [2.0] * 67).magnitude == "small"  # |d| = 0.33
        assert cliffs_delta([1.0], [0.0] * 33 + [2.0] * 67).magnitude == "medium"  # |d| = 0.34
        assert cliffs_delta([1.0], [0.0] * 166 + [2.0] * 34).magnitude == "medium"  # |d| = 0.66
        assert cliffs_delta([1.0], [0.0] * 84 + [2.0] * 16).magnitude == "large"  # |d| = 0.68
        assert cliffs_delta([5.0, 5.0], [0.0, 9.0]).delta == 0.0

    def test_matches_pair_count_oracle(self):
        rng = random.Random(11)
        for _ in range(200):
            x = [round(rng.uniform(0, 4)) for _ in range(rng.randint(1, 9))]
            y = [round(rng.uniform(0, 4)) for _ in range(rng.randint(1, 9))]
            assert cliffs_delta(x, y).delta == pytest.approx(cliffs_delta_oracle(x, y))

    def test_bounds(self):
        rng = random.Random(12)
        for _ in range(50):
            x = [rng.uniform(-3, 3) for _ in range(rng.randint(1, 6))]
            y = [rng.uniform(-3, 3) for _ in range(rng.randint(1, 6))]
            assert -1.0 <= cliffs_delta(x, y).delta <= 1.0


class TestBonferroni:
    def test_single_test_keeps_alpha(self):
        (entry,) = bonferroni([0.03], alpha=0.05)
        assert entry.alpha_adjusted == 0.05
        assert entry.significant

    def test_p_002_with_family_5_not_significant(self):
        (entry,) = bonferroni([0.02], alpha=0.05, m=5)
        assert entry.alpha_adjusted == pytest.approx(0.01)
        assert not entry.significant

    def test_p_0005_with_family_5_significant(self):
        (entry,) = bonferroni([0.005], alpha=0.05, m=5)
        assert entry.significant

    def test_family_defaults_to_count(self):
        entries = bonferroni([0.5, 0.001], alpha=0.05)
        assert all(e.alpha_adjusted == pytest.approx(0.025) for e in entries)

    def test_out_of_range_p_errors(self):
        with pytest.raises(StatsError):
            bonferroni([1.5], alpha=0.05)

    def test_bad_alpha_errors(self):
        with pytest.raises(StatsError):
            bonferroni([0.5], alpha=0.0)
