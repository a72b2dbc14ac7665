import math
import pickle

import numpy as np
import pytest
from scipy import special, stats

from detection.errors import IndexRangeError, InvalidInputError, SeriesTooShortError
from detection.lrt import (
    ElrtCache,
    ElrtTable,
    binary_segment,
    best_split,
    build_elrt_table,
    detect_lrt,
    lrt,
    lrt_matrix,
    lrt_star,
    run_tests,
    segment_statistics,
)
from detection.series import ObservationSeries


def expected_lrt(m, m1):
    """Exact null mean of lrt for exponential data."""
    def g(n):
        return special.digamma(n) - math.log(n)
    m2 = m - m1
    return 2.0 * (m * g(m) - m1 * g(m1) - m2 * g(m2))


def flat_table(length, min_seg=2):
    return ElrtTable(series_length=length, min_seg=min_seg,
                     expected_values=np.ones(length - 2 * min_seg + 1), runs_used=1, seed=(0,))


STEP = ObservationSeries([1.0] * 50 + [5.0] * 50)


class TestStatistic:
    def test_hand_computed(self):
        series = ObservationSeries([1.0, 1.0, 3.0, 3.0])
        assert lrt(series, 2) == pytest.approx(8 * math.log(2) - 4 * math.log(3))

    def test_equal_halves_give_zero(self):
        assert lrt(ObservationSeries([1.0, 3.0, 2.0, 2.0]), 2) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative(self, rng):
        for _ in range(20):
            series = ObservationSeries(rng.exponential(1.0, 15))
            assert all(lrt(series, m1) >= 0 for m1 in range(2, 14))

    def test_scale_invariant(self, rng):
        values = rng.exponential(2.0, 30)
        for m1 in (2, 11, 28):
            assert lrt(ObservationSeries(7.5 * values), m1) == pytest.approx(
                lrt(ObservationSeries(values), m1), rel=1e-9, abs=1e-12)

    def test_matrix_matches_scalar(self, rng):
        values = rng.exponential(1.0, 12)
        splits, stat = lrt_matrix(values, min_seg=1)
        assert list(splits) == list(range(1, 12))
        series = ObservationSeries(values)
        np.testing.assert_allclose(stat, [lrt(series, s, min_seg=1) for s in splits], rtol=1e-9, atol=1e-12)

    def test_matrix_rows_are_independent(self, rng):
        block = rng.exponential(1.0, size=(3, 10))
        _, stat = lrt_matrix(block)
        for row in range(3):
            np.testing.assert_allclose(stat[row], lrt_matrix(block[row])[1])

    def test_split_range(self):
        with pytest.raises(IndexRangeError):
            lrt(ObservationSeries([1.0, 2.0, 3.0, 4.0]), 1)
        with pytest.raises(SeriesTooShortError):
            lrt_matrix(np.ones(3), min_seg=2)


class TestElrtTable:
    def test_matches_digamma_mean(self):
        table = build_elrt_table(20, runs=20000, rng_seed=7)
        exact = np.array([expected_lrt(20, m1) for m1 in table.splits])
        np.testing.assert_allclose(table.expected_values, exact, rtol=0.05)

    def test_edges_exceed_center(self):
        table = build_elrt_table(100, runs=20000, rng_seed=3)
        assert table.expected(2) > table.expected(50) + 0.01
        assert table.expected(98) > table.expected(50) + 0.01
        assert expected_lrt(100, 2) > expected_lrt(100, 50)

    def test_bathtub_is_symmetric(self):
        table = build_elrt_table(50, runs=20000, rng_seed=11)
        assert table.expected(2) > table.expected(25)
        assert 0.8 <= table.expected(2) / table.expected(48) <= 1.25

    def test_same_seed_same_table(self):
        a = build_elrt_table(30, runs=2500, rng_seed=(4, 30))
        b = build_elrt_table(30, runs=2500, rng_seed=(4, 30))
        np.testing.assert_array_equal(a.expected_values, b.expected_values)
        assert a.seed == (4, 30)

    def test_simulation_scale_is_irrelevant(self):
        a = build_elrt_table(16, runs=4000, rng_seed=1)
        b = build_elrt_table(16, runs=4000, rng_seed=1, mean=9.0)
        np.testing.assert_allclose(a.expected_values, b.expected_values, rtol=1e-9)

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            build_elrt_table(10, runs=0)
        with pytest.raises(InvalidInputError):
            build_elrt_table(3, min_seg=2)
        with pytest.raises(InvalidInputError):
            ElrtTable(series_length=10, min_seg=2, expected_values=np.ones(3), runs_used=1, seed=(0,))
        with pytest.raises(IndexRangeError):
            flat_table(10).expected(9)


class TestElrtCache:
    def test_builds_once_per_length(self):
        cache = ElrtCache(runs=100, min_seg=2, master_seed=5)
        first = cache.table_for(12)
        assert cache(12) is first
        assert len(cache) == 1
        np.testing.assert_array_equal(
            first.expected_values, build_elrt_table(12, 100, 2, (5, 12)).expected_values)

    def test_pickles(self):
        cache = ElrtCache(runs=50, master_seed=2)
        cache(8)
        clone = pickle.loads(pickle.dumps(cache))
        assert len(clone) == 1
        clone(9)
        assert len(clone) == 2


class TestBestSplit:
    @pytest.mark.parametrize("m", [4, 7, 12])
    def test_matches_exhaustive_search(self, rng, m):
        table = build_elrt_table(m, runs=500, rng_seed=m)
        for _ in range(5):
            series = ObservationSeries(rng.exponential(1.0, m))
            stars = {m1: lrt_star(series, m1, table) for m1 in range(2, m - 1)}
            best = max(stars.values())
            location, value = best_split(series, table)
            assert location == min(m1 for m1, v in stars.items() if v == pytest.approx(best, rel=1e-12))
            assert value == pytest.approx(best, rel=1e-9)

    def test_table_length_checked(self):
        with pytest.raises(InvalidInputError):
            best_split(ObservationSeries([1.0, 2.0, 3.0, 4.0, 5.0]), flat_table(6))

    def test_step_is_found(self):
        assert best_split(STEP, flat_table(100))[0] == 50


class TestSegmentation:
    def test_discovery_order(self, rng):
        values = rng.exponential(1.0, 60)
        tests = run_tests(values, flat_table, max_tests=7, min_seg=2, accept=lambda _: True)
        assert [t.index for t in tests] == list(range(1, len(tests) + 1))
        assert (tests[0].start, tests[0].length) == (0, 60)
        parents = []
        for t in tests[1:]:
            earlier = [p for p in tests if p.index < t.index]
            left = [p for p in earlier if (p.start, p.location - p.start) == (t.start, t.length)]
            right = [p for p in earlier if t.start == p.location and t.start + t.length == p.start + p.length]
            assert len(left) + len(right) == 1
            parents.append((left or right)[0].index * 2 + (1 if right else 0))
            assert t.start < t.location < t.start + t.length
        # children come out of the queue parent by parent, left before right
        assert parents == sorted(parents)

    def test_rejected_branch_frees_its_numbers(self):
        values = np.array([1.0] * 30 + [50.0] * 30)
        tests = run_tests(values, flat_table, max_tests=7, min_seg=2, accept=lambda t: t.index != 2)
        assert tests[0].location == 30
        assert (tests[1].start, tests[1].length) == (0, 30)
        assert (tests[2].start, tests[2].length) == (30, 30)
        assert len(tests) >= 4
        assert all(t.start >= 30 for t in tests[2:])
        assert [t.index for t in tests] == list(range(1, len(tests) + 1))

    def test_short_series_runs_no_test(self):
        assert run_tests(np.ones(3), flat_table, max_tests=7, min_seg=2, accept=lambda _: True) == []

    def test_binary_segment_step(self, profile_factory):
        result = binary_segment(STEP, flat_table, profile_factory([1.0, 1.0, 1.0]))
        assert result.change_points == [50]
        assert [lvl.level for lvl in result.levels] == [1, 2, 3]
        assert result.levels[0].raw_lrt == pytest.approx(
            2 * (100 * math.log(3.0) - 50 * math.log(5.0)))

    def test_detection_order_follows_tests(self, profile_factory):
        series = ObservationSeries([1.0] * 40 + [3.0] * 40 + [30.0] * 40)
        result = binary_segment(series, flat_table, profile_factory([1.0, 1.0, 1.0]))
        assert result.change_points == [40, 80]
        assert result.detection_order == [80, 40]

    def test_too_many_tests(self, profile_factory):
        with pytest.raises(InvalidInputError):
            binary_segment(STEP, flat_table, profile_factory([1.0]), max_tests=2)

    def test_record_mode(self, rng):
        stats_by_test = segment_statistics(ObservationSeries(rng.exponential(1.0, 80)), flat_table)
        assert 1 in stats_by_test
        assert set(stats_by_test) <= set(range(1, 8))
        assert all(v >= 0 for v in stats_by_test.values())

    def test_detect_uses_given_cache(self, profile_factory):
        cache = ElrtCache(runs=200, min_seg=2, master_seed=1)
        result = detect_lrt(STEP, profile_factory([5.0, 5.0, 5.0]), cache=cache)
        assert result.change_points == [50]
        assert len(cache) == 2


@pytest.mark.slow
def test_center_split_is_chi_square_one():
    rng = np.random.default_rng(99)
    _, stat = lrt_matrix(rng.exponential(1.0, size=(5000, 200)), min_seg=100)
    center = stat[:, 0]
    assert 0.9 <= center.mean() <= 1.1
    assert 3.5 <= np.percentile(center, 95) <= 4.2
    rate = float(np.mean(center > stats.chi2.ppf(0.95, df=1)))
    assert 0.035 <= rate <= 0.065
