import numpy as np
import pytest

from detection.errors import DomainError, IndexRangeError, InvalidInputError
from detection.series import (
    DetectionResult,
    ObservationSeries,
    SegmentStats,
    segment_stats,
    segmentation_from_changepoints,
)


class TestObservationSeries:
    def test_values_are_read_only(self):
        series = ObservationSeries([1.0, 2.0])
        with pytest.raises(ValueError):
            series.values[0] = 5.0

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(InvalidInputError):
            ObservationSeries([])
        with pytest.raises(InvalidInputError):
            ObservationSeries([1.0, np.nan])
        with pytest.raises(InvalidInputError):
            ObservationSeries([1.0, np.inf])

    def test_require_positive_names_index(self):
        with pytest.raises(DomainError, match="index 2"):
            ObservationSeries([1.0, 0.0, 2.0]).require_positive()


class TestSegmentStats:
    def test_singleton(self):
        assert segment_stats(ObservationSeries([3.0]), 1, 1) == SegmentStats(1, 3.0, 0.0)

    def test_hand_computed(self):
        stats = segment_stats(ObservationSeries([1.0, 2.0, 3.0]), 1, 3)
        assert stats.count == 3
        assert stats.mean == pytest.approx(2.0)
        assert stats.stddev == pytest.approx(1.0)

    def test_constant_slice_has_exact_zero_sd(self):
        assert segment_stats(ObservationSeries([5.0] * 4), 1, 4) == SegmentStats(4, 5.0, 0.0)

    def test_constant_slice_of_awkward_value(self):
        stats = segment_stats(ObservationSeries([0.1] * 7), 1, 7)
        assert stats.stddev == 0.0
        assert stats.mean == 0.1

    @pytest.mark.parametrize("bounds", [(0, 2), (2, 1), (1, 4)])
    def test_out_of_range(self, bounds):
        with pytest.raises(IndexRangeError):
            segment_stats(ObservationSeries([1.0, 2.0, 3.0]), *bounds)

    def test_matches_brute_force(self, rng):
        values = rng.exponential(2.0, 30)
        series = ObservationSeries(values)
        stats = segment_stats(series, 4, 17)
        chunk = values[3:17]
        assert stats.count == 14
        assert stats.mean == pytest.approx(sum(chunk) / 14, rel=1e-12)
        brute_var = sum((v - chunk.mean()) ** 2 for v in chunk) / 13
        assert stats.variance == pytest.approx(brute_var, rel=1e-9)

    def test_merge_of_partition_equals_whole(self, rng):
        values = rng.normal(3.0, 2.0, 50)
        series = ObservationSeries(values)
        pooled = None
        for start, end in segmentation_from_changepoints(50, [1, 9, 10, 33]):
            part = segment_stats(series, start, end)
            pooled = part if pooled is None else pooled.merge(part)
        whole = segment_stats(series, 1, 50)
        assert pooled.count == whole.count
        assert pooled.mean == pytest.approx(whole.mean, rel=1e-9)
        assert pooled.stddev == pytest.approx(whole.stddev, rel=1e-9)


class TestSegmentation:
    def test_single_change(self):
        assert segmentation_from_changepoints(200, [100]) == [(1, 100), (101, 200)]

    def test_no_change(self):
        assert segmentation_from_changepoints(10, []) == [(1, 10)]

    def test_four_equal_changes(self):
        ranges = segmentation_from_changepoints(200, [40, 80, 120, 160])
        assert len(ranges) == 5
        assert all(end - start + 1 == 40 for start, end in ranges)

    def test_round_trip(self):
        cps = [3, 4, 17, 98]
        ranges = segmentation_from_changepoints(100, cps)
        assert [end for _, end in ranges[:-1]] == cps
        assert ranges[0][0] == 1 and ranges[-1][1] == 100

    @pytest.mark.parametrize("cps", [[5, 5], [7, 3], [0], [10]])
    def test_invalid_change_points(self, cps):
        with pytest.raises(InvalidInputError):
            segmentation_from_changepoints(10, cps)


class TestDetectionResult:
    def test_rejects_too_many_change_points(self):
        with pytest.raises(ValueError):
            DetectionResult(method="lrt", series_length=10, max_changes=1, change_points=[2, 5])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            DetectionResult(method="cluster", series_length=10, max_changes=3, change_points=[5, 2])

    def test_states_convention(self):
        result = DetectionResult(method="cluster", series_length=10, max_changes=3, change_points=[4])
        assert "last" in result.convention

    def test_detection_order_must_match_change_points(self):
        result = DetectionResult(method="lrt", series_length=120, max_changes=3,
                                 change_points=[40, 80], detection_order=[80, 40])
        assert result.detection_order == [80, 40]
        with pytest.raises(ValueError):
            DetectionResult(method="lrt", series_length=120, max_changes=3,
                            change_points=[40, 80], detection_order=[80, 41])
