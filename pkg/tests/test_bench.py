import json
import math

import pytest
from pydantic import ValidationError

from detection.calibration import calibrate_cluster, calibrate_lrt
from detection.errors import InvalidInputError
from detection.thresholds import ThresholdProfile
from experiments.bench import (
    ExperimentGrid,
    cell_seed,
    match_estimates,
    run_cell,
    run_grid,
    summarize_cell,
)
from experiments.reports import (
    accuracy_frame,
    accuracy_table,
    bundle_text,
    histogram_frame,
    precision_frame,
    write_report,
)


def small_grid(profile, **overrides):
    options = dict(method="cluster", m=60, changes=[1], deltas=[5.0], reps=4, thresholds=profile, seed=3)
    options.update(overrides)
    return ExperimentGrid(**options)


class TestMatching:
    def test_first_detections_in_order_are_kept(self):
        # 150 was found first, 90 last
        assert match_estimates([150, 40, 90], [50, 100]) == [40, 150]

    def test_full_set_pairs_by_rank(self):
        assert match_estimates([160, 40, 120, 80], [40, 80, 120, 160]) == [40, 80, 120, 160]

    def test_single_estimate_goes_to_nearest(self):
        assert match_estimates([70], [50, 100, 150]) == [70, None, None]
        assert match_estimates([130], [50, 100, 150]) == [None, None, 130]

    def test_tie_goes_to_later_change(self):
        assert match_estimates([75], [50, 100]) == [None, 75]

    def test_order_preserving_assignment(self):
        assert match_estimates([45, 160], [40, 80, 120, 160]) == [45, None, None, 160]
        assert match_estimates([90, 100], [40, 80, 120, 160]) == [None, 90, 100, None]

    def test_empty(self):
        assert match_estimates([], []) == []
        assert match_estimates([], [10, 20]) == [None, None]
        assert match_estimates([12], []) == []

    def test_cell_seed_ignores_method(self):
        a = cell_seed(5, 2, 0.5).generate_state(4)
        b = cell_seed(5, 2, 0.5).generate_state(4)
        assert (a == b).all()
        assert not (a == cell_seed(5, 2, 1.0).generate_state(4)).all()


class TestGrid:
    def test_variant_alias(self, profile_factory):
        assert small_grid(profile_factory([1.0]), variant="agglo").variant == "agglomerative"

    @pytest.mark.parametrize("overrides", [
        dict(variant="ward"),
        dict(changes=[60]),
        dict(deltas=[-1.0]),
        dict(precision_ks=[5, 2]),
        dict(reps=0),
    ])
    def test_invalid(self, profile_factory, overrides):
        with pytest.raises(ValidationError):
            small_grid(profile_factory([1.0]), **overrides)

    def test_scale(self):
        assert ExperimentGrid.reps_for_scale(0.1) == 100
        assert ExperimentGrid.reps_for_scale(1.0) == 1000
        with pytest.raises(InvalidInputError):
            ExperimentGrid.reps_for_scale(0.0)

    def test_cells_order(self, profile_factory):
        grid = small_grid(profile_factory([1.0]), changes=[1, 2], deltas=[0.5, 5.0])
        assert grid.cells() == [(1, 0.5), (1, 5.0), (2, 0.5), (2, 5.0)]


class TestSummarizeCell:
    def test_hand_computed(self, profile_factory):
        grid = small_grid(profile_factory([1.0]))
        cell = summarize_cell(grid, 1, 5.0, [100], [[100], [103], [], [95, 150]])
        est = cell.estimates[0]
        assert (est.detected, est.missed) == (3, 1)
        assert est.mean == pytest.approx(298 / 3)
        assert est.se == pytest.approx(est.sd / math.sqrt(3))
        probs = cell.precision[0].probabilities
        assert probs[0] == 0.25 and probs[2] == 0.25
        assert probs[5] == 0.75 and probs[25] == 0.75
        assert cell.detection_histogram == {0: 1, 1: 2, 2: 1}
        assert cell.detection_frequency == 0.75

    def test_nothing_detected(self, profile_factory):
        cell = summarize_cell(small_grid(profile_factory([1.0])), 2, 1.0, [20, 40], [[], []])
        assert all(e.mean is None and e.missed == 2 for e in cell.estimates)
        assert all(p == 0.0 for curve in cell.precision for p in curve.probabilities.values())

    def test_no_change_cell(self, profile_factory):
        cell = summarize_cell(small_grid(profile_factory([1.0])), 0, 0.0, [], [[], [12], []])
        assert cell.estimates == [] and cell.precision == []
        assert cell.detection_frequency == pytest.approx(1 / 3)

    def test_empty(self, profile_factory):
        with pytest.raises(InvalidInputError):
            summarize_cell(small_grid(profile_factory([1.0])), 1, 1.0, [10], [])


class TestRunGrid:
    def test_cluster_cell(self):
        grid = small_grid(ThresholdProfile.reference_table("cluster"), transform="off")
        cell = run_cell(grid, 1, 5.0, progress=False)
        assert cell.reps == 4 and cell.true_change_points == [30]
        assert sum(cell.detection_histogram.values()) == 4
        assert cell.variant == "agglomerative" and cell.transform == "off"

    def test_lrt_cell(self, profile_factory):
        grid = small_grid(profile_factory([3.0, 3.0, 3.0], method="lrt"), method="lrt", m=40,
                          reps=3, elrt_runs=100)
        cell = run_cell(grid, 1, 5.0, progress=False)
        assert cell.method == "lrt" and cell.variant is None
        assert cell.true_change_points == [20]

    def test_report_is_reproducible(self, profile_factory, tmp_path):
        grid = small_grid(profile_factory([2.0, 2.0]), changes=[1, 2], deltas=[1.0, 4.0])
        first = run_grid(grid, progress=False)
        second = run_grid(grid, progress=False)
        assert bundle_text(first) == bundle_text(second)
        assert len(first.cells) == 4
        assert json.loads(bundle_text(first))["convention"].startswith("last")

        paths = write_report(first, tmp_path / "out")
        assert set(paths) == {"accuracy.md", "accuracy.csv", "precision.md", "precision.csv",
                              "histogram.csv", "bundle.json"}
        assert all(p.exists() for p in paths.values())
        assert (tmp_path / "out" / "bundle.json").read_text() == bundle_text(first)

    def test_frames(self, profile_factory):
        report = run_grid(small_grid(profile_factory([2.0]), changes=[2], deltas=[3.0]), progress=False)
        acc = accuracy_frame(report)
        assert list(acc["j"]) == [1, 2] and list(acc["tau"]) == [20, 40]
        prec = precision_frame(report)
        assert "P(=0)" in prec.columns and "P(<=25)" in prec.columns
        assert len(accuracy_table(report)) == 1
        assert set(histogram_frame(report)["R"]) == {2}


@pytest.mark.slow
class TestDeskScale:
    def test_cluster_false_detection_bound(self):
        profile = calibrate_cluster(200, reps=100, sets=10, rng_seed=1, transform_eta="auto", progress=False)
        grid = ExperimentGrid(method="cluster", changes=[0], deltas=[0.0], reps=300,
                              thresholds=profile, seed=99)
        cell = run_cell(grid, 0, 0.0, progress=False)
        assert cell.detection_frequency <= 0.11 + 3 * math.sqrt(0.11 * 0.89 / 300)

    def test_lrt_false_detection_bound(self):
        profile = calibrate_lrt(200, reps=1000, rng_seed=1, progress=False)
        grid = ExperimentGrid(method="lrt", changes=[0], deltas=[0.0], reps=300,
                              thresholds=profile, seed=99)
        cell = run_cell(grid, 0, 0.0, progress=False)
        assert cell.detection_frequency <= 0.11 + 3 * math.sqrt(0.11 * 0.89 / 300)

    def test_lrt_single_change(self):
        profile = calibrate_lrt(200, reps=1000, rng_seed=2, progress=False)
        grid = ExperimentGrid(method="lrt", changes=[1], deltas=[2.0, 5.0], reps=100,
                              thresholds=profile, seed=5)
        report = run_grid(grid, progress=False)
        strong = report.cells[1].estimates[0]
        assert abs(strong.mean - 100.4) <= 1.4
        moderate = report.cells[0].precision[0].probabilities
        assert abs(moderate[5] - 0.80) <= 0.1
        assert moderate[25] >= 0.9


@pytest.mark.slow
class TestPublishedAccuracy:
    """Desk-scale checks against the published accuracy and precision tables."""

    @pytest.fixture(scope="class")
    def cluster_profile(self):
        return ThresholdProfile.reference_table("cluster")

    @pytest.fixture(scope="class")
    def calibrated_lrt(self):
        return calibrate_lrt(200, reps=1000, rng_seed=3, progress=False)

    def test_cluster_single_strong_change(self, cluster_profile):
        grid = ExperimentGrid(method="cluster", changes=[1], deltas=[5.0], reps=300,
                              thresholds=cluster_profile, seed=11)
        cell = run_cell(grid, 1, 5.0, progress=False)
        assert cell.estimates[0].mean == pytest.approx(101.1, abs=1.0)
        probs = cell.precision[0].probabilities
        assert probs[0] == pytest.approx(0.43, abs=0.07)
        assert probs[5] == pytest.approx(0.93, abs=0.07)

    def test_cluster_three_changes(self, cluster_profile):
        grid = ExperimentGrid(method="cluster", changes=[3], deltas=[4.0], reps=300,
                              thresholds=cluster_profile, seed=12)
        cell = run_cell(grid, 3, 4.0, progress=False)
        for estimate, published in zip(cell.estimates, (51.4, 98.7, 151.4)):
            assert estimate.mean == pytest.approx(published, abs=2.0)

    def test_cluster_weak_shifts_are_pulled_inward(self, cluster_profile):
        grid = ExperimentGrid(method="cluster", changes=[4], deltas=[1.0], reps=300,
                              thresholds=cluster_profile, seed=13)
        cell = run_cell(grid, 4, 1.0, progress=False)
        assert cell.estimates[0].mean > 40
        assert cell.estimates[-1].mean < 160

    def test_variants_agree_on_strong_shifts(self, cluster_profile):
        means = {}
        for variant in ("agglomerative", "divisive"):
            grid = ExperimentGrid(method="cluster", changes=[1], deltas=[4.0, 5.0], reps=300,
                                  variant=variant, thresholds=cluster_profile, seed=14)
            means[variant] = [cell.estimates[0].mean for cell in run_grid(grid, progress=False).cells]
        for agglo, divisive in zip(means["agglomerative"], means["divisive"]):
            assert abs(agglo - divisive) < 2.0

    def test_transform_helps_weak_shifts(self, cluster_profile):
        raw_profile = calibrate_cluster(200, reps=100, sets=10, rng_seed=15, progress=False)
        within = {}
        for transform, profile in (("auto", cluster_profile), ("off", raw_profile)):
            grid = ExperimentGrid(method="cluster", changes=[1], deltas=[0.5, 1.0], reps=300,
                                  transform=transform, thresholds=profile, seed=16)
            within[transform] = sum(cell.precision[0].probabilities[10]
                                    for cell in run_grid(grid, progress=False).cells)
        assert within["off"] <= within["auto"] + 0.02

    def test_lrt_four_changes(self, calibrated_lrt):
        grid = ExperimentGrid(method="lrt", changes=[4], deltas=[0.5, 5.0], reps=300,
                              thresholds=calibrated_lrt, seed=17)
        weak, strong = run_grid(grid, progress=False).cells
        for estimate, published in zip(strong.estimates, (40.2, 75.8, 123.8, 160.3)):
            assert estimate.mean == pytest.approx(published, abs=2.0)
        assert weak.estimates[0].mean < 37
