"""
Likelihood ratio change-point detection for exponential observations.

For a split after m1 of m observations the statistic is

    lrt[m1, m2] = 2 [m ln xbar - m1 ln xbar_1 - m2 ln xbar_2]

i.e. -2 (L0 - (L1 + L2)) with the maximized exponential log-likelihoods
L = n ln(n / sum x) - n. Its null expectation grows near the edges of the
series, so splits are compared through lrt* = lrt / Elrt, Elrt being a
Monte Carlo estimate of that expectation for the series length.
"""

import logging
import math
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import IndexRangeError, InvalidInputError, SeriesTooShortError
from .series import DetectionResult, LevelStatistic, ObservationSeries
from .thresholds import ThresholdProfile

logger = logging.getLogger(__name__)

DEFAULT_MIN_SEG = 2
DEFAULT_ELRT_RUNS = 4000
DEFAULT_MAX_TESTS = 7

# Runs simulated per block when building a table
_BLOCK_RUNS = 1000

SeedLike = Union[int, Sequence[int]]


def _check_min_seg(m: int, min_seg: int) -> None:
    if min_seg < 1:
        raise InvalidInputError(f"min_seg must be at least 1, got {min_seg}")
    if m < 2 * min_seg:
        raise SeriesTooShortError(
            f"a series of {m} observations has no split with both sides >= {min_seg}"
        )


def lrt_matrix(values: np.ndarray, min_seg: int = DEFAULT_MIN_SEG) -> Tuple[np.ndarray, np.ndarray]:
    """
    lrt for every admissible split of one series or of each row of a matrix.

    Args:
        values: Positive observations, shape (m,) or (runs, m)
        min_seg: Smallest allowed segment on either side of the split

    Returns:
        Tuple of (split positions m1, statistics with a trailing split axis)
    """
    x = np.asarray(values, dtype=float)
    m = x.shape[-1]
    _check_min_seg(m, min_seg)
    csum = np.cumsum(x, axis=-1)
    total = csum[..., -1:]
    splits = np.arange(min_seg, m - min_seg + 1)
    left = csum[..., splits - 1]
    right = total - left
    m2 = m - splits
    stat = 2.0 * (m * np.log(total / m) - splits * np.log(left / splits) - m2 * np.log(right / m2))
    # Jensen makes lrt nonnegative; clamp rounding noise
    return splits, np.maximum(stat, 0.0)


def lrt(series: ObservationSeries, m1: int, min_seg: int = DEFAULT_MIN_SEG) -> float:
    """
    Two-segment versus one-segment exponential likelihood ratio statistic.

    Args:
        series: Positive observations
        m1: Number of observations in the first segment
        min_seg: Smallest allowed segment

    Returns:
        lrt[m1, m - m1] >= 0
    """
    series.require_positive()
    m = series.m
    _check_min_seg(m, min_seg)
    if not min_seg <= m1 <= m - min_seg:
        raise IndexRangeError(f"split {m1} outside [{min_seg}, {m - min_seg}]")
    x = series.values
    m2 = m - m1
    stat = 2.0 * (m * math.log(x.mean()) - m1 * math.log(x[:m1].mean()) - m2 * math.log(x[m1:].mean()))
    return max(stat, 0.0)


@dataclass(frozen=True, eq=False)
class ElrtTable:
    """Simulated null expectation of lrt for each split of a length-m series."""

    series_length: int
    min_seg: int
    expected_values: np.ndarray
    runs_used: int
    seed: Tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.expected_values, dtype=float)
        expected_size = self.series_length - 2 * self.min_seg + 1
        if values.shape != (expected_size,):
            raise InvalidInputError(
                f"table for m={self.series_length}, min_seg={self.min_seg} needs "
                f"{expected_size} entries, got {values.shape}"
            )
        if not np.all(np.isfinite(values) & (values > 0)):
            raise InvalidInputError("expected lrt values must be positive and finite")
        values.setflags(write=False)
        object.__setattr__(self, "expected_values", values)

    @property
    def splits(self) -> np.ndarray:
        return np.arange(self.min_seg, self.series_length - self.min_seg + 1)

    def expected(self, m1: int) -> float:
        if not self.min_seg <= m1 <= self.series_length - self.min_seg:
            raise IndexRangeError(
                f"split {m1} outside [{self.min_seg}, {self.series_length - self.min_seg}]"
            )
        return float(self.expected_values[m1 - self.min_seg])

    def as_dict(self) -> Dict[int, float]:
        return {int(s): float(v) for s, v in zip(self.splits, self.expected_values)}


def _seed_tuple(seed: SeedLike) -> Tuple[int, ...]:
    return (int(seed),) if np.isscalar(seed) else tuple(int(s) for s in seed)


def build_elrt_table(
    m: int,
    runs: int = DEFAULT_ELRT_RUNS,
    min_seg: int = DEFAULT_MIN_SEG,
    rng_seed: SeedLike = 0,
    mean: float = 1.0,
) -> ElrtTable:
    """
    Estimate Elrt[m1, m - m1] by simulating homogeneous exponential series.

    Args:
        m: Series length
        runs: Number of simulated series
        min_seg: Smallest allowed segment
        rng_seed: Seed (or seed entropy tuple) of the PCG64 generator
        mean: Mean of the simulated exponentials; the statistic is scale free

    Returns:
        ElrtTable; identical for identical arguments
    """
    if runs < 1:
        raise InvalidInputError(f"runs must be positive, got {runs}")
    if min_seg < 1 or 2 * min_seg > m:
        raise InvalidInputError(f"min_seg must lie in [1, m/2] for m={m}, got {min_seg}")

    seed = _seed_tuple(rng_seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    block_sums = []
    done = 0
    while done < runs:
        block = min(_BLOCK_RUNS, runs - done)
        _, stats = lrt_matrix(rng.exponential(mean, size=(block, m)), min_seg)
        block_sums.append(stats.sum(axis=0))
        done += block

    # fsum over block sums keeps the reduction independent of how blocks are combined
    columns = np.asarray(block_sums).T
    expected = np.array([math.fsum(col) for col in columns]) / runs
    logger.debug(f"built Elrt table m={m} runs={runs} seed={seed}")
    return ElrtTable(series_length=m, min_seg=min_seg, expected_values=expected,
                     runs_used=runs, seed=seed)


TableProvider = Callable[[int], ElrtTable]


class ElrtCache:
    """
    Per-length Elrt tables built on demand.

    The table for length L is seeded with (master_seed, L) and built at most
    once per cache, also under concurrent lookups.
    """

    def __init__(
        self,
        runs: int = DEFAULT_ELRT_RUNS,
        min_seg: int = DEFAULT_MIN_SEG,
        master_seed: int = 0,
    ):
        self.runs = runs
        self.min_seg = min_seg
        self.master_seed = master_seed
        self._tables: Dict[int, ElrtTable] = {}
        self._locks: Dict[int, threading.Lock] = {}
        self._guard = threading.Lock()

    def table_for(self, m: int) -> ElrtTable:
        table = self._tables.get(m)
        if table is not None:
            return table
        with self._guard:
            lock = self._locks.setdefault(m, threading.Lock())
        with lock:
            if m not in self._tables:
                self._tables[m] = build_elrt_table(
                    m, self.runs, self.min_seg, (self.master_seed, m)
                )
            return self._tables[m]

    __call__ = table_for

    def __len__(self) -> int:
        return len(self._tables)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_locks"], state["_guard"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._locks = {}
        self._guard = threading.Lock()


def _check_table(m: int, table: ElrtTable) -> None:
    if table.series_length != m:
        raise InvalidInputError(
            f"Elrt table is for length {table.series_length}, series has {m} observations"
        )


def lrt_star(series: ObservationSeries, m1: int, table: ElrtTable) -> float:
    """lrt at split m1 divided by its null expectation."""
    _check_table(series.m, table)
    return lrt(series, m1, table.min_seg) / table.expected(m1)


def scan_splits(values: np.ndarray, table: ElrtTable) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split positions, raw lrt and lrt* over every admissible split."""
    _check_table(len(values), table)
    splits, raw = lrt_matrix(values, table.min_seg)
    return splits, raw, raw / table.expected_values


def best_split(series: ObservationSeries, table: ElrtTable) -> Tuple[int, float]:
    """
    The split maximizing lrt*.

    Returns:
        Tuple of (m1*, lrt* at m1*); the smallest m1 wins ties
    """
    series.require_positive()
    splits, _, star = scan_splits(series.values, table)
    k = int(np.argmax(star))
    return int(splits[k]), float(star[k])


@dataclass(frozen=True)
class SegmentTest:
    """One test of the breadth-first segmentation."""

    index: int
    start: int
    length: int
    location: int
    statistic: float
    raw_lrt: float


def run_tests(
    values: np.ndarray,
    table_provider: TableProvider,
    max_tests: int,
    min_seg: int,
    accept: Callable[[SegmentTest], bool],
) -> List[SegmentTest]:
    """
    Breadth-first segmentation numbered by discovery.

    Test 1 is the whole series. An accepted test queues its left then its right
    segment, and tests are numbered in the order they are performed. Segments
    shorter than 2*min_seg are skipped without using up a number. Stops after
    max_tests tests or when the queue runs dry.
    """
    queue = deque([(0, len(values))])
    tests: List[SegmentTest] = []
    while queue and len(tests) < max_tests:
        start, length = queue.popleft()
        if length < 2 * min_seg:
            continue
        index = len(tests) + 1
        table = table_provider(length)
        if table.min_seg != min_seg:
            raise InvalidInputError(f"table min_seg {table.min_seg} != detector min_seg {min_seg}")
        splits, raw, star = scan_splits(values[start:start + length], table)
        k = int(np.argmax(star))
        m1 = int(splits[k])
        test = SegmentTest(index=index, start=start, length=length, location=start + m1,
                           statistic=float(star[k]), raw_lrt=float(raw[k]))
        tests.append(test)
        if accept(test):
            queue.append((start, m1))
            queue.append((start + m1, length - m1))
    return tests


def binary_segment(
    series: ObservationSeries,
    table_provider: TableProvider,
    thresholds: ThresholdProfile,
    max_tests: Optional[int] = None,
    min_seg: int = DEFAULT_MIN_SEG,
) -> DetectionResult:
    """
    Detect multiple changes by recursive single-change tests.

    Args:
        series: Positive observations
        table_provider: Returns the Elrt table for a segment length
        thresholds: H for test indices 1..g
        max_tests: Number of tests (defaults to g, the profile size)
        min_seg: Smallest allowed segment

    Returns:
        DetectionResult with accepted splits as whole-series indices
    """
    series.require_positive()
    max_tests = thresholds.g if max_tests is None else max_tests
    if max_tests > thresholds.g:
        raise InvalidInputError(f"{max_tests} tests need {max_tests} thresholds, profile has {thresholds.g}")
    if thresholds.method not in (None, "lrt"):
        logger.warning(f"using a {thresholds.method} profile for the likelihood ratio detector")

    def accept(test: SegmentTest) -> bool:
        return test.statistic > thresholds.threshold(test.index)

    tests = run_tests(series.values, table_provider, max_tests, min_seg, accept)
    levels = [
        LevelStatistic(
            level=t.index, statistic=t.statistic, threshold=thresholds.threshold(t.index),
            exceeded=accept(t), location=t.location, raw_lrt=t.raw_lrt,
        )
        for t in tests
    ]
    detected = [t.location for t in tests if accept(t)]
    change_points = sorted(detected)
    result = DetectionResult(
        method="lrt",
        variant="binary-segmentation",
        series_length=series.m,
        max_changes=max_tests,
        change_points=change_points,
        detection_order=detected,
        levels=levels,
        thresholds_provenance=thresholds.provenance.kind,
    )
    logger.info(f"lrt detection: {len(tests)} tests, change points {change_points}")
    return result


def segment_statistics(
    series: ObservationSeries,
    table_provider: TableProvider,
    max_tests: int = DEFAULT_MAX_TESTS,
    min_seg: int = DEFAULT_MIN_SEG,
) -> Dict[int, float]:
    """Record mode: max lrt* of tests 1..max_tests when every test splits."""
    series.require_positive()
    tests = run_tests(series.values, table_provider, max_tests, min_seg, lambda _: True)
    return {t.index: t.statistic for t in tests}


def detect_lrt(
    series: ObservationSeries,
    thresholds: ThresholdProfile,
    cache: Optional[ElrtCache] = None,
    max_changes: Optional[int] = None,
) -> DetectionResult:
    """binary_segment with a fresh default cache unless one is given."""
    if cache is None:
        cache = ElrtCache()
    profile = thresholds if max_changes is None else thresholds.truncated(max_changes)
    return binary_segment(series, cache, profile, min_seg=cache.min_seg)


# One cache per worker process and configuration
_PROCESS_CACHES: Dict[Tuple[int, int, int], ElrtCache] = {}


def process_cache(runs: int, min_seg: int, master_seed: int) -> ElrtCache:
    """The ElrtCache of this process for (runs, min_seg, master_seed), created on first use."""
    key = (runs, min_seg, master_seed)
    if key not in _PROCESS_CACHES:
        _PROCESS_CACHES[key] = ElrtCache(runs, min_seg, master_seed)
    return _PROCESS_CACHES[key]
