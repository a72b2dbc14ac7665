"""
Change-point detection by hierarchical clustering of an ordered series.

Clusters are contiguous index ranges. Adjacent clusters are compared with the
standardized distance

    d = |mean_a - mean_b| / sqrt(s_a^2 / n_a + s_b^2 / n_b)

whose denominator is fixed to 1 in the first agglomeration step. Under the
default "pooled" variance policy s_a^2 and s_b^2 are both the sample variance
of the whole series, so d is a mean difference in units of the series spread.
The agglomerative variant removes the boundary with the smallest distance at
each step; the boundary removed last becomes level 1 of the merge trace. The
divisive variant performs the split with the largest distance first.
"""

import heapq
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple, Union

import numba as nb
import numpy as np

from .boxcox import DEFAULT_GRID, estimate_eta, transform_series
from .errors import InvalidInputError, SeriesTooShortError
from .series import DetectionResult, LevelStatistic, ObservationSeries, SegmentStats
from .thresholds import ThresholdProfile

logger = logging.getLogger(__name__)

# Distance of two constant clusters with different means; larger than any real distance
UNBOUNDED_DISTANCE = float(np.finfo(np.float64).max)

# Sums of squares below this fraction of the raw sum of squares are rounding noise
_SS_TOLERANCE = 1e-10

Variant = Literal["agglomerative", "divisive"]
VariancePolicy = Literal["pooled", "series", "none"]
TransformOption = Union[Literal["auto", "off"], float, None]

VARIANCE_POLICIES = ("pooled", "series", "none")

VARIANT_ALIASES = {
    "agglomerative": "agglomerative",
    "agglo": "agglomerative",
    "divisive": "divisive",
}


@dataclass(frozen=True, eq=False)
class MergeTrace:
    """
    Boundary locations and distances indexed by level.

    locations[j - 1] and distances[j - 1] hold l_j* and d_j*. For the
    agglomerative variant level 1 is the last boundary removed; for the divisive
    variant it is the first split.
    """

    locations: np.ndarray
    distances: np.ndarray
    variant: str = "agglomerative"

    def __post_init__(self):
        locations = np.asarray(self.locations, dtype=np.int64)
        distances = np.asarray(self.distances, dtype=float)
        if locations.shape != distances.shape or locations.ndim != 1:
            raise InvalidInputError("trace locations and distances must be equal-length vectors")
        m = locations.size + 1
        if locations.size and (locations.min() < 1 or locations.max() > m - 1):
            raise InvalidInputError(f"trace locations must lie in [1, {m - 1}]")
        if np.unique(locations).size != locations.size:
            raise InvalidInputError("trace locations must be distinct")
        if np.any(distances < 0):
            raise InvalidInputError("trace distances must be nonnegative")
        locations.setflags(write=False)
        distances.setflags(write=False)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "distances", distances)

    @property
    def m(self) -> int:
        """Length of the series the trace was built from."""
        return int(self.locations.size) + 1

    def __len__(self) -> int:
        return int(self.locations.size)


@nb.njit(cache=False)
def _distance(n_a, mean_a, var_a, n_b, mean_b, var_b, first_step):
    diff = abs(mean_a - mean_b)
    if first_step:
        return diff
    denom2 = var_a / n_a + var_b / n_b
    if denom2 <= 0.0:
        if diff == 0.0:
            return 0.0
        return UNBOUNDED_DISTANCE
    return diff / np.sqrt(denom2)


@nb.njit(cache=False)
def _cluster_variance(count, m2, base_var, pooled):
    if pooled or count < 2:
        return base_var
    return m2 / (count - 1)


@nb.njit(cache=False)
def _agglomerate_kernel(values, base_var, pooled):
    m = values.shape[0]
    count = np.ones(m, dtype=np.int64)
    mean = values.copy()
    m2 = np.zeros(m)
    # nxt[start] is the first index of the next cluster (m past the end)
    nxt = np.arange(1, m + 1)
    locations = np.empty(m - 1, dtype=np.int64)
    distances = np.empty(m - 1)

    for step in range(1, m):
        best = -1
        best_d = np.inf
        start = 0
        while nxt[start] < m:
            right = nxt[start]
            var_a = _cluster_variance(count[start], m2[start], base_var, pooled)
            var_b = _cluster_variance(count[right], m2[right], base_var, pooled)
            d = _distance(count[start], mean[start], var_a,
                          count[right], mean[right], var_b, step == 1)
            # strict comparison keeps the leftmost boundary on ties
            if d < best_d:
                best_d = d
                best = start
            start = right

        right = nxt[best]
        level = m - step
        locations[level - 1] = right
        distances[level - 1] = best_d

        n_a = count[best]
        n_b = count[right]
        n = n_a + n_b
        delta = mean[right] - mean[best]
        mean[best] = mean[best] + delta * n_b / n
        m2[best] = m2[best] + m2[right] + delta * delta * n_a * n_b / n
        count[best] = n
        nxt[best] = nxt[right]

    return locations, distances


def _check_policy(policy: str) -> None:
    if policy not in VARIANCE_POLICIES:
        raise InvalidInputError(f"unknown variance policy {policy!r}; expected one of {VARIANCE_POLICIES}")


def singleton_variance(values: np.ndarray, policy: VariancePolicy = "pooled") -> float:
    """
    Variance assigned to one-observation clusters after the first step.

    "pooled" and "series" use the sample variance of the whole series; "none"
    leaves singletons at 0 so two distinct singletons sit at UNBOUNDED_DISTANCE.
    """
    _check_policy(policy)
    if policy == "none" or values.size < 2:
        return 0.0
    return float(np.var(values, ddof=1))


def pair_distance(
    a: SegmentStats,
    b: SegmentStats,
    first_step: bool = False,
    singleton_variance: float = 0.0,
    pooled_variance: Optional[float] = None,
) -> float:
    """
    Standardized distance between two adjacent clusters.

    Args:
        a: Statistics of the earlier cluster
        b: Statistics of the later cluster
        first_step: Use a denominator of 1 (first agglomeration step)
        singleton_variance: Variance substituted for one-observation clusters
        pooled_variance: When given, used for both clusters instead of their own variances

    Returns:
        The distance, 0 for equal means with zero spread, or
        UNBOUNDED_DISTANCE for different means with zero spread
    """
    if pooled_variance is not None:
        var_a = var_b = float(pooled_variance)
    else:
        var_a = a.variance if a.count > 1 else singleton_variance
        var_b = b.variance if b.count > 1 else singleton_variance
    return float(_distance(a.count, a.mean, var_a, b.count, b.mean, var_b, bool(first_step)))


def agglomerate(series: ObservationSeries, policy: VariancePolicy = "pooled") -> MergeTrace:
    """
    Bottom-up clustering of the ordered series into a full merge trace.

    Step k removes the boundary with the smallest distance (leftmost on ties)
    and records it at level m - k.
    """
    if series.m < 2:
        raise SeriesTooShortError("clustering needs at least two observations")
    values = np.ascontiguousarray(series.values, dtype=np.float64)
    base_var = singleton_variance(values, policy)
    locations, distances = _agglomerate_kernel(values, base_var, policy == "pooled")
    return MergeTrace(locations, distances, variant="agglomerative")


def _best_split(values: np.ndarray, lo: int, hi: int, base_var: float, pooled: bool) -> Tuple[float, int]:
    """Largest distance over all splits of values[lo:hi] and the split's 1-based location."""
    seg = values[lo:hi]
    if np.all(seg == seg[0]):
        return 0.0, lo + 1

    n = seg.size
    centered = seg - seg.mean()
    csum = np.cumsum(centered)
    csq = np.cumsum(centered * centered)
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left

    mean_left = csum[:-1] / n_left
    mean_right = (csum[-1] - csum[:-1]) / n_right
    if pooled:
        var_left = np.full(n - 1, base_var)
        var_right = var_left
    else:
        raw_left = csq[:-1]
        raw_right = csq[-1] - csq[:-1]
        ss_left = raw_left - n_left * mean_left ** 2
        ss_right = raw_right - n_right * mean_right ** 2
        # a constant side must give exactly 0, not cancellation residue
        ss_left = np.where(ss_left <= _SS_TOLERANCE * raw_left, 0.0, ss_left)
        ss_right = np.where(ss_right <= _SS_TOLERANCE * raw_right, 0.0, ss_right)
        var_left = np.where(n_left > 1, ss_left / np.maximum(n_left - 1, 1), base_var)
        var_right = np.where(n_right > 1, ss_right / np.maximum(n_right - 1, 1), base_var)

    diff = np.abs(mean_left - mean_right)
    denom2 = var_left / n_left + var_right / n_right
    positive = denom2 > 0
    dist = np.where(diff == 0, 0.0, UNBOUNDED_DISTANCE)
    dist[positive] = diff[positive] / np.sqrt(denom2[positive])

    k = int(np.argmax(dist))
    return float(dist[k]), lo + k + 1


def divide(series: ObservationSeries, policy: VariancePolicy = "pooled") -> MergeTrace:
    """
    Top-down clustering: repeatedly perform the split with the largest distance.

    Level j of the trace holds the j-th split. Ties go to the leftmost cluster,
    then the leftmost split position.
    """
    if series.m < 2:
        raise SeriesTooShortError("clustering needs at least two observations")
    values = np.asarray(series.values, dtype=float)
    base_var = singleton_variance(values, policy)
    pooled = policy == "pooled"
    m = values.size

    heap: List[Tuple[float, int, int, int]] = []

    def push(lo: int, hi: int) -> None:
        if hi - lo >= 2:
            d, loc = _best_split(values, lo, hi, base_var, pooled)
            heapq.heappush(heap, (-d, lo, hi, loc))

    push(0, m)
    locations = np.empty(m - 1, dtype=np.int64)
    distances = np.empty(m - 1)
    for step in range(m - 1):
        neg_d, lo, hi, loc = heapq.heappop(heap)
        locations[step] = loc
        distances[step] = -neg_d
        push(lo, loc)
        push(loc, hi)
    return MergeTrace(locations, distances, variant="divisive")


def build_trace(
    series: ObservationSeries,
    variant: str = "agglomerative",
    policy: VariancePolicy = "pooled",
) -> MergeTrace:
    variant = VARIANT_ALIASES.get(variant, variant)
    if variant == "agglomerative":
        return agglomerate(series, policy)
    if variant == "divisive":
        return divide(series, policy)
    raise InvalidInputError(f"unknown clustering variant {variant!r}")


def decide_change_points(
    trace: MergeTrace,
    thresholds: ThresholdProfile,
    eta: Optional[float] = None,
) -> DetectionResult:
    """
    Apply the last-exceedance rule to the first g levels of a trace.

    The largest R <= g with d_R* > H_R decides the number of changes; the
    boundaries of levels 1..R, sorted, are the change points. detection_order
    keeps them in level order.
    """
    g = thresholds.g
    if g > trace.m - 1:
        raise InvalidInputError(
            f"{g} threshold levels need a series of at least {g + 1} observations, got {trace.m}"
        )

    levels: List[LevelStatistic] = []
    last_exceeded = 0
    for j in range(1, g + 1):
        d = float(trace.distances[j - 1])
        h = thresholds.threshold(j)
        exceeded = d > h
        if exceeded:
            last_exceeded = j
        levels.append(LevelStatistic(
            level=j, statistic=d, threshold=h, exceeded=exceeded,
            location=int(trace.locations[j - 1]),
        ))

    detected = [int(loc) for loc in trace.locations[:last_exceeded]]
    return DetectionResult(
        method="cluster",
        variant=trace.variant,
        series_length=trace.m,
        max_changes=g,
        change_points=sorted(detected),
        detection_order=detected,
        levels=levels,
        eta=eta,
        thresholds_provenance=thresholds.provenance.kind,
    )


def resolve_eta(
    series: ObservationSeries,
    transform: TransformOption,
    grid: Tuple[float, float, float] = DEFAULT_GRID,
) -> Optional[float]:
    """Box-Cox exponent implied by a transform option (None when off)."""
    if transform is None or transform == "off":
        return None
    if transform == "auto":
        return estimate_eta(series, grid)
    return float(transform)


def detect_cluster(
    series: ObservationSeries,
    thresholds: ThresholdProfile,
    transform: TransformOption = "auto",
    variant: str = "agglomerative",
    policy: VariancePolicy = "pooled",
    max_changes: Optional[int] = None,
    grid: Tuple[float, float, float] = DEFAULT_GRID,
) -> DetectionResult:
    """
    Full clustering pipeline: optional Box-Cox, trace, threshold decision.

    Args:
        series: Observations in arrival order
        thresholds: Profile supplying H_1..H_g
        transform: "auto" estimates eta, "off" skips, a number fixes eta
        variant: "agglomerative" or "divisive"
        policy: Cluster variance policy, see singleton_variance
        max_changes: Use only the first g levels of the profile
        grid: Search grid for the automatic exponent

    Returns:
        DetectionResult with indices into the original series
    """
    if thresholds.method not in (None, "cluster"):
        logger.warning(f"using a {thresholds.method} profile for the clustering detector")
    profile = thresholds if max_changes is None else thresholds.truncated(max_changes)

    eta = resolve_eta(series, transform, grid)
    work = series if eta is None else transform_series(series, eta)
    trace = build_trace(work, variant, policy)
    result = decide_change_points(trace, profile, eta=eta)
    logger.info(f"cluster detection ({trace.variant}, eta={eta}): {result.change_points}")
    return result
