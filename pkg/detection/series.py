"""Observation series, segment statistics and detection results.

Indices are 1-based everywhere a caller can see them. A change point tau is the
index of the LAST observation of the earlier segment, so observations
tau+1 .. next boundary form the following segment.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .errors import DomainError, IndexRangeError, InvalidInputError

logger = logging.getLogger(__name__)

CHANGE_POINT_CONVENTION = "last-of-previous: tau is the last index of the earlier segment (1-based)"


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Ordered, finite real observations x_1..x_m (order = arrival order)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 1:
            raise InvalidInputError(f"series must be one-dimensional, got shape {arr.shape}")
        if arr.size < 1:
            raise InvalidInputError("series must contain at least one observation")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("series contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.m

    def require_positive(self) -> "ObservationSeries":
        """Return self, or raise DomainError if any value is not strictly positive."""
        bad = np.flatnonzero(self.values <= 0)
        if bad.size:
            raise DomainError(
                f"exponential model needs positive observations; "
                f"index {int(bad[0]) + 1} holds {self.values[bad[0]]}"
            )
        return self

    def slice(self, start: int, end: int) -> np.ndarray:
        """Values of the inclusive 1-based range [start, end]."""
        if not 1 <= start <= end <= self.m:
            raise IndexRangeError(f"range [{start}, {end}] outside [1, {self.m}]")
        return self.values[start - 1:end]

    def mapped(self, values: np.ndarray) -> "ObservationSeries":
        """A new series with the same length holding transformed values."""
        if len(values) != self.m:
            raise InvalidInputError("transformed series must keep its length")
        return ObservationSeries(values)


@dataclass(frozen=True)
class SegmentStats:
    """Count, mean and sample standard deviation (divisor n-1) of a segment."""

    count: int
    mean: float
    stddev: float

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "SegmentStats":
        arr = np.asarray(values, dtype=float)
        if arr.size < 1:
            raise InvalidInputError("segment must contain at least one observation")
        if arr.size == 1 or np.all(arr == arr[0]):
            return cls(int(arr.size), float(arr[0]), 0.0)
        return cls(int(arr.size), float(np.mean(arr)), float(np.std(arr, ddof=1)))

    @property
    def variance(self) -> float:
        return self.stddev * self.stddev

    def merge(self, other: "SegmentStats") -> "SegmentStats":
        """Pooled statistics of the concatenation of two segments."""
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = (self.variance * (self.count - 1) + other.variance * (other.count - 1)
              + delta * delta * self.count * other.count / n)
        stddev = math.sqrt(max(m2, 0.0) / (n - 1)) if n > 1 else 0.0
        return SegmentStats(n, mean, stddev)


class LevelStatistic(BaseModel):
    """Outcome of one decision level (cluster) or one test (lrt)."""

    level: int = Field(..., ge=1, description="Decision level or test index")
    statistic: float = Field(..., description="d_j* for clustering, max lrt* for the test")
    threshold: float = Field(..., description="Threshold H compared against")
    exceeded: bool = Field(..., description="statistic > threshold")
    location: Optional[int] = Field(
        None, description="Boundary proposed at this level, whole-series 1-based index"
    )
    raw_lrt: Optional[float] = Field(None, description="Unnormalized lrt at the chosen split")


class DetectionResult(BaseModel):
    """Change points found in a series plus per-level evidence."""

    method: Literal["cluster", "lrt"]
    variant: Optional[str] = Field(None, description="agglomerative or divisive for clustering")
    series_length: int = Field(..., ge=1)
    max_changes: int = Field(..., ge=1, description="g, the maximum number of detectable changes")
    change_points: List[int] = Field(default_factory=list)
    detection_order: List[int] = Field(
        default_factory=list,
        description="The change points in the order they were found: by level for clustering, by test for lrt",
    )
    levels: List[LevelStatistic] = Field(default_factory=list)
    eta: Optional[float] = Field(None, description="Box-Cox exponent applied before detection")
    thresholds_provenance: Optional[str] = None
    convention: str = CHANGE_POINT_CONVENTION

    @model_validator(mode="after")
    def _check_change_points(self) -> "DetectionResult":
        validate_change_points(self.series_length, self.change_points)
        if len(self.change_points) > self.max_changes:
            raise ValueError(
                f"{len(self.change_points)} change points exceed the maximum of {self.max_changes}"
            )
        if self.detection_order and sorted(self.detection_order) != self.change_points:
            raise ValueError("detection_order must be a permutation of change_points")
        return self


def validate_change_points(m: int, cps: Sequence[int]) -> List[int]:
    """Check that cps is strictly increasing with every index in [1, m-1]."""
    cps = [int(c) for c in cps]
    for c in cps:
        if not 1 <= c <= m - 1:
            raise InvalidInputError(f"change point {c} outside [1, {m - 1}]")
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise InvalidInputError(f"change points must be strictly increasing: {cps}")
    return cps


def segment_stats(series: ObservationSeries, start: int, end: int) -> SegmentStats:
    """Sample statistics of the inclusive 1-based slice [start, end]."""
    return SegmentStats.from_values(series.slice(start, end))


def segmentation_from_changepoints(m: int, cps: Sequence[int]) -> List[Tuple[int, int]]:
    """
    Split [1, m] into contiguous ranges ending at each change point.

    Args:
        m: Series length
        cps: Strictly increasing change points in [1, m-1]

    Returns:
        R+1 inclusive (start, end) ranges covering [1, m]
    """
    if m < 1:
        raise InvalidInputError("series length must be positive")
    cps = validate_change_points(m, cps)
    bounds = [0] + cps + [m]
    return [(lo + 1, hi) for lo, hi in zip(bounds, bounds[1:])]
