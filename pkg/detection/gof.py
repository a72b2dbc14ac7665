"""Anderson-Darling goodness-of-fit test for exponentiality with estimated mean."""

import logging

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import stats

from .errors import DomainError, SeriesTooShortError
from .series import ObservationSeries

logger = logging.getLogger(__name__)

MIN_SAMPLE = 8

# 5% critical value of the modified statistic, exponential with estimated mean
CRITICAL_VALUE_5PCT = 1.341

_CLAMP = 1e-12


class GofReport(BaseModel):
    """Result of an Anderson-Darling exponentiality test."""

    statistic: float = Field(..., ge=0.0, description="A^2")
    modified_statistic: float = Field(..., description="A^2 (1 + 0.6/m)")
    sample_size: int = Field(..., ge=MIN_SAMPLE)
    estimated_mean: float = Field(..., gt=0.0)
    reject_at_5pct: bool
    critical_value: float = CRITICAL_VALUE_5PCT
    nonpositive_count: int = Field(0, description="Observations <= 0 (CDF clamped)")
    clamped_count: int = Field(0, description="CDF values moved into [1e-12, 1 - 1e-12]")

    @model_validator(mode="after")
    def _check_modification(self) -> "GofReport":
        expected = self.statistic * (1.0 + 0.6 / self.sample_size)
        if not np.isclose(self.modified_statistic, expected, rtol=1e-12, atol=1e-12):
            raise ValueError("modified_statistic must equal A^2 (1 + 0.6/m)")
        return self


def anderson_darling_statistic(z: np.ndarray) -> float:
    """A^2 from sorted CDF values z_(1) <= ... <= z_(m)."""
    m = z.size
    i = np.arange(1, m + 1)
    s = np.sum((2 * i - 1) * (np.log(z) + np.log1p(-z[::-1])))
    return float(max(-m - s / m, 0.0))


def ad_exponential(series: ObservationSeries) -> GofReport:
    """
    Test whether a series looks like i.i.d. exponential draws.

    The mean is estimated by the sample mean. Non-positive observations and
    CDF values at 0 or 1 are clamped and counted in the report.
    """
    x = np.sort(series.values)
    m = x.size
    if m < MIN_SAMPLE:
        raise SeriesTooShortError(f"Anderson-Darling test needs at least {MIN_SAMPLE} observations, got {m}")
    mean = float(x.mean())
    if mean <= 0:
        raise DomainError(f"sample mean {mean} is not positive; no exponential fit")

    nonpositive = int(np.count_nonzero(x <= 0))
    raw = stats.expon.cdf(x, scale=mean)
    z = np.clip(raw, _CLAMP, 1.0 - _CLAMP)
    clamped = int(np.count_nonzero(z != raw))
    if nonpositive or clamped:
        logger.warning(f"AD test: {nonpositive} non-positive values, {clamped} clamped CDF values")

    a2 = anderson_darling_statistic(z)
    modified = a2 * (1.0 + 0.6 / m)
    return GofReport(
        statistic=a2,
        modified_statistic=modified,
        sample_size=m,
        estimated_mean=mean,
        reject_at_5pct=modified > CRITICAL_VALUE_5PCT,
        nonpositive_count=nonpositive,
        clamped_count=clamped,
    )
