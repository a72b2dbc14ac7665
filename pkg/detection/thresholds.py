"""Per-level decision thresholds and the nearest-rank percentile rule."""

import logging
import math
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import special

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

# Published seven-level reference profile for m=200 (the same values were printed for both methods)
REFERENCE_THRESHOLDS = (0.7686, 0.9435, 0.7571, 0.8119, 0.7343, 0.7369, 0.6911)
REFERENCE_ALPHAS = (0.03, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01)

# Exponent of the power transform the published clustering thresholds were computed under
REFERENCE_ETA = 0.24


def reference_cluster_scale(eta: float = REFERENCE_ETA) -> float:
    """
    Standard deviation of X**eta for a unit-mean exponential X.

    The published clustering thresholds measure mean differences of x**eta
    against a unit denominator. The pooled distance measures them in units of
    the series standard deviation, so the published values divided by this
    scale are thresholds for the pooled distance.
    """
    return math.sqrt(special.gamma(1.0 + 2.0 * eta) - special.gamma(1.0 + eta) ** 2)


class Provenance(BaseModel):
    """Where a threshold profile came from."""

    kind: Literal["calibrated", "reference_table", "user_supplied"]
    seed: Optional[int] = None
    reps: Optional[int] = Field(None, description="Null replicates per set")
    sets: Optional[int] = Field(None, description="Number of sets of replicates")
    note: Optional[str] = None


class ThresholdLevel(BaseModel):
    """Threshold H for one level with its false-detection probability."""

    level: int = Field(..., ge=1)
    alpha: float = Field(..., description="Per-level false detection probability")
    threshold: float = Field(..., description="H_level")
    sample_size: Optional[int] = Field(
        None, description="Null statistics behind the percentile (calibrated profiles only)"
    )

    @field_validator("alpha")
    @classmethod
    def _alpha_open_unit(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {value}")
        return value

    @field_validator("threshold")
    @classmethod
    def _threshold_positive(cls, value: float) -> float:
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"threshold must be positive and finite, got {value}")
        return value


class ThresholdProfile(BaseModel):
    """Thresholds H_1..H_g, their alphas and the Bonferroni bound on overall error."""

    method: Optional[Literal["cluster", "lrt"]] = None
    series_length: Optional[int] = Field(None, description="m the profile was calibrated for")
    levels: List[ThresholdLevel]
    overall_alpha_bound: float
    provenance: Provenance
    options: Dict[str, Any] = Field(
        default_factory=dict, description="Detector options the profile was calibrated under"
    )

    @model_validator(mode="after")
    def _check_levels(self) -> "ThresholdProfile":
        if not self.levels:
            raise ValueError("a profile needs at least one level")
        numbers = [lvl.level for lvl in self.levels]
        if numbers != list(range(1, len(numbers) + 1)):
            raise ValueError(f"levels must be numbered 1..g in order, got {numbers}")
        total = math.fsum(lvl.alpha for lvl in self.levels)
        if not math.isclose(total, self.overall_alpha_bound, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(
                f"overall_alpha_bound {self.overall_alpha_bound} != sum of alphas {total}"
            )
        return self

    @property
    def g(self) -> int:
        return len(self.levels)

    @property
    def alphas(self) -> List[float]:
        return [lvl.alpha for lvl in self.levels]

    @property
    def thresholds(self) -> List[float]:
        return [lvl.threshold for lvl in self.levels]

    def threshold(self, level: int) -> float:
        if not 1 <= level <= self.g:
            raise InvalidInputError(f"profile has no level {level} (g={self.g})")
        return self.levels[level - 1].threshold

    @classmethod
    def from_values(
        cls,
        alphas: Sequence[float],
        thresholds: Sequence[float],
        provenance: Provenance,
        method: Optional[str] = None,
        series_length: Optional[int] = None,
        sample_sizes: Optional[Sequence[int]] = None,
        options: Optional[Dict[str, Any]] = None,
    ) -> "ThresholdProfile":
        if len(alphas) != len(thresholds):
            raise InvalidInputError("alphas and thresholds must have the same length")
        sizes = list(sample_sizes) if sample_sizes is not None else [None] * len(alphas)
        levels = [
            ThresholdLevel(level=i + 1, alpha=a, threshold=h, sample_size=n)
            for i, (a, h, n) in enumerate(zip(alphas, thresholds, sizes))
        ]
        return cls(
            method=method,
            series_length=series_length,
            levels=levels,
            overall_alpha_bound=math.fsum(alphas),
            provenance=provenance,
            options=options or {},
        )

    @classmethod
    def reference_table(cls, method: Optional[str] = None) -> "ThresholdProfile":
        """
        The published reference thresholds; regression anchors rather than calibrated values.

        For the clustering detector the values are rescaled to the pooled
        distance with reference_cluster_scale.
        """
        thresholds = list(REFERENCE_THRESHOLDS)
        note = "published reference values for m=200, g=7"
        if method == "cluster":
            scale = reference_cluster_scale()
            thresholds = [h / scale for h in thresholds]
            note += f", divided by sd(X**{REFERENCE_ETA}) = {scale:.4f} for the pooled distance"
        return cls.from_values(
            REFERENCE_ALPHAS,
            thresholds,
            Provenance(kind="reference_table", note=note),
            method=method,
            series_length=200,
        )

    def truncated(self, g: int) -> "ThresholdProfile":
        """The first g levels of this profile."""
        if not 1 <= g <= self.g:
            raise InvalidInputError(f"cannot truncate a {self.g}-level profile to {g} levels")
        kept = self.levels[:g]
        return self.model_copy(update={
            "levels": kept,
            "overall_alpha_bound": math.fsum(lvl.alpha for lvl in kept),
        })


def validate_alphas(alphas: Sequence[float], g: int) -> List[float]:
    alphas = [float(a) for a in alphas]
    if len(alphas) != g:
        raise InvalidInputError(f"need {g} alphas, got {len(alphas)}")
    if any(not 0.0 < a < 1.0 for a in alphas):
        raise InvalidInputError(f"every alpha must lie in (0, 1): {alphas}")
    return alphas


def nearest_rank(sample: Sequence[float], alpha: float) -> float:
    """
    The 100(1-alpha) percentile by the nearest-rank rule.

    Returns the ceil(n(1-alpha))-th smallest value of the sample.
    """
    values = np.sort(np.asarray(sample, dtype=float))
    if values.size == 0:
        raise InvalidInputError("cannot take a percentile of an empty sample")
    # round() guards against n*(1-alpha) landing a hair above an integer
    rank = max(1, math.ceil(round(values.size * (1.0 - alpha), 9)))
    return float(values[rank - 1])
