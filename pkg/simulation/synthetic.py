"""
Seeded piecewise-stationary exponential series.

Segment means alternate between 1/lambda0 and 1/lambda0 + delta, the first
shift going up. Change points follow the last-of-previous convention.
"""

import logging
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from detection.errors import InvalidInputError
from detection.parallel import spawn_seeds
from detection.series import ObservationSeries, segmentation_from_changepoints, validate_change_points

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"

SeedInput = Union[int, np.random.SeedSequence]


class SyntheticSpec(BaseModel):
    """Design of one synthetic series."""

    m: int = Field(..., ge=1, description="Series length")
    changes: int = Field(..., ge=0, description="R, the number of changes")
    lambda0: float = Field(1.0, gt=0.0, description="Initial rate; the first mean is 1/lambda0")
    delta: float = Field(..., ge=0.0, description="Shift between consecutive segment means")
    placement: Union[Literal["equal"], List[int]] = Field(
        "equal", description="'equal' spacing or explicit change points"
    )
    seed: int = 0

    @field_validator("placement", mode="before")
    @classmethod
    def _normalize_placement(cls, value):
        if isinstance(value, str) and value in ("equal", "equally_spaced"):
            return "equal"
        return value

    @model_validator(mode="after")
    def _check_design(self) -> "SyntheticSpec":
        if self.m <= self.changes:
            raise ValueError(f"m={self.m} cannot hold {self.changes} changes")
        if self.placement != "equal":
            if len(self.placement) != self.changes:
                raise ValueError(
                    f"{len(self.placement)} explicit change points given for R={self.changes}"
                )
            validate_change_points(self.m, self.placement)
        return self


def change_locations(spec: SyntheticSpec) -> List[int]:
    """True change points; equal spacing puts tau_j at floor(m j / (R + 1))."""
    if spec.placement != "equal":
        return list(spec.placement)
    r = spec.changes
    return [spec.m * j // (r + 1) for j in range(1, r + 1)]


def segment_means(spec: SyntheticSpec) -> List[float]:
    """R + 1 means alternating 1/lambda0, 1/lambda0 + delta, ..."""
    mu = 1.0 / spec.lambda0
    means = [mu]
    for j in range(1, spec.changes + 1):
        mu = mu + spec.delta * (-1) ** (j - 1)
        means.append(mu)
    if any(mu <= 0 for mu in means):
        raise InvalidInputError(f"segment means must be positive: {means}")
    return means


def generate(spec: SyntheticSpec, seed: Optional[SeedInput] = None) -> Tuple[ObservationSeries, List[int]]:
    """
    Draw one series by inverse-CDF sampling, x = -mu ln(1 - u).

    Args:
        spec: Series design
        seed: Overrides spec.seed (a child SeedSequence in batch runs)

    Returns:
        Tuple of (series, true change points)
    """
    seed = spec.seed if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))
    taus = change_locations(spec)
    means = segment_means(spec)

    values = np.empty(spec.m)
    for (start, end), mu in zip(segmentation_from_changepoints(spec.m, taus), means):
        u = rng.random(end - start + 1)
        values[start - 1:end] = -mu * np.log1p(-u)
    return ObservationSeries(values), taus


def generate_batch(spec: SyntheticSpec, count: int) -> List[Tuple[ObservationSeries, List[int]]]:
    """count replicates seeded by children of spec.seed."""
    if count < 0:
        raise InvalidInputError("count must be nonnegative")
    return [generate(spec, child) for child in spawn_seeds(spec.seed, count)]
