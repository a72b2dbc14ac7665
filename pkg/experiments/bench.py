"""
Accuracy and precision of the detectors on synthetic clustered series.

Every cell (R changes, shift delta) generates reps series and runs one
detector. The first R detections in detection order are matched to the true
change points (see match_estimates). A true change point left without an
estimate counts as missed: it is left out of that change point's mean and
counts as "not within k" for the precision curve.
"""

import logging
import math
from functools import partial
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from detection.boxcox import DEFAULT_GRID
from detection.cluster import VARIANT_ALIASES, detect_cluster
from detection.errors import InvalidInputError
from detection.lrt import DEFAULT_ELRT_RUNS, DEFAULT_MIN_SEG, detect_lrt, process_cache
from detection.parallel import replicate_map
from detection.series import CHANGE_POINT_CONVENTION
from detection.thresholds import ThresholdProfile
from simulation.synthetic import SyntheticSpec, change_locations, generate

logger = logging.getLogger(__name__)

PRECISION_KS = (0, 1, 2, 5, 10, 15, 25)
FULL_SCALE_REPS = 1000


class ExperimentGrid(BaseModel):
    """Axes and detector options of one benchmark run."""

    method: Literal["cluster", "lrt"]
    m: int = Field(200, ge=2)
    changes: List[int] = Field(default_factory=lambda: [1, 2, 3, 4], description="R values")
    deltas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0, 4.0, 5.0])
    reps: int = Field(FULL_SCALE_REPS, ge=1, description="Replications per cell")
    lambda0: float = Field(1.0, gt=0.0)
    variant: str = "agglomerative"
    transform: Union[Literal["auto", "off"], float] = "auto"
    policy: Literal["pooled", "series", "none"] = "pooled"
    boxcox_grid: Tuple[float, float, float] = DEFAULT_GRID
    elrt_runs: int = Field(DEFAULT_ELRT_RUNS, ge=1)
    min_seg: int = Field(DEFAULT_MIN_SEG, ge=1)
    elrt_seed: Optional[int] = Field(None, description="Seed of the Elrt tables (defaults to seed)")
    thresholds: ThresholdProfile
    seed: int = 0
    precision_ks: List[int] = Field(default_factory=lambda: list(PRECISION_KS))

    @field_validator("variant")
    @classmethod
    def _known_variant(cls, value: str) -> str:
        if value not in VARIANT_ALIASES:
            raise ValueError(f"unknown clustering variant {value!r}")
        return VARIANT_ALIASES[value]

    @model_validator(mode="after")
    def _check_cells(self) -> "ExperimentGrid":
        if any(r < 0 or r >= self.m for r in self.changes):
            raise ValueError(f"every R must lie in [0, m-1], got {self.changes}")
        if any(d < 0 for d in self.deltas):
            raise ValueError("deltas must be nonnegative")
        if sorted(set(self.precision_ks)) != list(self.precision_ks):
            raise ValueError("precision_ks must be strictly increasing")
        return self

    @staticmethod
    def reps_for_scale(scale: float) -> int:
        """Replications per cell at a fraction of full scale (1000 reps)."""
        if scale <= 0:
            raise InvalidInputError(f"scale must be positive, got {scale}")
        return max(1, int(round(FULL_SCALE_REPS * scale)))

    def cells(self) -> List[Tuple[int, float]]:
        return [(r, d) for r in self.changes for d in self.deltas]


class ChangePointEstimate(BaseModel):
    """Mean estimate of the j-th true change point over the replications that found it."""

    index: int = Field(..., ge=1)
    true_location: int
    mean: Optional[float] = None
    sd: Optional[float] = None
    se: Optional[float] = Field(None, description="sd / sqrt(detected)")
    detected: int
    missed: int


class PrecisionCurve(BaseModel):
    """P(|estimate - tau_j| <= k) over all replications, one entry per k."""

    index: int = Field(..., ge=1)
    true_location: int
    probabilities: Dict[int, float]

    @model_validator(mode="after")
    def _monotone(self) -> "PrecisionCurve":
        values = [self.probabilities[k] for k in sorted(self.probabilities)]
        if any(not 0.0 <= p <= 1.0 for p in values):
            raise ValueError("probabilities must lie in [0, 1]")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("precision must be nondecreasing in k")
        return self


class CellResult(BaseModel):
    """Outcome of one (R, delta) cell."""

    method: Literal["cluster", "lrt"]
    variant: Optional[str] = None
    transform: Optional[str] = None
    changes: int
    delta: float
    reps: int
    true_change_points: List[int]
    estimates: List[ChangePointEstimate]
    detection_histogram: Dict[int, int] = Field(..., description="Replications with q detected changes")
    precision: List[PrecisionCurve]

    @property
    def detection_frequency(self) -> float:
        """Share of replications with at least one detection."""
        return 1.0 - self.detection_histogram.get(0, 0) / self.reps


class GridReport(BaseModel):
    """All cells of a grid plus what is needed to rerun it."""

    grid: ExperimentGrid
    cells: List[CellResult]
    convention: str = CHANGE_POINT_CONVENTION


def match_estimates(detected: Sequence[int], taus: Sequence[int]) -> List[Optional[int]]:
    """
    Assign one replication's estimates to the true change points 1..R.

    The first R detections in detection order are kept and sorted. With R of
    them they pair by rank. With fewer, each goes to a distinct true change
    point, order preserved, so that the total absolute error is smallest; on
    ties the later change point wins.

    Returns:
        One entry per true change point, None where nothing was assigned
    """
    changes = len(taus)
    kept = sorted(int(e) for e in detected[:changes])
    q = len(kept)
    if q == changes:
        return list(kept)

    cost = np.full((q + 1, changes + 1), np.inf)
    cost[0, :] = 0.0
    use = np.zeros((q + 1, changes + 1), dtype=bool)
    for i in range(1, q + 1):
        for j in range(i, changes + 1):
            skip = cost[i, j - 1]
            take = cost[i - 1, j - 1] + abs(kept[i - 1] - taus[j - 1])
            use[i, j] = take <= skip
            cost[i, j] = min(take, skip)

    matched: List[Optional[int]] = [None] * changes
    i, j = q, changes
    while i > 0:
        if use[i, j]:
            matched[j - 1] = kept[i - 1]
            i -= 1
        j -= 1
    return matched


def cell_seed(master_seed: int, changes: int, delta: float) -> np.random.SeedSequence:
    """Seed of a cell; depends on (R, delta) only, so methods see the same data."""
    return np.random.SeedSequence(master_seed, spawn_key=(changes, int(round(delta * 1000))))


def detect_change_points(grid: ExperimentGrid, series) -> List[int]:
    """Change points of one series in the order the detector found them."""
    if grid.method == "cluster":
        result = detect_cluster(series, grid.thresholds, grid.transform, grid.variant,
                                grid.policy, grid=grid.boxcox_grid)
    else:
        elrt_seed = grid.seed if grid.elrt_seed is None else grid.elrt_seed
        result = detect_lrt(series, grid.thresholds, process_cache(grid.elrt_runs, grid.min_seg, elrt_seed))
    return result.detection_order


def _cell_rep(seed: np.random.SeedSequence, grid: ExperimentGrid, spec: SyntheticSpec) -> List[int]:
    series, _ = generate(spec, seed)
    return detect_change_points(grid, series)


def summarize_cell(
    grid: ExperimentGrid,
    changes: int,
    delta: float,
    taus: Sequence[int],
    detections: Sequence[Sequence[int]],
) -> CellResult:
    """Match every replication's detections to taus and reduce them to a CellResult."""
    reps = len(detections)
    if reps == 0:
        raise InvalidInputError("a cell needs at least one replication")
    paired = np.array([[np.nan if e is None else e for e in match_estimates(d, taus)]
                       for d in detections], dtype=float).reshape(reps, changes)

    estimates, curves = [], []
    for j, tau in enumerate(taus):
        column = paired[:, j]
        found = column[~np.isnan(column)]
        n = found.size
        sd = float(np.std(found, ddof=1)) if n > 1 else None
        estimates.append(ChangePointEstimate(
            index=j + 1,
            true_location=int(tau),
            mean=float(found.mean()) if n else None,
            sd=sd,
            se=sd / math.sqrt(n) if sd is not None else None,
            detected=int(n),
            missed=int(reps - n),
        ))
        # NaN never compares true, so missed replications count as "not within k"
        error = np.abs(column - tau)
        curves.append(PrecisionCurve(
            index=j + 1,
            true_location=int(tau),
            probabilities={k: float(np.sum(error <= k)) / reps for k in grid.precision_ks},
        ))

    counts = [len(d) for d in detections]
    histogram = {q: counts.count(q) for q in sorted(set(counts))}
    return CellResult(
        method=grid.method,
        variant=grid.variant if grid.method == "cluster" else None,
        transform=str(grid.transform) if grid.method == "cluster" else None,
        changes=changes,
        delta=delta,
        reps=reps,
        true_change_points=list(taus),
        estimates=estimates,
        detection_histogram=histogram,
        precision=curves,
    )


def run_cell(
    grid: ExperimentGrid,
    changes: int,
    delta: float,
    threads: int = 1,
    progress: bool = True,
) -> CellResult:
    """
    Generate, detect and score grid.reps series with R changes of size delta.

    Args:
        grid: Axes and detector options (only its scalar settings are used)
        changes: R
        delta: Mean shift
        threads: Worker processes

    Returns:
        CellResult for the cell
    """
    spec = SyntheticSpec(m=grid.m, changes=changes, lambda0=grid.lambda0, delta=delta,
                         placement="equal", seed=grid.seed)
    seeds = cell_seed(grid.seed, changes, delta).spawn(grid.reps)
    fn = partial(_cell_rep, grid=grid, spec=spec)
    detections = replicate_map(fn, seeds, threads, desc=f"R={changes} delta={delta}", progress=progress)
    taus = change_locations(spec)
    result = summarize_cell(grid, changes, delta, taus, detections)
    logger.info(
        f"{grid.method} R={changes} delta={delta}: means "
        f"{[None if e.mean is None else round(e.mean, 1) for e in result.estimates]}"
    )
    return result


def run_grid(grid: ExperimentGrid, threads: int = 1, progress: bool = True) -> GridReport:
    """Every cell of the grid, R outer and delta inner."""
    cells = [run_cell(grid, r, d, threads, progress) for r, d in grid.cells()]
    return GridReport(grid=grid, cells=cells)
