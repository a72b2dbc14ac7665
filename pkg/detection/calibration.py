"""
Monte Carlo calibration of decision thresholds.

Null series are unit-mean exponential. For each level the threshold is the
nearest-rank 100(1 - alpha) percentile of that level's statistic over the
null replicates, so by Bonferroni the overall false detection probability is
at most the sum of the alphas.
"""

import logging
from functools import partial
from typing import Optional, Sequence, Tuple

import numpy as np

from config.settings import DEFAULT_ALPHAS

from .boxcox import DEFAULT_GRID, transform_series
from .cluster import TransformOption, VariancePolicy, build_trace, resolve_eta
from .errors import InvalidInputError
from .lrt import DEFAULT_ELRT_RUNS, DEFAULT_MIN_SEG, process_cache, segment_statistics
from .parallel import replicate_map, spawn_seeds
from .series import ObservationSeries
from .thresholds import Provenance, ThresholdProfile, nearest_rank, validate_alphas

logger = logging.getLogger(__name__)


def null_series(seed: np.random.SeedSequence, m: int) -> ObservationSeries:
    """A homogeneous unit-mean exponential series."""
    rng = np.random.default_rng(seed)
    return ObservationSeries(rng.exponential(1.0, size=m))


def _cluster_null_rep(
    seed: np.random.SeedSequence,
    m: int,
    g: int,
    transform: TransformOption,
    variant: str,
    policy: VariancePolicy,
    grid: Tuple[float, float, float],
) -> np.ndarray:
    series = null_series(seed, m)
    eta = resolve_eta(series, transform, grid)
    work = series if eta is None else transform_series(series, eta)
    return np.array(build_trace(work, variant, policy).distances[:g])


def cluster_null_statistics(
    m: int,
    g: int,
    count: int,
    rng_seed: int,
    transform: TransformOption = None,
    variant: str = "agglomerative",
    policy: VariancePolicy = "pooled",
    grid: Tuple[float, float, float] = DEFAULT_GRID,
    threads: int = 1,
    progress: bool = True,
) -> np.ndarray:
    """
    d_1*..d_g* of count null series.

    Returns:
        Array of shape (count, g)
    """
    if g > m - 1:
        raise InvalidInputError(f"g={g} levels need m >= {g + 1}, got m={m}")
    fn = partial(_cluster_null_rep, m=m, g=g, transform=transform, variant=variant,
                 policy=policy, grid=grid)
    rows = replicate_map(fn, spawn_seeds(rng_seed, count), threads,
                         desc="cluster null", progress=progress)
    return np.vstack(rows)


def _lrt_null_rep(
    seed: np.random.SeedSequence,
    m: int,
    g: int,
    elrt_runs: int,
    min_seg: int,
    elrt_seed: int,
) -> np.ndarray:
    series = null_series(seed, m)
    recorded = segment_statistics(series, process_cache(elrt_runs, min_seg, elrt_seed), g, min_seg)
    row = np.full(g, np.nan)
    for index, stat in recorded.items():
        row[index - 1] = stat
    return row


def lrt_null_statistics(
    m: int,
    g: int,
    count: int,
    rng_seed: int,
    elrt_runs: int = DEFAULT_ELRT_RUNS,
    min_seg: int = DEFAULT_MIN_SEG,
    elrt_seed: Optional[int] = None,
    threads: int = 1,
    progress: bool = True,
) -> np.ndarray:
    """
    Record-mode max lrt* of tests 1..g for count null series.

    Returns:
        Array of shape (count, g); NaN where a test was not possible
    """
    elrt_seed = rng_seed if elrt_seed is None else elrt_seed
    fn = partial(_lrt_null_rep, m=m, g=g, elrt_runs=elrt_runs, min_seg=min_seg, elrt_seed=elrt_seed)
    rows = replicate_map(fn, spawn_seeds(rng_seed, count), threads,
                         desc="lrt null", progress=progress)
    return np.vstack(rows)


def thresholds_from_sample(sample: np.ndarray, alphas: Sequence[float]) -> Tuple[list, list]:
    """Per-level nearest-rank thresholds and the number of present values behind each."""
    thresholds, sizes = [], []
    for j, alpha in enumerate(alphas):
        column = sample[:, j]
        column = column[~np.isnan(column)]
        if column.size == 0:
            raise InvalidInputError(f"no null statistics recorded for level {j + 1}")
        thresholds.append(nearest_rank(column, alpha))
        sizes.append(int(column.size))
        logger.debug(f"level {j + 1}: H={thresholds[-1]:.4f} from {column.size} values")
    return thresholds, sizes


def calibrate_cluster(
    m: int,
    g: int = 7,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    reps: int = 100,
    sets: int = 100,
    rng_seed: int = 0,
    transform_eta: TransformOption = None,
    variant: str = "agglomerative",
    policy: VariancePolicy = "pooled",
    grid: Tuple[float, float, float] = DEFAULT_GRID,
    threads: int = 1,
    progress: bool = True,
) -> ThresholdProfile:
    """
    Thresholds for the clustering detector from sets x reps null series.

    Args:
        m: Series length
        g: Number of levels
        alphas: Per-level false detection probabilities
        reps: Null series per set
        sets: Number of sets
        rng_seed: Master seed
        transform_eta: Box-Cox option applied to each null series ("auto", a number, or None)
        variant: Clustering variant the thresholds are meant for
        policy: Cluster variance policy of the detector
        grid: Exponent grid when transform_eta is "auto"
        threads: Worker processes

    Returns:
        ThresholdProfile with provenance "calibrated"
    """
    alphas = validate_alphas(alphas, g)
    if reps < 1 or sets < 1:
        raise InvalidInputError("reps and sets must be positive")
    sample = cluster_null_statistics(m, g, reps * sets, rng_seed, transform_eta, variant,
                                     policy, grid, threads, progress)
    thresholds, sizes = thresholds_from_sample(sample, alphas)
    logger.info(f"calibrated cluster thresholds for m={m}: {np.round(thresholds, 4).tolist()}")
    return ThresholdProfile.from_values(
        alphas,
        thresholds,
        Provenance(kind="calibrated", seed=rng_seed, reps=reps, sets=sets),
        method="cluster",
        series_length=m,
        sample_sizes=sizes,
        options={"transform": transform_eta, "variant": variant, "policy": policy},
    )


def calibrate_lrt(
    m: int,
    g: int = 7,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    reps: int = 10000,
    rng_seed: int = 0,
    elrt_runs: int = DEFAULT_ELRT_RUNS,
    min_seg: int = DEFAULT_MIN_SEG,
    elrt_seed: Optional[int] = None,
    threads: int = 1,
    progress: bool = True,
) -> ThresholdProfile:
    """
    Thresholds for the likelihood ratio detector from record-mode null runs.

    Levels whose test never ran (parent segment too short) are left out of
    that level's sample; each level reports its own sample size. Tests no null
    run reached are dropped from the end of the profile with a warning.
    """
    alphas = validate_alphas(alphas, g)
    if reps < 1:
        raise InvalidInputError("reps must be positive")
    elrt_seed = rng_seed if elrt_seed is None else elrt_seed
    sample = lrt_null_statistics(m, g, reps, rng_seed, elrt_runs, min_seg, elrt_seed,
                                 threads, progress)
    possible = int(np.sum(~np.all(np.isnan(sample), axis=0)))
    if possible == 0:
        raise InvalidInputError(f"a series of {m} observations admits no test with min_seg={min_seg}")
    if possible < g:
        logger.warning(f"only {possible} of {g} tests are reachable for m={m}, truncating the profile")
        sample, alphas = sample[:, :possible], alphas[:possible]
    thresholds, sizes = thresholds_from_sample(sample, alphas)
    logger.info(f"calibrated lrt thresholds for m={m}: {np.round(thresholds, 4).tolist()}")
    return ThresholdProfile.from_values(
        alphas,
        thresholds,
        Provenance(kind="calibrated", seed=rng_seed, reps=reps, sets=1),
        method="lrt",
        series_length=m,
        sample_sizes=sizes,
        options={"elrt_runs": elrt_runs, "min_seg": min_seg, "elrt_seed": elrt_seed},
    )


def exceedance_rates(profile: ThresholdProfile, sample: np.ndarray) -> np.ndarray:
    """Fraction of recorded statistics above H for each level (NaN ignored)."""
    rates = []
    for j in range(profile.g):
        column = sample[:, j]
        column = column[~np.isnan(column)]
        rates.append(float(np.mean(column > profile.threshold(j + 1))) if column.size else np.nan)
    return np.array(rates)


def percentile_bootstrap_se(
    sample: Sequence[float],
    alpha: float,
    n_boot: int = 200,
    rng_seed: int = 0,
) -> float:
    """Bootstrap standard error of the nearest-rank 100(1 - alpha) percentile."""
    values = np.asarray(sample, dtype=float)
    rng = np.random.default_rng(rng_seed)
    boots = [nearest_rank(rng.choice(values, size=values.size, replace=True), alpha)
             for _ in range(n_boot)]
    return float(np.std(boots, ddof=1))
