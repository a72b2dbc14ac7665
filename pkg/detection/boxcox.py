"""
Box-Cox power transformation and exponent estimation.

The exponent is chosen on a grid so that the spread of the profile-normalized
transform z(eta) = x(eta) / GM(x)^(eta - 1) is smallest, GM being the
geometric mean of the raw data. Without the normalization the raw spread of
x(eta) would always favour the most negative eta.

The spread is measured from successive differences, sqrt(sum dz^2 / 2(m-1)),
so it reflects variability within stretches of constant mean; a shift in
level contributes a single difference. For independent observations it
estimates the same standard deviation as the sample sd.
"""

import logging
from typing import Tuple, Union

import numpy as np
from scipy import special

from .errors import DomainError, InvalidInputError
from .series import ObservationSeries

logger = logging.getLogger(__name__)

DEFAULT_GRID: Tuple[float, float, float] = (-2.0, 2.0, 0.01)

# Below this magnitude eta is treated as exactly 0 (log branch)
ETA_ZERO_TOLERANCE = 1e-10

# Objective values within this relative distance of the minimum count as ties
_TIE_TOLERANCE = 1e-12


def transform(x: Union[float, np.ndarray], eta: float) -> Union[float, np.ndarray]:
    """
    Box-Cox transform of positive values.

    Args:
        x: A positive scalar or array
        eta: Exponent; |eta| < 1e-10 uses the natural log branch

    Returns:
        (x**eta - 1) / eta, or ln x when eta is 0, with the shape of x
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("Box-Cox transform needs strictly positive values")
    if abs(eta) < ETA_ZERO_TOLERANCE:
        out = np.log(arr)
    else:
        out = special.boxcox(arr, eta)
    return float(out) if out.ndim == 0 else out


def transform_series(series: ObservationSeries, eta: float) -> ObservationSeries:
    """Apply the transform to every observation; order is preserved."""
    return series.mapped(transform(series.values, eta))


def eta_grid(grid: Tuple[float, float, float] = DEFAULT_GRID) -> np.ndarray:
    lo, hi, step = grid
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi and step > 0):
        raise InvalidInputError(f"malformed eta grid {grid}; need lo < hi and step > 0")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    # Rounding keeps grid points such as 0.24 exact enough to report
    return np.round(lo + step * np.arange(count), 10)


def normalized_spread(values: np.ndarray, eta: float, log_gm: float) -> float:
    """Successive-difference spread of the transform divided by GM^(eta - 1)."""
    z = transform(values, eta) / np.exp((eta - 1.0) * log_gm)
    if z.size < 2 or np.all(z == z[0]):
        return 0.0
    return float(np.sqrt(np.sum(np.diff(z) ** 2) / (2.0 * (z.size - 1))))


def estimate_eta(
    series: ObservationSeries,
    grid: Tuple[float, float, float] = DEFAULT_GRID,
) -> float:
    """
    Grid-search the Box-Cox exponent that minimizes the normalized spread.

    Ties are broken toward the eta closest to 0, then the smaller eta, so a
    constant series returns 0.

    Args:
        series: Strictly positive observations
        grid: (lo, hi, step) of the search grid

    Returns:
        The selected exponent
    """
    if series.m < 1:
        raise InvalidInputError("cannot estimate eta for an empty series")
    series.require_positive()
    points = eta_grid(grid)
    log_gm = float(np.mean(np.log(series.values)))

    objective = np.array([normalized_spread(series.values, eta, log_gm) for eta in points])
    best = objective.min()
    tied = np.flatnonzero(objective <= best + _TIE_TOLERANCE * max(1.0, abs(best)))
    # lexsort sorts by the last key first: |eta|, then eta
    order = np.lexsort((points[tied], np.abs(points[tied])))
    eta = float(points[tied][order[0]])
    logger.debug(f"estimated Box-Cox eta={eta} (objective {best:.6g}, {tied.size} tied points)")
    return eta
