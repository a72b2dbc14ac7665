"""Configuration settings for segpoint.

Handles worker limits, seeds, Monte Carlo sizes and the Box-Cox search grid.
"""

import os
from pathlib import Path
from typing import Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, field_validator

load_dotenv()

# Project root directory
ROOT_DIR = Path(__file__).parent.parent

# Default per-level false detection probabilities (Bonferroni total 0.11)
DEFAULT_ALPHAS: Tuple[float, ...] = (0.03, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01)


def _parse_grid(raw: str) -> Tuple[float, float, float]:
    lo, hi, step = (float(part) for part in raw.split(","))
    return lo, hi, step


def _parse_alphas(raw: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in raw.split(",") if part.strip())


class Settings(BaseModel):
    """Application settings loaded from environment variables."""

    # Parallelism
    threads: int = int(os.getenv("SEGPOINT_THREADS", "1"))

    # Reproducibility
    seed: int = int(os.getenv("SEGPOINT_SEED", "20240101"))

    # Likelihood ratio detector
    elrt_runs: int = int(os.getenv("SEGPOINT_ELRT_RUNS", "4000"))
    min_seg: int = int(os.getenv("SEGPOINT_MIN_SEG", "2"))

    # Decision rule
    max_changes: int = int(os.getenv("SEGPOINT_MAX_CHANGES", "7"))
    alphas: Tuple[float, ...] = _parse_alphas(
        os.getenv("SEGPOINT_ALPHAS", ",".join(str(a) for a in DEFAULT_ALPHAS))
    )

    # Threshold calibration
    calibration_sets: int = int(os.getenv("SEGPOINT_CALIBRATION_SETS", "100"))
    calibration_reps: int = int(os.getenv("SEGPOINT_CALIBRATION_REPS", "100"))
    auto_calibration_reps: int = int(os.getenv("SEGPOINT_AUTO_CALIBRATION_REPS", "1000"))

    # Box-Cox exponent grid (lo, hi, step)
    boxcox_grid: Tuple[float, float, float] = _parse_grid(
        os.getenv("SEGPOINT_BOXCOX_GRID", "-2,2,0.01")
    )

    log_level: str = os.getenv("SEGPOINT_LOG_LEVEL", "WARNING")

    @field_validator("threads", "elrt_runs", "min_seg", "max_changes",
                     "calibration_sets", "calibration_reps", "auto_calibration_reps")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be a positive integer")
        return value

    @field_validator("alphas")
    @classmethod
    def _alphas_open_unit(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(not 0.0 < a < 1.0 for a in value):
            raise ValueError(f"alphas must be a nonempty list in (0, 1), got {value}")
        return value


settings = Settings()
