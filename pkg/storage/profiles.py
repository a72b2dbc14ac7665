"""ThresholdProfile JSON files."""

import logging
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from detection.errors import InvalidInputError
from detection.thresholds import ThresholdProfile

logger = logging.getLogger(__name__)


def save_profile(profile: ThresholdProfile, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(profile.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"wrote {profile.g}-level {profile.provenance.kind} profile to {path}")
    return path


def load_profile(path: Union[str, Path]) -> ThresholdProfile:
    """Read a profile written by save_profile (or by hand with the same fields)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return ThresholdProfile.model_validate_json(text)
    except ValidationError as e:
        raise InvalidInputError(f"{path}: not a valid threshold profile\n{e}") from e
