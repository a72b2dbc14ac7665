"""
Reading and writing observation series.

Input files hold one value per line, or CSV with an optional header row.
Blank lines and lines starting with '#' are skipped. "-" means stdin/stdout.
"""

import io
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO, Union

import pandas as pd

from detection.errors import InvalidInputError
from detection.series import CHANGE_POINT_CONVENTION, ObservationSeries
from simulation.synthetic import RNG_ALGORITHM, SyntheticSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_series(text: str, column: Optional[str] = None, source: str = "<input>") -> ObservationSeries:
    """
    Parse series text.

    Args:
        text: File contents
        column: Column name or 1-based column number for multi-column CSV;
            defaults to the only column, else a column named "value"
        source: Name used in error messages

    Returns:
        ObservationSeries in file order
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InvalidInputError(f"{source}: no observations found")

    first = [tok.strip() for tok in lines[0].split(",")]
    has_header = not all(_is_number(tok) for tok in first)
    try:
        df = pd.read_csv(io.StringIO("\n".join(lines)), header=0 if has_header else None,
                         skipinitialspace=True, float_precision="round_trip")
    except pd.errors.ParserError as e:
        raise InvalidInputError(f"{source}: malformed CSV ({e})") from e

    if column is not None:
        if column in df.columns.astype(str):
            values = df[df.columns[list(df.columns.astype(str)).index(column)]]
        elif column.isdigit() and 1 <= int(column) <= df.shape[1]:
            values = df.iloc[:, int(column) - 1]
        else:
            raise InvalidInputError(f"{source}: no column {column!r}")
    elif df.shape[1] == 1:
        values = df.iloc[:, 0]
    elif "value" in df.columns.astype(str):
        values = df["value"]
    else:
        raise InvalidInputError(f"{source}: {df.shape[1]} columns; choose one with --column")

    numeric = pd.to_numeric(values, errors="coerce")
    if numeric.isna().any():
        bad = int(numeric.isna().to_numpy().argmax())
        raise InvalidInputError(f"{source}: non-numeric value {values.iloc[bad]!r} in row {bad + 1}")
    return ObservationSeries(numeric.to_numpy(dtype=float))


def read_series(source: PathLike, column: Optional[str] = None, stdin: Optional[TextIO] = None) -> ObservationSeries:
    """Read a series from a path or from stdin when source is "-"."""
    if str(source) == "-":
        return parse_series((stdin or sys.stdin).read(), column, "<stdin>")
    path = Path(source)
    series = parse_series(path.read_text(encoding="utf-8"), column, str(path))
    logger.debug(f"read {series.m} observations from {path}")
    return series


def format_series(series: ObservationSeries) -> str:
    return "".join(f"{v:.17g}\n" for v in series.values)


def write_series(series: ObservationSeries, target: PathLike, stdout: Optional[TextIO] = None) -> None:
    """One value per line with round-trip precision."""
    text = format_series(series)
    if str(target) == "-":
        (stdout or sys.stdout).write(text)
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_runchart(series: ObservationSeries, path: PathLike) -> Path:
    """(index, value) pairs for plotting the series against arrival order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({"index": range(1, series.m + 1), "value": series.values})
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def sidecar_path(series_path: PathLike) -> Path:
    path = Path(series_path)
    return path.with_name(path.name + ".meta.json")


def sidecar_payload(spec: SyntheticSpec, taus: List[int], means: List[float]) -> dict:
    return {
        "spec": spec.model_dump(mode="json"),
        "true_change_points": list(taus),
        "segment_means": list(means),
        "rng": RNG_ALGORITHM,
        "seed": spec.seed,
        "convention": CHANGE_POINT_CONVENTION,
    }


def write_sidecar(path: PathLike, spec: SyntheticSpec, taus: List[int], means: List[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sidecar_payload(spec, taus, means), indent=2) + "\n", encoding="utf-8")
    return path
