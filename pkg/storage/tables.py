"""CSV and Markdown table writers."""

from pathlib import Path
from typing import Union

import pandas as pd


def markdown_table(df: pd.DataFrame, float_format: str = "{:.4g}") -> str:
    """
    Render a DataFrame as a GitHub-style pipe table.

    Args:
        df: Table to render; the index is not written
        float_format: Format applied to float cells

    Returns:
        Markdown text ending with a newline
    """
    def cell(value) -> str:
        if value is None or (isinstance(value, float) and pd.isna(value)):
            return ""
        if isinstance(value, float):
            return float_format.format(value)
        return str(value)

    header = [str(c) for c in df.columns]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for row in df.itertuples(index=False):
        lines.append("| " + " | ".join(cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
    return path


def write_markdown(df: pd.DataFrame, path: Union[str, Path], title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = (f"# {title}\n\n" if title else "") + markdown_table(df)
    path.write_text(text, encoding="utf-8")
    return path
