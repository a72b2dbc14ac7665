"""Accuracy and precision tables of a GridReport, plus the JSON bundle."""

import json
import logging
from pathlib import Path
from typing import Dict, Union

import pandas as pd

from storage.tables import write_csv, write_markdown

from .bench import GridReport

logger = logging.getLogger(__name__)


def accuracy_frame(report: GridReport) -> pd.DataFrame:
    """Long format: one row per (R, delta, j)."""
    rows = []
    for cell in report.cells:
        for est in cell.estimates:
            rows.append({
                "R": cell.changes,
                "delta": cell.delta,
                "j": est.index,
                "tau": est.true_location,
                "mean": est.mean,
                "sd": est.sd,
                "se": est.se,
                "detected": est.detected,
                "missed": est.missed,
            })
    return pd.DataFrame(rows, columns=["R", "delta", "j", "tau", "mean", "sd", "se", "detected", "missed"])


def accuracy_table(report: GridReport) -> pd.DataFrame:
    """Wide layout: rows delta, one "mean (se)" column per (R, tau_j)."""
    table: Dict[str, Dict[float, str]] = {}
    for cell in report.cells:
        for est in cell.estimates:
            key = f"R={cell.changes} tau{est.index}={est.true_location}"
            text = "-" if est.mean is None else f"{est.mean:.1f}"
            if est.se is not None:
                text += f" ({est.se:.2f})"
            table.setdefault(key, {})[cell.delta] = text
    df = pd.DataFrame(table)
    df.index.name = "delta"
    return df.reset_index()


def precision_frame(report: GridReport) -> pd.DataFrame:
    """One row per (R, j, delta) with P(|error| <= k) columns."""
    ks = report.grid.precision_ks
    rows = []
    for cell in report.cells:
        for curve in cell.precision:
            row = {"R": cell.changes, "j": curve.index, "tau": curve.true_location, "delta": cell.delta}
            for k in ks:
                row["P(=0)" if k == 0 else f"P(<={k})"] = curve.probabilities[k]
            rows.append(row)
    df = pd.DataFrame(rows)
    if not df.empty:
        df = df.sort_values(["R", "j", "delta"], kind="stable").reset_index(drop=True)
    return df


def histogram_frame(report: GridReport) -> pd.DataFrame:
    """Detection-count histogram of every cell."""
    rows = []
    for cell in report.cells:
        for q, count in cell.detection_histogram.items():
            rows.append({"R": cell.changes, "delta": cell.delta, "q": q, "count": count})
    return pd.DataFrame(rows, columns=["R", "delta", "q", "count"])


def bundle_text(report: GridReport) -> str:
    """Deterministic JSON of the whole report (no timestamps)."""
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_report(report: GridReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write accuracy.{md,csv}, precision.{md,csv}, histogram.csv and bundle.json.

    Returns:
        Mapping of artifact name to path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    method = report.grid.method
    paths = {
        "accuracy.md": write_markdown(accuracy_table(report), out / "accuracy.md",
                                      title=f"Accuracy, {method} method (mean estimate, SE)"),
        "accuracy.csv": write_csv(accuracy_frame(report), out / "accuracy.csv"),
        "precision.md": write_markdown(precision_frame(report), out / "precision.md",
                                       title=f"Precision, {method} method"),
        "precision.csv": write_csv(precision_frame(report), out / "precision.csv"),
        "histogram.csv": write_csv(histogram_frame(report), out / "histogram.csv"),
    }
    bundle = out / "bundle.json"
    bundle.write_text(bundle_text(report), encoding="utf-8")
    paths["bundle.json"] = bundle
    logger.info(f"wrote {len(paths)} report files to {out}")
    return paths
