"""
CSV reports, one row per (experiment cell, k).
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from ..utils.helpers import format_float
from ..utils.logging import logger
from .metrics import MetricsReport

CSV_COLUMNS = ["method", "dataset", "epsilon", "split_ratio", "iterations", "d", "seed_count", "k", "recall", "mrr"]


def _format_epsilon(value: Optional[float]) -> str:
    if value is None or math.isinf(value):
        return "inf"
    return f"{value:g}"


def _format_ratio(value: Optional[float]) -> str:
    return "" if value is None else f"{value:g}"


def report_rows(report: MetricsReport) -> List[Dict[str, Any]]:
    """
    Flatten a report into CSV rows.

    The mrr column carries MRR@k so every row is self-contained.
    """
    meta = report.metadata
    rows = []
    for k in report.ks:
        rows.append(
            {
                "method": meta.get("method", ""),
                "dataset": meta.get("dataset", ""),
                "epsilon": _format_epsilon(meta.get("epsilon")),
                "split_ratio": _format_ratio(meta.get("split_ratio")),
                "iterations": meta.get("iterations", ""),
                "d": meta.get("d", ""),
                "seed_count": meta.get("seed_count", 1),
                "k": k,
                "recall": format_float(report.recall_at[k]),
                "mrr": format_float(report.mrr_at.get(k, 0.0)),
            }
        )
    return rows


class CsvReportWriter:
    """Single owner of one report file; rows are flushed as cells finish."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(exist_ok=True, parents=True)
        self.rows_written = 0
        pd.DataFrame(columns=CSV_COLUMNS).to_csv(self.path, index=False)

    def write(self, report: MetricsReport) -> None:
        rows = report_rows(report)
        frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
        frame.to_csv(self.path, mode="a", header=False, index=False)
        self.rows_written += len(rows)
        logger.debug(f"Flushed {len(rows)} rows to {self.path}")


def read_report(path: Union[str, Path]) -> pd.DataFrame:
    """Load a report back, keeping the epsilon column as text."""
    return pd.read_csv(path, dtype={"epsilon": str, "method": str, "dataset": str})
