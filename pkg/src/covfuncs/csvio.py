"""CSV reading and writing helpers.

All files are RFC-4180-style, UTF-8, '.' decimal separator.  Matrices are
p rows of p comma-separated decimals with no header; samples are n rows of
p values with an optional single header row (auto-detected).
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

__all__ = ["write_matrix_csv", "read_matrix_csv", "read_sample_csv",
           "write_rows_csv", "format_value", "read_panel_csvs"]


def format_value(v: object) -> str:
    """Stable, locale-independent cell formatting."""
    if isinstance(v, float) or isinstance(v, np.floating):
        return f"{float(v):.12g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_matrix_csv(path: "str | Path", entries: np.ndarray) -> None:
    entries = np.asarray(entries, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in entries:
            writer.writerow([format_value(v) for v in row])


def read_matrix_csv(path: "str | Path") -> np.ndarray:
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix CSV must be square, got {m.shape}")
    return m


def _is_numeric_row(fields: Sequence[str]) -> bool:
    try:
        for f in fields:
            float(f)
    except ValueError:
        return False
    return len(fields) > 0


def read_sample_csv(path: "str | Path") -> np.ndarray:
    """Read an n x p sample, skipping a single header row if present."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        first = fh.readline()
    skip = 0 if _is_numeric_row(next(csv.reader(io.StringIO(first)))) else 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return data


def write_rows_csv(path: "str | Path", header: Sequence[str],
                   rows: Iterable[Sequence[object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_panel_csvs(returns_path: "str | Path", factors_path: "str | Path",
                    ) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
    """Join a returns CSV and a factors CSV on their date column.

    Both files carry a leading date column plus one column per asset or
    factor.  Returns (dates, asset_ids, returns T x N, factors T x K),
    inner-joined on date and sorted by date.
    """
    rets = pd.read_csv(returns_path)
    facs = pd.read_csv(factors_path)
    date_col_r, date_col_f = rets.columns[0], facs.columns[0]
    rets[date_col_r] = rets[date_col_r].astype(str)
    facs[date_col_f] = facs[date_col_f].astype(str)
    merged = rets.merge(facs, left_on=date_col_r, right_on=date_col_f,
                        how="inner", suffixes=("", "_factor"))
    merged = merged.sort_values(date_col_r).reset_index(drop=True)
    if merged.empty:
        raise ValueError("returns and factors share no dates")
    asset_ids = [c for c in rets.columns[1:]]
    factor_ids = [c for c in facs.columns[1:]]
    dates = merged[date_col_r].tolist()
    r = merged[[c for c in asset_ids]].to_numpy(dtype=np.float64)
    f = merged[[c if c in merged.columns else f"{c}_factor"
                for c in factor_ids]].to_numpy(dtype=np.float64)
    return dates, asset_ids, r, f
