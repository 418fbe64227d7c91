"""Shared time-axis and CSV helpers for the 15-minute sampled series used everywhere.

All series in this package live on a uniform 900 s grid.  Timestamps are naive
local datetimes written as ISO-8601 strings; loaders validate the fixed spacing.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta

import numpy as np

STEP_SECONDS = 900
STEPS_PER_HOUR = 4
STEPS_PER_DAY = 96


def time_axis(start: datetime, n: int, step_s: int = STEP_SECONDS) -> list[datetime]:
    """n timestamps spaced step_s seconds apart, starting at start."""
    return [start + timedelta(seconds=step_s * i) for i in range(n)]


def hour_of_day(ts: datetime) -> float:
    """Local clock time as a fractional hour (0.0 <= h < 24.0)."""
    return ts.hour + ts.minute / 60.0 + ts.second / 3600.0


def parse_timestamp(text: str) -> datetime:
    return datetime.fromisoformat(text)


def validate_spacing(timestamps: list[datetime], step_s: int = STEP_SECONDS) -> None:
    """Raise ValueError unless timestamps are uniformly step_s apart."""
    for i in range(1, len(timestamps)):
        got = (timestamps[i] - timestamps[i - 1]).total_seconds()
        if got != step_s:
            raise ValueError(
                f"non-uniform sampling at row {i}: expected {step_s} s, got {got:.0f} s"
            )


def fmt_float(x: float) -> str:
    """Shortest string that round-trips the float exactly (deterministic)."""
    return repr(float(x))


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def read_csv(path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != expected_header:
            raise ValueError(
                f"bad CSV header in {path}: expected {expected_header}, got {header}"
            )
        return [row for row in r]


def as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr
