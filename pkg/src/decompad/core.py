"""Series containers, CSV ingestion, splitting and windowing."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

DEFAULT_WINDOW = 240


class DataError(ValueError):
    """Input data that violates a container or file contract."""


class ParseError(DataError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64).reshape(-1)
        vs = np.array(self.values, dtype=np.float64).reshape(-1)
        if ts.shape != vs.shape:
            raise DataError(
                f"timestamps ({ts.size}) and values ({vs.size}) differ in length")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            bad = int(np.argmax(np.diff(ts) <= 0)) + 1
            raise DataError(f"timestamps not strictly increasing at index {bad}")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vs))

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_values(cls, values: Sequence[float], start: int = 0) -> "TimeSeries":
        values = np.asarray(values, dtype=np.float64)
        return cls(np.arange(start, start + values.size), values)


@dataclass(frozen=True)
class LabeledSeries:
    series: TimeSeries
    labels: np.ndarray

    def __post_init__(self):
        lab = np.array(self.labels, dtype=bool).reshape(-1)
        if lab.size != len(self.series):
            raise DataError(
                f"labels ({lab.size}) and values ({len(self.series)}) differ in length")
        object.__setattr__(self, "labels", _frozen(lab))

    def __len__(self) -> int:
        return len(self.series)

    @property
    def values(self) -> np.ndarray:
        return self.series.values

    @property
    def timestamps(self) -> np.ndarray:
        return self.series.timestamps

    @classmethod
    def from_arrays(cls, values, labels=None, timestamps=None) -> "LabeledSeries":
        values = np.asarray(values, dtype=np.float64)
        if timestamps is None:
            timestamps = np.arange(values.size)
        if labels is None:
            labels = np.zeros(values.size, dtype=bool)
        return cls(TimeSeries(timestamps, values), labels)

    def with_values(self, values) -> "LabeledSeries":
        """Same timestamps and labels, new values."""
        return LabeledSeries(TimeSeries(self.timestamps, values), self.labels)

    def with_labels(self, labels) -> "LabeledSeries":
        return LabeledSeries(self.series, labels)

    def slice(self, start: int, stop: int) -> "LabeledSeries":
        return LabeledSeries(
            TimeSeries(self.timestamps[start:stop], self.values[start:stop]),
            self.labels[start:stop])


@dataclass(frozen=True)
class WindowView:
    start: int
    length: int = DEFAULT_WINDOW

    @property
    def stop(self) -> int:
        return self.start + self.length

    def take(self, a: np.ndarray) -> np.ndarray:
        return a[self.start:self.stop]


# -- CSV -----------------------------------------------------------------

DEFAULT_SCHEMA = {"timestamp": 0, "value": 1, "label": 2}


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path: Union[str, os.PathLike, io.TextIOBase],
             schema: Optional[Mapping[str, Union[int, str]]] = None) -> LabeledSeries:
    """Read a ``timestamp,value[,is_anomaly]`` file.

    The header row is optional and detected by a non-numeric first field.
    ``schema`` maps ``timestamp``/``value``/``label`` to column positions or
    header names; a missing label column yields all-false labels. Row numbers
    in errors are 1-based data rows (the header is not counted).
    """
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path, newline="") as fh:
            text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    by_name = schema is None
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)

    header = None
    if rows and not _is_number(rows[0][0].strip()):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]

    def resolve(key: str, aliases: Tuple[str, ...]) -> Optional[int]:
        col = schema.get(key)
        if isinstance(col, str):
            if header is None or col not in header:
                raise DataError(f"column {col!r} not in header")
            return header.index(col)
        if header is not None and (col is None or by_name):
            for name in aliases:
                if name in header:
                    return header.index(name)
        return col

    i_ts = resolve("timestamp", ("timestamp", "time", "ts"))
    i_val = resolve("value", ("value",))
    i_lab = resolve("label", ("is_anomaly", "label", "anomaly"))
    if header is not None and i_lab is not None and i_lab >= len(header):
        i_lab = None
    if by_name and header is not None and i_lab == 2 and len(header) > 2 \
            and header[2] not in ("is_anomaly", "label", "anomaly"):
        i_lab = None

    ts, vals, labs = [], [], []
    for n, row in enumerate(rows, start=1):
        try:
            t = row[i_ts].strip()
            v = row[i_val].strip()
        except IndexError:
            raise ParseError(n, f"expected at least {max(i_ts, i_val) + 1} columns")
        try:
            tf = float(t)
        except ValueError:
            raise ParseError(n, f"non-numeric timestamp {t!r}")
        if tf != int(tf):
            raise ParseError(n, f"timestamp {t!r} is not an integer")
        try:
            vals.append(float(v))
        except ValueError:
            raise ParseError(n, f"non-numeric value {v!r}")
        ts.append(int(tf))
        if i_lab is not None and i_lab < len(row) and row[i_lab].strip() != "":
            s = row[i_lab].strip().lower()
            if s in ("1", "1.0", "true"):
                labs.append(True)
            elif s in ("0", "0.0", "false"):
                labs.append(False)
            else:
                raise ParseError(n, f"label must be 0/1, got {row[i_lab]!r}")
        else:
            labs.append(False)
    return LabeledSeries(TimeSeries(ts, vals), labs)


def save_csv(s: LabeledSeries, path, extra: Optional[Mapping[str, Sequence]] = None,
             header: bool = True) -> None:
    """Write ``timestamp,value,is_anomaly`` plus any extra score columns.

    Floats are written with ``repr`` so a load/save round trip is exact.
    """
    extra = dict(extra or {})
    for name, col in extra.items():
        if len(col) != len(s):
            raise DataError(f"column {name!r} has length {len(col)}, expected {len(s)}")
    cols = ["timestamp", "value", "is_anomaly", *extra]
    lines = [",".join(cols)] if header else []
    ex = [np.asarray(c) for c in extra.values()]
    for i in range(len(s)):
        fields = [str(int(s.timestamps[i])), repr(float(s.values[i])),
                  "1" if s.labels[i] else "0"]
        for c in ex:
            v = c[i]
            fields.append(str(int(v)) if isinstance(v, (bool, np.bool_)) else repr(float(v)))
        lines.append(",".join(fields))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# -- splitting and windows -----------------------------------------------

def split_train_test(s: LabeledSeries) -> Tuple[LabeledSeries, LabeledSeries]:
    """Left half for training, right half for testing; odd lengths give the extra point to test."""
    n = len(s)
    if n < 2:
        raise DataError(f"cannot split a series of length {n}")
    h = n // 2
    return s.slice(0, h), s.slice(h, n)


def concat(parts: Sequence[LabeledSeries]) -> LabeledSeries:
    return LabeledSeries(
        TimeSeries(np.concatenate([p.timestamps for p in parts]),
                   np.concatenate([p.values for p in parts])),
        np.concatenate([p.labels for p in parts]))


def sliding_windows(s, w: int = DEFAULT_WINDOW, stride: int = 1) -> Iterator[WindowView]:
    """Windows ``[i, i+w)`` for ``i = 0, stride, ...`` while they fit.

    ``s`` may be a series or a plain length. Yields nothing when ``w`` exceeds it.
    """
    n = s if isinstance(s, (int, np.integer)) else len(s)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if w < 1:
        raise ValueError("window length must be >= 1")
    for i in range(0, n - w + 1, stride):
        yield WindowView(i, w)


def window_count(n: int, w: int, stride: int = 1) -> int:
    return 0 if w > n else (n - w) // stride + 1


def mad(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.median(np.abs(x - np.median(x)))) if x.size else 0.0


def robust_standardize(x: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Centre on the median and divide by the normal-consistent MAD (last axis)."""
    x = np.asarray(x, dtype=np.float64)
    med = np.median(x, axis=-1, keepdims=True)
    scale = 1.4826 * np.median(np.abs(x - med), axis=-1, keepdims=True)
    return (x - med) / np.maximum(scale, floor)
