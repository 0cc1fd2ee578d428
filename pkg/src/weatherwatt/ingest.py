"""Sensor CSV ingestion, timestamp alignment and chronological splitting.

Timestamps are held as integer UTC epoch seconds. Every frame produced here
is sorted, free of duplicate timestamps and has a value in every cell.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from weatherwatt.errors import IngestError

log = logging.getLogger(__name__)

TIMESTAMP = "timestamp"
FEATURE = "feature"
TARGET = "target"
ROLES = (FEATURE, TARGET)
DEFAULT_MAX_SHIFT_MINUTES = 60


def parse_timestamp(text: str) -> int:
    """ISO-8601 string to UTC epoch seconds; naive times are taken as UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    # sub-second precision is truncated, not rounded
    return int(dt.replace(microsecond=0).timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class SensorReading(NamedTuple):
    timestamp: int
    values: dict[str, float]

    @property
    def iso(self) -> str:
        return format_timestamp(self.timestamp)


@dataclass(frozen=True, eq=False)
class TimeSeriesFrame:
    """Timestamp-indexed table of named float columns tagged feature or target."""

    timestamps: np.ndarray
    columns: tuple[str, ...]
    values: np.ndarray
    roles: Mapping[str, str]
    dropped: int = 0
    duplicates: int = 0
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64).reshape(-1)
        vals = np.array(self.values, dtype=np.float64).reshape(ts.size, len(self.columns))
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("frame has missing or non-finite values")
        missing = [c for c in self.columns if c not in self.roles]
        if missing:
            raise ValueError(f"no role given for columns {missing}")
        bad = {r for r in self.roles.values() if r not in ROLES}
        if bad:
            raise ValueError(f"unknown roles {sorted(bad)}")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "roles", {c: self.roles[c] for c in self.columns})
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesFrame):
            return NotImplemented
        return (
            self.columns == other.columns
            and self.roles == other.roles
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    @property
    def n(self) -> int:
        return len(self)

    @property
    def features(self) -> list[str]:
        return [c for c in self.columns if self.roles[c] == FEATURE]

    @property
    def targets(self) -> list[str]:
        return [c for c in self.columns if self.roles[c] == TARGET]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no column {name!r}") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.columns.index(nm) for nm in names]
        return self.values[:, idx]

    def rows(self) -> Iterator[SensorReading]:
        for ts, row in zip(self.timestamps.tolist(), self.values.tolist()):
            yield SensorReading(ts, dict(zip(self.columns, row)))

    def iso_timestamps(self) -> list[str]:
        return [format_timestamp(t) for t in self.timestamps.tolist()]

    def require_roles(self) -> None:
        """Check that at least one feature and one target column exist."""
        if not self.features:
            raise IngestError("frame has no feature columns")
        if not self.targets:
            raise IngestError("frame has no target columns")

    def take(self, idx) -> TimeSeriesFrame:
        """Subset of rows by slice, index array or boolean mask (order kept)."""
        return TimeSeriesFrame(
            self.timestamps[idx], self.columns, self.values[idx], self.roles,
        )

    def median_step_seconds(self) -> float | None:
        if self.n < 2:
            return None
        return float(np.median(np.diff(self.timestamps)))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([TIMESTAMP, *self.columns])
            for ts, row in zip(self.timestamps.tolist(), self.values.tolist()):
                w.writerow([format_timestamp(ts), *(repr(v) for v in row)])
        return path


def _warn(msg: str, sink: list[str]) -> None:
    log.warning(msg)
    sink.append(msg)


def _parse_float(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def parse_csv(path, schema: Mapping[str, str]) -> TimeSeriesFrame:
    """Read one sensor stream.

    Every non-timestamp header column must appear in ``schema`` (a mapping of
    column name to ``feature``/``target``); the file may carry a subset of the
    schema's columns. Rows with a bad timestamp or any empty/unparseable value
    are dropped and counted in ``frame.dropped``. Duplicate timestamps keep the
    first occurrence in file order.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"no such file: {path}")
    warnings: list[str] = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if TIMESTAMP not in header:
            raise IngestError(f"{path}: missing '{TIMESTAMP}' column")
        if len(set(header)) != len(header):
            raise IngestError(f"{path}: duplicate column names in header")
        ts_idx = header.index(TIMESTAMP)
        columns = [h for h in header if h != TIMESTAMP]
        unknown = [c for c in columns if c not in schema]
        if unknown:
            raise IngestError(f"{path}: columns {unknown} are not in the role schema")
        val_idx = [header.index(c) for c in columns]

        stamps: list[int] = []
        rows: list[list[float]] = []
        dropped = 0
        for record in reader:
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != len(header):
                dropped += 1
                continue
            try:
                ts = parse_timestamp(record[ts_idx])
            except ValueError:
                dropped += 1
                continue
            vals = [_parse_float(record[i]) for i in val_idx]
            if any(v is None for v in vals):
                dropped += 1
                continue
            stamps.append(ts)
            rows.append(vals)

    if dropped:
        _warn(f"{path}: dropped {dropped} incomplete or unparseable rows", warnings)
    ts_arr = np.asarray(stamps, dtype=np.int64)
    vals_arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(columns))
    ts_arr, vals_arr, dups = _sort_dedupe(ts_arr, vals_arr)
    if dups:
        _warn(f"{path}: {dups} duplicate timestamps, kept first occurrence", warnings)
    return TimeSeriesFrame(
        ts_arr, tuple(columns), vals_arr, {c: schema[c] for c in columns},
        dropped=dropped, duplicates=dups, warnings=tuple(warnings),
    )


def _sort_dedupe(ts: np.ndarray, vals: np.ndarray):
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    keep = np.ones(ts.size, dtype=bool)
    keep[1:] = ts[1:] != ts[:-1]
    return ts[keep], vals[keep], int(ts.size - keep.sum())


def _check_shift(delta_minutes: float, max_minutes: float) -> int:
    if abs(delta_minutes) > max_minutes:
        raise IngestError(
            f"shift of {delta_minutes} min exceeds the {max_minutes} min maximum"
        )
    return int(round(delta_minutes * 60))


def shift_timestamps(
    frame: TimeSeriesFrame,
    delta_minutes: float,
    max_minutes: float = DEFAULT_MAX_SHIFT_MINUTES,
) -> TimeSeriesFrame:
    """Translate every timestamp by ``delta_minutes`` (signed)."""
    delta = _check_shift(delta_minutes, max_minutes)
    return TimeSeriesFrame(
        frame.timestamps + delta, frame.columns, frame.values, frame.roles,
        dropped=frame.dropped, duplicates=frame.duplicates, warnings=frame.warnings,
    )


def shift_unmatched(
    stream: TimeSeriesFrame,
    reference: TimeSeriesFrame,
    delta_minutes: float,
    max_minutes: float = DEFAULT_MAX_SHIFT_MINUTES,
) -> TimeSeriesFrame:
    """Shift only the rows of ``stream`` whose timestamp is absent from ``reference``.

    Rows already aligned with the reference keep their time. If a shifted row
    lands on an existing timestamp, the row that was already there wins.
    """
    delta = _check_shift(delta_minutes, max_minutes)
    unmatched = ~np.isin(stream.timestamps, reference.timestamps)
    if delta == 0 or not unmatched.any():
        return stream
    ts = np.where(unmatched, stream.timestamps + delta, stream.timestamps)
    # matched rows sort ahead of shifted ones at equal times, so they survive dedupe
    order = np.lexsort((unmatched, ts))
    ts_sorted, vals_sorted = ts[order], stream.values[order]
    keep = np.ones(ts_sorted.size, dtype=bool)
    keep[1:] = ts_sorted[1:] != ts_sorted[:-1]
    collisions = int(ts_sorted.size - keep.sum())
    warnings = list(stream.warnings)
    if collisions:
        _warn(f"{collisions} shifted rows collided with existing timestamps", warnings)
    return TimeSeriesFrame(
        ts_sorted[keep], stream.columns, vals_sorted[keep], stream.roles,
        dropped=stream.dropped, duplicates=stream.duplicates + collisions,
        warnings=tuple(warnings),
    )


def align_join(weather: TimeSeriesFrame, power: TimeSeriesFrame) -> TimeSeriesFrame:
    """Inner join on exact timestamp equality; weather columns come first."""
    clash = set(weather.columns) & set(power.columns)
    if clash:
        raise IngestError(f"columns {sorted(clash)} appear in both streams")
    common, wi, pi = np.intersect1d(
        weather.timestamps, power.timestamps, assume_unique=True, return_indices=True
    )
    warnings = list(weather.warnings) + list(power.warnings)
    if common.size == 0:
        _warn("aligned frame is empty: the streams share no timestamps", warnings)
    values = np.hstack([weather.values[wi], power.values[pi]])
    roles = {**weather.roles, **power.roles}
    return TimeSeriesFrame(
        common, weather.columns + power.columns, values, roles,
        dropped=weather.dropped + power.dropped,
        duplicates=weather.duplicates + power.duplicates,
        warnings=tuple(warnings),
    )


def split_chronological(
    frame: TimeSeriesFrame, train_fraction: float
) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """First ceil(fraction * n) rows train, the rest test. Never shuffles."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must be in (0, 1), got {train_fraction}")
    n = frame.n
    if n < 2:
        raise IngestError(f"cannot split a frame of {n} rows")
    # rounding guards against products like 0.7 * 10 = 7.000000000000001
    n_train = math.ceil(round(train_fraction * n, 9))
    if n_train >= n:
        raise IngestError(
            f"{n} rows at train fraction {train_fraction} leave no test rows"
        )
    return frame.take(slice(0, n_train)), frame.take(slice(n_train, n))


def load_streams(
    weather_path,
    power_path,
    schema: Mapping[str, str],
    shift_minutes: float = 0.0,
    shift_mode: str = "unmatched",
    max_shift_minutes: float = DEFAULT_MAX_SHIFT_MINUTES,
) -> TimeSeriesFrame:
    """Parse both streams, apply the power-timestamp correction and join.

    ``shift_mode`` is ``"unmatched"`` (shift only power rows with no weather
    partner) or ``"all"`` (shift the whole power stream).
    """
    weather = parse_csv(weather_path, schema)
    power = parse_csv(power_path, schema)
    if shift_mode == "all":
        power = shift_timestamps(power, shift_minutes, max_shift_minutes)
    elif shift_mode == "unmatched":
        power = shift_unmatched(power, weather, shift_minutes, max_shift_minutes)
    else:
        raise IngestError(f"unknown shift mode {shift_mode!r}")
    return align_join(weather, power)


def read_frame(path, schema: Mapping[str, str]) -> TimeSeriesFrame:
    """Load an already aligned single-file frame (as written by ``to_csv``)."""
    return parse_csv(path, schema)
