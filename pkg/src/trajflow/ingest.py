"""Reading, validating, filtering and time-slicing raw trajectories.

Input is delimited text with one row per observed point. Rows are grouped by
trajectory id and sorted by time; malformed rows are skipped and counted
rather than aborting the whole file.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .geo import CRS, step_lengths

logger = logging.getLogger(__name__)


class TrajectoryPoint(NamedTuple):
    x: float
    y: float
    t: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered points of one moving object.

    Coordinates live in an (n, 2) array ``xy`` and timestamps (epoch seconds)
    in ``t``. Both are stored read-only.
    """

    id: str
    xy: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        t = np.array(self.t, dtype=float).reshape(-1)
        if len(xy) != len(t):
            raise ValueError(f"trajectory {self.id!r}: {len(xy)} coordinates but {len(t)} timestamps")
        if len(t) < 2:
            raise ValueError(f"trajectory {self.id!r} has fewer than 2 points")
        if not (np.isfinite(xy).all() and np.isfinite(t).all()):
            raise ValueError(f"trajectory {self.id!r} has non-finite values")
        if (t < 0).any():
            raise ValueError(f"trajectory {self.id!r} has negative timestamps")
        if (np.diff(t) < 0).any():
            raise ValueError(f"trajectory {self.id!r} is not time-ordered")
        xy.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_points(cls, id: str, points: Iterable[Sequence[float]]) -> "Trajectory":
        arr = np.asarray(list(points), dtype=float).reshape(-1, 3)
        return cls(id, arr[:, :2], arr[:, 2])

    def __len__(self) -> int:
        return len(self.t)

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [TrajectoryPoint(float(x), float(y), float(t))
                for (x, y), t in zip(self.xy, self.t)]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.id == other.id and np.array_equal(self.xy, other.xy)
                and np.array_equal(self.t, other.t))

    def __hash__(self):
        return hash((self.id, self.xy.tobytes(), self.t.tobytes()))

    def __repr__(self):
        return f"Trajectory(id={self.id!r}, n={len(self)}, t=[{self.t[0]:g}, {self.t[-1]:g}])"


@dataclass
class ParseReport:
    """Counters describing what the parser skipped or repaired."""

    rows: int = 0
    malformed_rows: int = 0
    duplicate_points: int = 0
    out_of_window_points: int = 0
    dropped_trajectories: int = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    crs: CRS = CRS.PLANAR
    day_start: float = 0.0
    day_end: float = 0.0
    report: ParseReport = field(default_factory=ParseReport)

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "crs", CRS.parse(self.crs))
        if self.day_end < self.day_start:
            raise ValueError("day_end precedes day_start")
        ids = [tr.id for tr in trajs]
        if len(set(ids)) != len(ids):
            raise ValueError("trajectory ids are not unique")
        for tr in trajs:
            if tr.t[0] < self.day_start or tr.t[-1] > self.day_end:
                raise ValueError(f"trajectory {tr.id!r} leaves the analysis window")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.crs == other.crs and self.day_start == other.day_start
                and self.day_end == other.day_end
                and self.trajectories == other.trajectories)

    def replace(self, trajectories) -> "Dataset":
        return Dataset(tuple(trajectories), self.crs, self.day_start, self.day_end, self.report)

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) over every point."""
        if not self.trajectories:
            raise ValueError("empty dataset has no bounds")
        xy = np.concatenate([tr.xy for tr in self.trajectories])
        return (*xy.min(axis=0), *xy.max(axis=0))


@dataclass(frozen=True)
class Schema:
    """Column names for the four required fields."""

    traj_id: str = "traj_id"
    x: str = "x"
    y: str = "y"
    t: str = "t"


def parse_timestamp(value) -> float:
    """Epoch seconds from a number or an ISO-8601 string (naive means UTC)."""
    if isinstance(value, (int, float)):
        return float(value)
    s = str(value).strip()
    try:
        return float(s)
    except ValueError:
        pass
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _is_numeric(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        try:
            return open(source, newline="", encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot open {source}: {exc}") from exc
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    if hasattr(source, "read"):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    raise InputError(f"unsupported input of type {type(source).__name__}")


def _read_text(source) -> str:
    fh = _open_text(source)
    try:
        return fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"unreadable input: {exc}") from exc
    finally:
        if isinstance(source, (str, os.PathLike)):
            fh.close()


def _assemble(groups: dict[str, list[tuple[float, float, float]]], crs, day_start,
              day_end, report: ParseReport) -> Dataset:
    """Sort, de-duplicate, window and validate grouped raw points."""
    if day_start is None or day_end is None:
        all_t = [p[2] for pts in groups.values() for p in pts]
        lo, hi = (min(all_t), max(all_t)) if all_t else (0.0, 0.0)
        day_start = lo if day_start is None else parse_timestamp(day_start)
        day_end = hi if day_end is None else parse_timestamp(day_end)
    else:
        day_start, day_end = parse_timestamp(day_start), parse_timestamp(day_end)
    if day_end < day_start:
        raise ConfigError("day_end precedes day_start")

    trajectories = []
    for tid, pts in groups.items():
        inside = [p for p in pts if day_start <= p[2] <= day_end]
        report.out_of_window_points += len(pts) - len(inside)
        inside.sort(key=lambda p: p[2])
        kept: list[tuple[float, float, float]] = []
        seen_at_t: set[tuple[float, float]] = set()
        for p in inside:
            if kept and kept[-1][2] != p[2]:
                seen_at_t = set()
            if (p[0], p[1]) in seen_at_t:
                report.duplicate_points += 1
                continue
            seen_at_t.add((p[0], p[1]))
            kept.append(p)
        if len(kept) < 2:
            report.dropped_trajectories += 1
            continue
        trajectories.append(Trajectory.from_points(tid, kept))

    if report.malformed_rows:
        logger.warning("skipped %d malformed rows", report.malformed_rows)
    if report.dropped_trajectories:
        logger.warning("dropped %d trajectories with fewer than 2 points",
                       report.dropped_trajectories)
    return Dataset(tuple(trajectories), CRS.parse(crs), float(day_start), float(day_end), report)


def parse_trajectories(source, schema: Schema | None = None, crs: CRS | str = CRS.PLANAR, *,
                       delimiter: str = ",", day_start=None, day_end=None) -> Dataset:
    """Parse delimited point rows into a :class:`Dataset`.

    Parameters
    ----------
    source : path, bytes, or a text/binary file object
        Delimited text with a header row.
    schema : Schema, optional
        Column names for id, x, y and timestamp.
    crs : CRS or str
        Coordinate reference of the x/y columns.
    day_start, day_end : float or ISO-8601 str, optional
        Analysis window. Points outside it are discarded (and counted). When
        omitted the window spans the observed timestamps.

    Timestamps are epoch seconds or ISO-8601 strings; the format is fixed by
    the first non-empty timestamp and rows in the other format are counted
    as malformed.
    """
    schema = schema or Schema()
    text = _read_text(source)
    report = ParseReport()
    groups: dict[str, list[tuple[float, float, float]]] = {}
    if not text.strip():
        return _assemble(groups, crs, day_start, day_end, report)

    reader = csv.DictReader(io.StringIO(text, newline=""), delimiter=delimiter)
    header = reader.fieldnames or []
    missing = [c for c in (schema.traj_id, schema.x, schema.y, schema.t) if c not in header]
    if missing:
        raise InputError(f"missing columns {missing}; header is {header}")

    numeric_time: bool | None = None
    for row in reader:
        report.rows += 1
        try:
            tid = (row[schema.traj_id] or "").strip()
            raw_t = (row[schema.t] or "").strip()
            if not tid or not raw_t:
                raise ValueError("empty field")
            if numeric_time is None:
                numeric_time = _is_numeric(raw_t)
            if _is_numeric(raw_t) != numeric_time:
                raise ValueError("mixed timestamp formats")
            x, y, t = float(row[schema.x]), float(row[schema.y]), parse_timestamp(raw_t)
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(t)) or t < 0:
                raise ValueError("non-finite or negative value")
        except (ValueError, TypeError, KeyError, AttributeError):
            report.malformed_rows += 1
            continue
        groups.setdefault(tid, []).append((x, y, t))
    return _assemble(groups, crs, day_start, day_end, report)


def dump_dataset(ds: Dataset, fp: IO[str] | None = None) -> str | None:
    """Write one JSON document per trajectory (``id``, ``points``).

    Returns the text when ``fp`` is None.
    """
    lines = []
    for tr in ds.trajectories:
        pts = [[float(x), float(y), float(t)] for (x, y), t in zip(tr.xy, tr.t)]
        lines.append(json.dumps({"id": tr.id, "points": pts}, separators=(",", ":")))
    text = "".join(line + "\n" for line in lines)
    if fp is None:
        return text
    fp.write(text)
    return None


def load_dataset(source, crs: CRS | str = CRS.PLANAR, *, day_start=None, day_end=None) -> Dataset:
    """Read the line-delimited JSON form written by :func:`dump_dataset`."""
    text = _read_text(source)
    report = ParseReport()
    groups: dict[str, list[tuple[float, float, float]]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        report.rows += 1
        try:
            doc = json.loads(line)
            pts = [(float(x), float(y), float(t)) for x, y, t in doc["points"]]
            tid = str(doc["id"])
        except (ValueError, KeyError, TypeError):
            report.malformed_rows += 1
            continue
        if tid in groups:
            report.malformed_rows += 1
            continue
        groups[tid] = pts
    return _assemble(groups, crs, day_start, day_end, report)


def read_input(path, schema: Schema | None = None, crs: CRS | str = CRS.PLANAR, *,
               delimiter: str = ",", day_start=None, day_end=None) -> Dataset:
    """Dispatch on extension: ``.jsonl``/``.ndjson`` is the canonical form, anything else is delimited."""
    if str(path).endswith((".jsonl", ".ndjson")):
        return load_dataset(path, crs, day_start=day_start, day_end=day_end)
    return parse_trajectories(path, schema, crs, delimiter=delimiter,
                              day_start=day_start, day_end=day_end)


def path_length(traj: Trajectory, crs: CRS | str = CRS.PLANAR) -> float:
    """Summed point-to-point distance in meters."""
    return math.fsum(step_lengths(traj.xy, CRS.parse(crs)))


def filter_short(ds: Dataset, min_length: float) -> Dataset:
    """Keep trajectories whose path length strictly exceeds ``min_length`` meters."""
    return ds.replace(tr for tr in ds.trajectories if path_length(tr, ds.crs) > min_length)


@dataclass(frozen=True)
class SliceAxis:
    """Fixed-width partition of the analysis window into ``T`` slices."""

    delta_t: float
    T: int
    day_start: float
    day_end: float

    @classmethod
    def from_window(cls, day_start: float, day_end: float, delta_t: float) -> "SliceAxis":
        if not delta_t > 0:
            raise ConfigError(f"delta_t must be positive, got {delta_t}")
        if day_end < day_start:
            raise ConfigError("day_end precedes day_start")
        T = max(1, math.ceil((day_end - day_start) / delta_t))
        return cls(float(delta_t), T, float(day_start), float(day_end))

    def slice_index(self, tau):
        """Slice holding timestamp ``tau`` (scalar or array).

        Only ``tau == day_end`` can land one past the last slice; it is
        clamped to ``T - 1``.
        """
        tau_arr = np.asarray(tau, dtype=float)
        if ((tau_arr < self.day_start) | (tau_arr > self.day_end)).any():
            raise ValueError("timestamp outside the analysis window")
        idx = np.floor((tau_arr - self.day_start) / self.delta_t).astype(int)
        idx = np.minimum(idx, self.T - 1)
        return int(idx) if idx.ndim == 0 else idx

    def bounds(self, t: int) -> tuple[float, float]:
        start = self.day_start + t * self.delta_t
        return start, min(start + self.delta_t, self.day_end) if t == self.T - 1 else start + self.delta_t

    def hours(self, n_slices: int = 1) -> float:
        return n_slices * self.delta_t / 3600.0


def build_slice_axis(ds: Dataset, delta_t: float) -> SliceAxis:
    return SliceAxis.from_window(ds.day_start, ds.day_end, delta_t)
