"""Per-slice directed flow graphs between cells.

Each trajectory becomes a sequence of cell visits. Every ordered pair of
visits to distinct cells is a sub-trajectory from the earlier cell to the
later one, attributed to the slice in which it left the earlier cell.
Sub-trajectories sharing (origin, destination, slice) are pooled into a
space-mean (Edie) speed, and the speed decides whether the pair becomes an
edge under the low-speed or high-speed rule.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError
from .geo import CRS, step_lengths
from .ingest import Dataset, SliceAxis, Trajectory
from .partition import CellSet, assign_region

logger = logging.getLogger(__name__)

MS_TO_KMH = 3.6


class EdgeMethod(str, enum.Enum):
    ALL = "all"
    LOW = "low_speed"
    HIGH = "high_speed"

    @classmethod
    def parse(cls, value: "EdgeMethod | str") -> "EdgeMethod":
        if isinstance(value, EdgeMethod):
            return value
        aliases = {"low": cls.LOW, "high": cls.HIGH}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            raise ConfigError(f"unknown edge method {value!r}") from None


class Visit(NamedTuple):
    cell: int
    entry_time: float
    exit_time: float
    first: int  # index of the first point of the run
    last: int   # index of the last point of the run


@dataclass(frozen=True)
class VisitSequence:
    traj_id: str
    visits: tuple[Visit, ...]

    @property
    def cells(self) -> list[int]:
        return [v.cell for v in self.visits]

    def __len__(self) -> int:
        return len(self.visits)


class SubTrajectory(NamedTuple):
    traj_id: str
    origin: int
    dest: int
    slice: int
    d: float    # meters
    tau: float  # seconds


class FlowMeasure(NamedTuple):
    i: int
    j: int
    slice: int
    count: int
    sum_d: float
    sum_tau: float
    v: float  # km/h


def region_visit_sequence(traj: Trajectory, cells: CellSet) -> VisitSequence:
    """Collapse each maximal run of points in one cell into a single visit."""
    ids = assign_region(traj.xy, cells)
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
    ends = np.r_[starts[1:] - 1, len(ids) - 1]
    visits = tuple(Visit(int(ids[a]), float(traj.t[a]), float(traj.t[b]), int(a), int(b))
                   for a, b in zip(starts, ends))
    return VisitSequence(traj.id, visits)


def _extract(vs: VisitSequence, traj: Trajectory, axis: SliceAxis,
             crs: CRS) -> tuple[list[SubTrajectory], int]:
    cum = np.r_[0.0, np.cumsum(step_lengths(traj.xy, crs))]
    out = []
    dropped = 0
    visits = vs.visits
    for a, va in enumerate(visits):
        t_slice = axis.slice_index(va.exit_time)
        for vb in visits[a + 1:]:
            if vb.cell == va.cell:
                continue
            tau = vb.entry_time - va.exit_time
            if tau <= 0:
                tau = vb.entry_time - va.entry_time
            if tau <= 0:
                dropped += 1
                continue
            d = float(cum[vb.first] - cum[va.last])
            out.append(SubTrajectory(vs.traj_id, va.cell, vb.cell, t_slice, d, float(tau)))
    return out, dropped


def extract_subtrajectories(vs: VisitSequence, traj: Trajectory, axis: SliceAxis,
                            crs: CRS | str = CRS.PLANAR) -> list[SubTrajectory]:
    """All ordered cell-to-cell sub-trajectories of one trajectory.

    For visits ``a < b`` in different cells, distance is the path length from
    the last point of ``a`` to the first point of ``b`` and duration is the
    gap between leaving ``a`` and entering ``b`` (falling back to entry-to-entry
    when that gap is zero). Pairs with no elapsed time at all are skipped.
    """
    subs, dropped = _extract(vs, traj, axis, CRS.parse(crs))
    if dropped:
        logger.debug("trajectory %s: %d zero-duration pairs skipped", vs.traj_id, dropped)
    return subs


def edie_speed(flows: Sequence[SubTrajectory]) -> FlowMeasure | None:
    """Pooled speed of sub-trajectories sharing origin, destination and slice.

    Total distance over total time, in km/h. Returns None for an empty list
    or zero total time.
    """
    if not flows:
        return None
    keys = {(f.origin, f.dest, f.slice) for f in flows}
    if len(keys) != 1:
        raise ValueError(f"flows mix several (origin, dest, slice) keys: {sorted(keys)[:3]}")
    i, j, t = keys.pop()
    sum_d = math.fsum(f.d for f in flows)
    sum_tau = math.fsum(f.tau for f in flows)
    if sum_tau <= 0:
        logger.warning("pair %d->%d in slice %d has zero total travel time; dropped", i, j, t)
        return None
    return FlowMeasure(i, j, t, len(flows), sum_d, sum_tau, sum_d / sum_tau * MS_TO_KMH)


@dataclass(frozen=True)
class FlowTable:
    """Every flow measure of a dataset, sorted by (slice, i, j)."""

    measures: tuple[FlowMeasure, ...]
    n: int
    axis: SliceAxis
    dropped_pairs: int = 0

    def by_slice(self) -> list[list[FlowMeasure]]:
        out: list[list[FlowMeasure]] = [[] for _ in range(self.axis.T)]
        for m in self.measures:
            out[m.slice].append(m)
        return out


def measure_flows(ds: Dataset, cells: CellSet, axis: SliceAxis) -> FlowTable:
    """Extract sub-trajectories from every trajectory and pool them per (i, j, slice)."""
    groups: dict[tuple[int, int, int], list[SubTrajectory]] = defaultdict(list)
    dropped = 0
    for traj in ds.trajectories:
        vs = region_visit_sequence(traj, cells)
        subs, n_drop = _extract(vs, traj, axis, ds.crs)
        dropped += n_drop
        for s in subs:
            groups[(s.origin, s.dest, s.slice)].append(s)
    measures = []
    for key in sorted(groups, key=lambda k: (k[2], k[0], k[1])):
        m = edie_speed(groups[key])
        if m is not None:
            measures.append(m)
    if dropped:
        logger.info("%d zero-duration visit pairs skipped", dropped)
    return FlowTable(tuple(measures), len(cells), axis, dropped)


@dataclass(frozen=True)
class GraphSnapshot:
    slice: int
    n: int
    edges: frozenset

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
        object.__setattr__(self, "edges", edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        if self.edges:
            ij = np.array(sorted(self.edges))
            a[ij[:, 0], ij[:, 1]] = True
        return a

    def __len__(self) -> int:
        return len(self.edges)


def _keep(v: float, method: EdgeMethod, v_c: float | None) -> bool:
    if method is EdgeMethod.ALL:
        return True
    return v <= v_c if method is EdgeMethod.LOW else v > v_c


def build_snapshot(measures: Iterable[FlowMeasure], n: int, method: EdgeMethod | str = EdgeMethod.ALL,
                   v_c: float | None = None, slice: int | None = None) -> GraphSnapshot:
    """Binary snapshot for one slice.

    ``all`` keeps every measured pair; ``low_speed`` keeps pairs with speed
    at most ``v_c`` km/h and ``high_speed`` those strictly above it.
    """
    method = EdgeMethod.parse(method)
    if method is not EdgeMethod.ALL and not (v_c is not None and v_c > 0):
        raise ConfigError(f"{method.value} needs a positive v_c, got {v_c}")
    measures = list(measures)
    slices = {m.slice for m in measures}
    if len(slices) > 1:
        raise ValueError("measures span several slices")
    if slice is None:
        slice = slices.pop() if slices else 0
    elif slices and slices != {slice}:
        raise ValueError(f"measures are not for slice {slice}")
    edges = frozenset((m.i, m.j) for m in measures if m.i != m.j and _keep(m.v, method, v_c))
    return GraphSnapshot(slice, n, edges)


@dataclass(frozen=True)
class GraphSeries:
    snapshots: tuple[GraphSnapshot, ...]
    axis: SliceAxis
    method: EdgeMethod = EdgeMethod.ALL
    v_c: float | None = None

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if [s.slice for s in snaps] != list(range(self.axis.T)):
            raise ValueError("need exactly one snapshot per slice, in order")
        if len({s.n for s in snaps}) > 1:
            raise ValueError("snapshots disagree on vertex count")
        object.__setattr__(self, "snapshots", snaps)

    @property
    def n(self) -> int:
        return self.snapshots[0].n if self.snapshots else 0

    def __len__(self) -> int:
        return len(self.snapshots)

    def adjacency(self) -> np.ndarray:
        """Stacked (T, n, n) boolean adjacency matrices."""
        if not self.snapshots:
            return np.zeros((0, 0, 0), dtype=bool)
        return np.stack([s.adjacency() for s in self.snapshots])

    def edge_counts(self) -> list[int]:
        return [len(s) for s in self.snapshots]


def build_graph_series(flows: FlowTable, method: EdgeMethod | str = EdgeMethod.ALL,
                       v_c: float | None = None) -> GraphSeries:
    method = EdgeMethod.parse(method)
    snaps = tuple(build_snapshot(ms, flows.n, method, v_c, slice=t)
                  for t, ms in enumerate(flows.by_slice()))
    return GraphSeries(snaps, flows.axis, method, None if method is EdgeMethod.ALL else v_c)


class SweepRow(NamedTuple):
    method: str
    v_c: float
    t: int
    edges: int
    relative_edges: float


def sweep_table(flows: FlowTable, thresholds: Sequence[float],
                methods: Sequence[EdgeMethod | str] = (EdgeMethod.LOW, EdgeMethod.HIGH)) -> list[SweepRow]:
    """Edge counts per (method, threshold, slice), absolute and relative to the series maximum."""
    if not len(thresholds):
        raise ConfigError("threshold list is empty")
    per_slice = flows.by_slice()
    rows = []
    for method in map(EdgeMethod.parse, methods):
        for v_c in thresholds:
            counts = [sum(1 for m in ms if m.i != m.j and _keep(m.v, method, v_c)) for ms in per_slice]
            peak = max(counts) if counts else 0
            for t, c in enumerate(counts):
                rows.append(SweepRow(method.value, float(v_c), t, c, c / peak if peak else 0.0))
    return rows


def edge_count_sweep(ds: Dataset, cells: CellSet, axis: SliceAxis, thresholds: Sequence[float],
                     methods: Sequence[EdgeMethod | str] = (EdgeMethod.LOW, EdgeMethod.HIGH)) -> list[SweepRow]:
    return sweep_table(measure_flows(ds, cells, axis), thresholds, methods)


def write_flows(flows: FlowTable, fp: IO[str]) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["t", "i", "j", "count", "sum_d_m", "sum_tau_s", "v_kmh"])
    for m in flows.measures:
        w.writerow([m.slice, m.i, m.j, m.count, repr(m.sum_d), repr(m.sum_tau), repr(m.v)])


def write_edge_list(series: GraphSeries, fp: IO[str]) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["t", "i", "j"])
    for snap in series.snapshots:
        for i, j in sorted(snap.edges):
            w.writerow([snap.slice, i, j])


def write_dot(snapshot: GraphSnapshot, fp: IO[str]) -> None:
    fp.write(f"digraph slice_{snapshot.slice} {{\n")
    for v in range(snapshot.n):
        fp.write(f"  {v};\n")
    for i, j in sorted(snapshot.edges):
        fp.write(f"  {i} -> {j};\n")
    fp.write("}\n")


def write_sweep(rows: Iterable[SweepRow], fp: IO[str]) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["method", "v_c", "t", "edges", "relative_edges"])
    for r in rows:
        w.writerow([r.method, repr(r.v_c), r.t, r.edges, repr(r.relative_edges)])
