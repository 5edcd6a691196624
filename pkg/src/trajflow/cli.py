"""Command line entry point: ``trajflow <command> [flags]``.

Every command resolves its settings from built-in defaults, then an
optional ``--config`` JSON file, then explicit flags, and writes the
resolved settings to ``config.json`` beside its outputs.

Commands
--------
partition      group seed points into cells, write the cell table and polygons
build-graphs   partition, then measure flows and write per-slice graphs
detect         build graphs, then segment the series and write the report
sweep          edge counts per slice over a grid of speed thresholds
synth          write a synthetic trajectory set with a planted regime schedule
export         render each segment of a detect run as a partitioned text matrix

Exit codes are 0 on success, 1 for bad input or configuration and 2 when an
internal consistency check fails.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import flowgraph, ingest, mdl, partition, synth
from .errors import ConfigError, InputError, InvariantError, TrajflowError
from .geo import CRS

logger = logging.getLogger("trajflow")

SCHEDULES = {
    "three-regime": synth.three_regime_schedule,
    "full-day": synth.full_day_schedule,
    "star-flip": synth.star_flip_schedule,
}


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    crs: str = CRS.PLANAR.value
    schema: dict = field(default_factory=lambda: dataclasses.asdict(ingest.Schema()))
    delimiter: str = ","
    day_start: float | str | None = None
    day_end: float | str | None = None
    min_trip_m: float = 3000.0
    gamma_m: float = 3000.0
    delta_t_s: float = 3600.0
    method: str = flowgraph.EdgeMethod.ALL.value
    vc_kmh: float | None = None
    seed_mode: str = "all"
    sweep: str | None = None
    out: str = "out"
    # synth only
    seed: int = 0
    n_regions: int = 20
    schedule: str | list = "three-regime"
    trips_per_pair: int = 2
    noise_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "crs", CRS.parse(self.crs).value)
        object.__setattr__(self, "method", flowgraph.EdgeMethod.parse(self.method).value)
        if self.seed_mode not in partition.SEED_MODES:
            raise ConfigError(f"seed_mode must be one of {partition.SEED_MODES}")
        for name in ("gamma_m", "delta_t_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.min_trip_m < 0:
            raise ConfigError("min_trip_m must be non-negative")
        if self.method != "all" and (self.vc_kmh is None or not self.vc_kmh > 0):
            raise ConfigError(f"method {self.method} needs a positive vc_kmh")
        if self.sweep is not None:
            parse_sweep(self.sweep)
        unknown = set(self.schema) - {"traj_id", "x", "y", "t"}
        if unknown:
            raise ConfigError(f"unknown schema keys {sorted(unknown)}")

    @classmethod
    def resolve(cls, file: str | None, overrides: dict) -> "PipelineConfig":
        values: dict = {}
        if file:
            try:
                with open(file, encoding="utf-8") as fp:
                    values = json.load(fp)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {file}: {exc}") from exc
            if not isinstance(values, dict):
                raise ConfigError("config file must hold a JSON object")
            known = {f.name for f in dataclasses.fields(cls)}
            bad = set(values) - known
            if bad:
                raise ConfigError(f"unknown config keys {sorted(bad)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_sweep(text: str) -> list[float]:
    """``start:stop:step`` with inclusive stop, e.g. ``5:80:5``."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"sweep must look like start:stop:step, got {text!r}") from None
    if not (step > 0 and 0 < start <= stop):
        raise ConfigError(f"bad sweep range {text!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, writer, *args) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer(*args, fp)


def _echo_config(cfg: PipelineConfig, out: Path, name: str = "config.json") -> None:
    with open(out / name, "w", encoding="utf-8") as fp:
        json.dump(cfg.to_dict(), fp, indent=2, sort_keys=True)
        fp.write("\n")


def load(cfg: PipelineConfig) -> ingest.Dataset:
    """Read and filter the input; an empty result is an input error."""
    if not cfg.input:
        raise InputError("no --input given")
    if not Path(cfg.input).is_file():
        raise InputError(f"input {cfg.input} is not a readable file")
    ds = ingest.read_input(cfg.input, ingest.Schema(**cfg.schema), cfg.crs, delimiter=cfg.delimiter,
                           day_start=cfg.day_start, day_end=cfg.day_end)
    if not ds.trajectories:
        raise InputError(f"no usable trajectories in {cfg.input}")
    kept = ingest.filter_short(ds, cfg.min_trip_m)
    logger.info("%d of %d trajectories longer than %g m", len(kept), len(ds), cfg.min_trip_m)
    if not kept.trajectories:
        raise InputError(f"no trajectory in {cfg.input} is longer than {cfg.min_trip_m} m")
    return kept


def run_partition(cfg: PipelineConfig, ds: ingest.Dataset, out: Path) -> partition.CellSet:
    seeds = partition.seed_points(ds, cfg.seed_mode)
    cells = partition.group_seed_points(seeds, cfg.gamma_m, ds.crs)
    bbox = (*seeds.min(axis=0), *seeds.max(axis=0))
    polygons = partition.build_voronoi(cells, bbox, margin=cfg.gamma_m)
    _write_text(out / "cells.csv", partition.write_cell_table, cells)
    _write_text(out / "cells.geojson", partition.write_geojson, cells, polygons)
    return cells


def run_graphs(cfg: PipelineConfig, ds: ingest.Dataset, cells, out: Path):
    axis = ingest.build_slice_axis(ds, cfg.delta_t_s)
    flows = flowgraph.measure_flows(ds, cells, axis)
    series = flowgraph.build_graph_series(flows, cfg.method, cfg.vc_kmh)
    _write_text(out / "flows.csv", flowgraph.write_flows, flows)
    _write_text(out / "edges.csv", flowgraph.write_edge_list, series)
    dot = out / "dot"
    dot.mkdir(exist_ok=True)
    for snap in series.snapshots:
        _write_text(dot / f"slice_{snap.slice:03d}.dot", flowgraph.write_dot, snap)
    return flows, series


def run_sweep(cfg: PipelineConfig, flows, out: Path) -> list:
    rows = flowgraph.sweep_table(flows, parse_sweep(cfg.sweep or "5:80:5"))
    _write_text(out / "sweep.csv", flowgraph.write_sweep, rows)
    return rows


def cmd_partition(cfg: PipelineConfig) -> partition.CellSet:
    ds = load(cfg)
    out = _out_dir(cfg)
    _echo_config(cfg, out)
    cells = run_partition(cfg, ds, out)
    print(f"cells: {len(cells)}")
    return cells


def cmd_build_graphs(cfg: PipelineConfig):
    ds = load(cfg)
    out = _out_dir(cfg)
    _echo_config(cfg, out)
    cells = run_partition(cfg, ds, out)
    flows, series = run_graphs(cfg, ds, cells, out)
    print(f"cells: {len(cells)}  slices: {len(series)}  edges: {sum(series.edge_counts())}")
    return series


def cmd_detect(cfg: PipelineConfig) -> mdl.ChangePointReport:
    ds = load(cfg)
    out = _out_dir(cfg)
    _echo_config(cfg, out)
    cells = run_partition(cfg, ds, out)
    flows, series = run_graphs(cfg, ds, cells, out)
    if cfg.sweep:
        run_sweep(cfg, flows, out)
    report = mdl.detect_change_points(series)
    _check_report(report, len(series))
    _write_text(out / "report.json", mdl.write_report, report)
    print(f"cells: {len(cells)}  slices: {report.T}  change points: {list(report.change_points)}")
    return report


def cmd_sweep(cfg: PipelineConfig) -> list:
    ds = load(cfg)
    out = _out_dir(cfg)
    _echo_config(cfg, out)
    cells = run_partition(cfg, ds, out)
    axis = ingest.build_slice_axis(ds, cfg.delta_t_s)
    rows = run_sweep(cfg, flowgraph.measure_flows(ds, cells, axis), out)
    print(f"sweep rows: {len(rows)}")
    return rows


def synth_params(cfg: PipelineConfig) -> synth.SynthParams:
    if isinstance(cfg.schedule, str):
        if cfg.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {sorted(SCHEDULES)} or a list of regimes")
        schedule = SCHEDULES[cfg.schedule]()
    else:
        schedule = synth.schedule_from_dicts(cfg.schedule)
    return synth.SynthParams(n_regions=cfg.n_regions, schedule=schedule, trips_per_pair=cfg.trips_per_pair,
                             noise_rate=cfg.noise_rate, delta_t=cfg.delta_t_s, seed=cfg.seed)


def cmd_synth(cfg: PipelineConfig) -> ingest.Dataset:
    params = synth_params(cfg)
    ds = synth.generate(params)
    out = _out_dir(cfg)
    _echo_config(cfg, out)
    _write_text(out / "trajectories.csv", synth.write_csv, ds)
    planted = {
        "T": params.T,
        "change_points": list(params.change_points),
        "day_start": params.day_start,
        "day_end": params.day_end,
        "edges": [sorted(p) for p in synth.planted_pairs(params)],
    }
    with open(out / "planted.json", "w", encoding="utf-8") as fp:
        json.dump(planted, fp, indent=2, sort_keys=True)
        fp.write("\n")
    print(f"trajectories: {len(ds)}  slices: {params.T}  planted change points: {list(params.change_points)}")
    return ds


def _read_edges(path: Path, T: int, n: int) -> np.ndarray:
    A = np.zeros((T, n, n), dtype=bool)
    with open(path, encoding="utf-8", newline="") as fp:
        for row in csv.DictReader(fp):
            A[int(row["t"]), int(row["i"]), int(row["j"])] = True
    return A


def cmd_export(cfg: PipelineConfig) -> str:
    """Text view of every segment of the detect run stored in ``--input`` (a directory)."""
    src = Path(cfg.input or "")
    if not (src / "report.json").is_file() or not (src / "edges.csv").is_file():
        raise InputError(f"{src} does not hold report.json and edges.csv from a detect run")
    with open(src / "report.json", encoding="utf-8") as fp:
        report = mdl.read_report(fp)
    A = _read_edges(src / "edges.csv", report.T, report.n)
    parts = []
    for seg in report.segments:
        stack = A[seg.first_slice:seg.last_slice + 1]
        parts.append(f"slices {seg.first_slice}-{seg.last_slice}  k={seg.partitioning.k} "
                     f"l={seg.partitioning.l}  {seg.cost_per_hour:.2f} bits/h\n")
        parts.append(mdl.format_partitioned_matrix(stack, seg.partitioning) + "\n")
    text = "\n".join(parts)
    out = _out_dir(cfg)
    # export usually writes into the detect directory; keep that run's config.json intact
    _echo_config(cfg, out, "export.config.json")
    (out / "segments.txt").write_text(text, encoding="utf-8")
    print(f"segments: {len(report.segments)}")
    return text


def _check_report(report: mdl.ChangePointReport, T: int) -> None:
    if report.T != T:
        raise InvariantError(f"report covers {report.T} slices, series has {T}")
    if list(report.change_points) != sorted(set(report.change_points)):
        raise InvariantError("change points are not strictly increasing")


COMMANDS = {
    "partition": cmd_partition,
    "build-graphs": cmd_build_graphs,
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--input", help="trajectory file (.csv or .jsonl); for export, a detect output directory")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--crs", choices=["planar", "geographic"])
    common.add_argument("--gamma-m", dest="gamma_m", type=float, help="cell radius in meters (default 3000)")
    common.add_argument("--delta-t-s", dest="delta_t_s", type=float, help="slice width in seconds (default 3600)")
    common.add_argument("--min-trip-m", dest="min_trip_m", type=float,
                        help="drop trajectories not longer than this (default 3000)")
    common.add_argument("--method", choices=["all", "low", "high"])
    common.add_argument("--vc-kmh", dest="vc_kmh", type=float, help="speed threshold for low/high")
    common.add_argument("--sweep", help="threshold grid start:stop:step in km/h, e.g. 5:80:5")
    common.add_argument("--seed-mode", dest="seed_mode", choices=list(partition.SEED_MODES))
    common.add_argument("--delimiter")
    common.add_argument("--day-start", dest="day_start", help="window start, epoch seconds or ISO-8601")
    common.add_argument("--day-end", dest="day_end", help="window end, epoch seconds or ISO-8601")
    common.add_argument("--seed", type=int, help="synth: random seed")
    common.add_argument("--n-regions", dest="n_regions", type=int, help="synth: number of regions")
    common.add_argument("--schedule", help=f"synth: one of {sorted(SCHEDULES)}")
    common.add_argument("--trips-per-pair", dest="trips_per_pair", type=int, help="synth: trips per planted pair")
    common.add_argument("--noise-rate", dest="noise_rate", type=float, help="synth: noise trips per planted pair")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trajflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").split("\n")[0] or None)
    return parser


def _day_bound(value):
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        return value


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    overrides["day_start"] = _day_bound(overrides["day_start"])
    overrides["day_end"] = _day_bound(overrides["day_end"])
    try:
        cfg = PipelineConfig.resolve(args.config, overrides)
        COMMANDS[args.command](cfg)
    except InvariantError as exc:
        print(f"trajflow: internal error: {exc}", file=sys.stderr)
        return 2
    except (TrajflowError, OSError) as exc:
        print(f"trajflow: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything unexpected is a bug, not bad input
        logger.debug("unhandled", exc_info=True)
        print(f"trajflow: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
