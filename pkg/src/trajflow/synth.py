"""Synthetic trajectories with planted regime schedules.

Regions sit on a square grid far enough apart that each becomes exactly one
cell. A schedule is a list of regimes, each active for a run of slices:
inbound stars (many origins to one hub), outbound stars, sparse random
pairs, or silence. Every planted (origin, destination) pair in a slice
becomes trips that depart in that slice at the regime's speed; optional
noise adds trips between random pairs. All randomness comes from one seeded
generator, so a fixed seed reproduces the output byte for byte.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import ConfigError
from .geo import CRS
from .ingest import Dataset, Trajectory

KINDS = ("star_in", "star_out", "sparse", "empty")

# 2013-03-12 05:00 UTC; only the time of day matters downstream.
DEFAULT_DAY_START = 1363064400.0


@dataclass(frozen=True)
class Regime:
    kind: str
    slices: int
    hubs: tuple[int, ...] = (0,)
    spoke_fraction: float = 1.0
    density: float = 0.05
    speed_kmh: float = 15.0
    background: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"regime kind must be one of {KINDS}, got {self.kind!r}")
        if self.slices < 1:
            raise ConfigError("a regime needs at least one slice")
        if not all(0 <= v <= 1 for v in (self.spoke_fraction, self.density, self.background)):
            raise ConfigError("spoke_fraction, density and background must lie in [0, 1]")
        if not self.speed_kmh > 0:
            raise ConfigError("speed must be positive")
        object.__setattr__(self, "hubs", tuple(int(h) for h in self.hubs))


@dataclass(frozen=True)
class SynthParams:
    n_regions: int = 20
    schedule: tuple[Regime, ...] = field(default_factory=lambda: three_regime_schedule())
    trips_per_pair: int = 2
    noise_rate: float = 0.0
    noise_speed_kmh: tuple[float, float] = (10.0, 60.0)
    spacing_m: float = 10_000.0
    jitter_m: float = 300.0
    delta_t: float = 3600.0
    day_start: float = DEFAULT_DAY_START
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(self.schedule))
        if self.n_regions < 2:
            raise ConfigError("need at least two regions")
        if not self.schedule:
            raise ConfigError("schedule is empty")
        if self.trips_per_pair < 1:
            raise ConfigError("trips_per_pair must be >= 1")
        if self.noise_rate < 0:
            raise ConfigError("noise_rate must be non-negative")
        if not (self.spacing_m > 0 and self.delta_t > 0) or self.jitter_m < 0:
            raise ConfigError("spacing, jitter and delta_t must be positive")
        if self.jitter_m * 4 >= self.spacing_m / 2:
            raise ConfigError("jitter too large for the region spacing")
        for r in self.schedule:
            if any(not 0 <= h < self.n_regions for h in r.hubs):
                raise ConfigError(f"hub outside 0..{self.n_regions - 1}")

    @property
    def T(self) -> int:
        return sum(r.slices for r in self.schedule)

    @property
    def day_end(self) -> float:
        # one minute short of the last full slice, like a 05:00-23:59 window
        return self.day_start + self.T * self.delta_t - 60.0

    @property
    def change_points(self) -> tuple[int, ...]:
        """First slice of every regime after the first."""
        starts = np.cumsum([r.slices for r in self.schedule])[:-1]
        return tuple(int(s) for s in starts)


def star_flip_schedule(slices: int = 5, speed_kmh: float = 15.0) -> tuple[Regime, ...]:
    return (Regime("star_in", slices, speed_kmh=speed_kmh),
            Regime("star_out", slices, speed_kmh=speed_kmh))


def three_regime_schedule() -> tuple[Regime, ...]:
    """19 hourly slices: inbound morning, sparse midday, outbound evening."""
    return (Regime("star_in", 6, hubs=(0, 1), spoke_fraction=0.7, speed_kmh=15.0),
            Regime("sparse", 7, density=0.01, speed_kmh=40.0),
            Regime("star_out", 6, hubs=(0,), spoke_fraction=0.6, speed_kmh=18.0))


def full_day_schedule() -> tuple[Regime, ...]:
    """Quiet first and last hour around a congested inbound morning, a light
    midday and a lighter outbound evening (19 slices)."""
    return (Regime("empty", 1),
            Regime("star_in", 4, hubs=(0,), spoke_fraction=0.8, speed_kmh=15.0, background=0.06),
            Regime("sparse", 8, density=0.01, speed_kmh=40.0),
            Regime("star_out", 5, hubs=(0,), spoke_fraction=0.6, speed_kmh=18.0, background=0.01),
            Regime("empty", 1))


def region_centers(params: SynthParams) -> np.ndarray:
    side = math.ceil(math.sqrt(params.n_regions))
    idx = np.arange(params.n_regions)
    return np.stack([idx % side, idx // side], axis=1).astype(float) * params.spacing_m


def _regime_pairs(regime: Regime, n: int, rng: np.random.Generator) -> list[tuple[int, int]] | None:
    """Fixed pair list of a star regime (None for per-slice random regimes)."""
    if regime.kind in ("sparse", "empty"):
        return None
    others = [v for v in range(n) if v not in regime.hubs]
    order = rng.permutation(len(others))
    n_spokes = max(1, round(regime.spoke_fraction * len(others))) if others else 0
    spokes = sorted(others[i] for i in order[:n_spokes])
    if regime.kind == "star_in":
        return [(s, h) for h in regime.hubs for s in spokes]
    return [(h, s) for h in regime.hubs for s in spokes]


def planted_pairs(params: SynthParams) -> list[list[tuple[int, int]]]:
    """Region pairs planted in every slice, before noise."""
    rng = np.random.default_rng([params.seed, 1])
    n = params.n_regions
    out: list[list[tuple[int, int]]] = []
    for regime in params.schedule:
        fixed = _regime_pairs(regime, n, rng)
        for _ in range(regime.slices):
            if regime.kind == "empty":
                out.append([])
                continue
            mask = np.zeros((n, n), dtype=bool)
            if fixed is None:
                mask |= rng.random((n, n)) < regime.density
            if regime.background:
                mask |= rng.random((n, n)) < regime.background
            for i, j in fixed or ():
                mask[i, j] = False
            np.fill_diagonal(mask, False)
            out.append(list(fixed or ()) + [(int(i), int(j)) for i, j in zip(*np.nonzero(mask))])
    return out


def _noise_pairs(params: SynthParams, planted: list[list[tuple[int, int]]]) -> list[list[tuple[int, int]]]:
    rng = np.random.default_rng([params.seed, 2])
    n = params.n_regions
    out = []
    for pairs in planted:
        count = int(rng.poisson(params.noise_rate * max(len(pairs), 1))) if params.noise_rate else 0
        extra = []
        for _ in range(count):
            i, j = rng.choice(n, size=2, replace=False)
            extra.append((int(i), int(j)))
        out.append(extra)
    return out


def adjacency(params: SynthParams, include_noise: bool = True) -> np.ndarray:
    """(T, n, n) region-level adjacency realised by :func:`generate` under the ``all`` method."""
    planted = planted_pairs(params)
    noise = _noise_pairs(params, planted) if include_noise else [[] for _ in planted]
    A = np.zeros((params.T, params.n_regions, params.n_regions), dtype=bool)
    for t, pairs in enumerate(planted):
        for i, j in pairs + noise[t]:
            A[t, i, j] = True
    return A


def generate(params: SynthParams) -> Dataset:
    """Trajectories realising the schedule; one origin and one destination point per trip.

    A trip departs inside its slice and travels the straight line between
    the jittered region points at the regime speed (noise trips draw a
    speed uniformly from ``noise_speed_kmh``). Trips that would overrun the
    window are sped up to arrive at its end.
    """
    planted = planted_pairs(params)
    noise = _noise_pairs(params, planted)
    centers = region_centers(params)
    rng = np.random.default_rng([params.seed, 3])
    speeds = [r.speed_kmh for r in params.schedule for _ in range(r.slices)]
    trajectories = []
    for t in range(params.T):
        slice_start = params.day_start + t * params.delta_t
        trips = [(i, j, speeds[t]) for i, j in planted[t] for _ in range(params.trips_per_pair)]
        lo, hi = params.noise_speed_kmh
        trips += [(i, j, float(rng.uniform(lo, hi))) for i, j in noise[t]]
        for k, (i, j, v) in enumerate(trips):
            o = centers[i] + rng.normal(0.0, params.jitter_m, 2)
            d = centers[j] + rng.normal(0.0, params.jitter_m, 2)
            depart = slice_start + float(rng.uniform(0.0, 0.5)) * params.delta_t
            travel = float(np.hypot(*(d - o))) / (v / 3.6)
            arrive = min(depart + travel, params.day_end)
            pts = [(float(o[0]), float(o[1]), round(depart, 3)),
                   (float(d[0]), float(d[1]), round(arrive, 3))]
            trajectories.append(Trajectory.from_points(f"s{t:02d}-{k:05d}", pts))
    return Dataset(tuple(trajectories), CRS.PLANAR, params.day_start, params.day_end)


def write_csv(ds: Dataset, fp: IO[str]) -> None:
    """Delimited form readable by :func:`trajflow.ingest.parse_trajectories`."""
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["traj_id", "x", "y", "t"])
    for tr in ds.trajectories:
        for (x, y), t in zip(tr.xy, tr.t):
            w.writerow([tr.id, repr(float(x)), repr(float(y)), repr(float(t))])


def cell_to_region(centroids: np.ndarray, params: SynthParams) -> np.ndarray:
    """Region index nearest to each cell centroid."""
    centers = region_centers(params)
    d = np.hypot(*(np.asarray(centroids)[:, None, :] - centers[None, :, :]).transpose(2, 0, 1))
    return np.argmin(d, axis=1)


def schedule_from_dicts(items: Sequence[dict]) -> tuple[Regime, ...]:
    """Build a schedule from plain dicts, e.g. parsed from JSON."""
    try:
        return tuple(Regime(**{**it, "hubs": tuple(it.get("hubs", (0,)))}) for it in items)
    except TypeError as exc:
        raise ConfigError(f"bad regime entry: {exc}") from exc
