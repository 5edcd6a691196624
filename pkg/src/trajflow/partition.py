"""Spatial cells from trajectory points.

Seed points are grouped into cells of a target radius in a single ordered
pass, then redistributed to their nearest centroid. Region membership for
any location is nearest-centroid, i.e. the Voronoi diagram of the centroids;
:func:`build_voronoi` materialises that diagram, clipped to a rectangle, for
export.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple

import numpy as np

from .errors import ConfigError
from .geo import CRS, LocalProjection, distance
from .ingest import Dataset

logger = logging.getLogger(__name__)

SEED_MODES = ("all", "od")
_CHUNK = 65536


class Cell(NamedTuple):
    id: int
    centroid: tuple[float, float]
    member_count: int


@dataclass(frozen=True, eq=False)
class CellSet:
    """Cells with their centroids; index ``i`` is cell id ``i``.

    ``labels`` records the final cell of every seed point the set was built
    from (empty when constructed directly from centroids).
    """

    centroids: np.ndarray
    member_count: np.ndarray
    gamma: float
    crs: CRS = CRS.PLANAR
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        c = np.array(self.centroids, dtype=float).reshape(-1, 2)
        m = np.array(self.member_count, dtype=int).reshape(-1)
        if len(c) != len(m):
            raise ValueError("centroid and member_count lengths differ")
        for arr in (c, m):
            arr.flags.writeable = False
        labels = np.array(self.labels, dtype=int).reshape(-1)
        labels.flags.writeable = False
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "member_count", m)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "crs", CRS.parse(self.crs))

    @classmethod
    def from_centroids(cls, centroids, gamma: float = 1.0, crs: CRS | str = CRS.PLANAR) -> "CellSet":
        c = np.asarray(centroids, dtype=float).reshape(-1, 2)
        return cls(c, np.ones(len(c), dtype=int), gamma, crs)

    def __len__(self) -> int:
        return len(self.centroids)

    @property
    def cells(self) -> list[Cell]:
        return [Cell(i, (float(x), float(y)), int(n))
                for i, ((x, y), n) in enumerate(zip(self.centroids, self.member_count))]

    def __eq__(self, other):
        if not isinstance(other, CellSet):
            return NotImplemented
        return (self.gamma == other.gamma and self.crs == other.crs
                and np.array_equal(self.centroids, other.centroids)
                and np.array_equal(self.member_count, other.member_count)
                and np.array_equal(self.labels, other.labels))


def seed_points(ds: Dataset, mode: str = "all") -> np.ndarray:
    """Seed points in dataset order: every point, or first/last point only."""
    if mode not in SEED_MODES:
        raise ConfigError(f"seed mode must be one of {SEED_MODES}, got {mode!r}")
    if not ds.trajectories:
        return np.zeros((0, 2))
    if mode == "all":
        return np.concatenate([tr.xy for tr in ds.trajectories])
    return np.concatenate([tr.xy[[0, -1]] for tr in ds.trajectories])


def _nearest(points: np.ndarray, centroids: np.ndarray, crs: CRS) -> np.ndarray:
    # argmin returns the first minimum, which gives the lowest-id tie-break
    out = np.empty(len(points), dtype=int)
    for lo in range(0, len(points), _CHUNK):
        chunk = points[lo:lo + _CHUNK]
        d = distance(chunk[:, None, :], centroids[None, :, :], crs)
        out[lo:lo + _CHUNK] = np.argmin(d, axis=1)
    return out


def group_seed_points(seeds, gamma: float, crs: CRS | str = CRS.PLANAR, *,
                      max_iter: int = 100) -> CellSet:
    """Group ordered seed points into cells of radius ``gamma`` (meters).

    Each seed joins the nearest existing cell if that centroid is within
    ``gamma`` (ties go to the lowest id) and otherwise founds a new cell;
    the joined cell's centroid is the running mean of its members. Members
    are then cleared and every seed is redistributed to its nearest
    centroid. Centroids are recomputed from the redistributed membership,
    and redistribution repeats until membership no longer changes (at most
    ``max_iter`` passes), so that every seed ends up nearest to the mean of
    its own cell. A cell left without members keeps its previous centroid.

    The result depends on seed order.
    """
    crs = CRS.parse(crs)
    S = np.asarray(seeds, dtype=float).reshape(-1, 2)
    if len(S) == 0:
        raise ConfigError("seed point set is empty")
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    if not np.isfinite(S).all():
        raise ConfigError("seed points must be finite")

    cap = 64
    sums = np.zeros((cap, 2))
    cent = np.zeros((cap, 2))
    counts = np.zeros(cap, dtype=np.int64)
    k = 0
    for s in S:
        if k:
            d = distance(cent[:k], s, crs)
            j = int(np.argmin(d))
            if d[j] <= gamma:
                counts[j] += 1
                sums[j] += s
                cent[j] = sums[j] / counts[j]
                continue
        if k == cap:
            cap *= 2
            sums = np.resize(sums, (cap, 2))
            cent = np.resize(cent, (cap, 2))
            counts = np.resize(counts, cap)
        sums[k] = s
        cent[k] = s
        counts[k] = 1
        k += 1

    centroids = cent[:k].copy()
    labels = _nearest(S, centroids, crs)
    for _ in range(max_iter):
        member_count = np.bincount(labels, minlength=k)
        filled = member_count > 0
        for dim in range(2):
            centroids[filled, dim] = (np.bincount(labels, weights=S[:, dim], minlength=k)[filled]
                                      / member_count[filled])
        relabeled = _nearest(S, centroids, crs)
        if np.array_equal(relabeled, labels):
            break
        labels = relabeled
    else:
        logger.warning("cell membership still changing after %d redistribution passes", max_iter)
        member_count = np.bincount(labels, minlength=k)
        filled = member_count > 0
    if not filled.all():
        logger.warning("%d cells lost every member during redistribution; keeping their centroids",
                       int((~filled).sum()))
    return CellSet(centroids, member_count, float(gamma), crs, labels)


def assign_region(p, cells: CellSet):
    """Id of the cell whose centroid is nearest to ``p``; lowest id on ties.

    ``p`` may be a single (x, y) pair or an (n, 2) array, in which case an
    array of ids is returned.
    """
    if len(cells) == 0:
        raise ValueError("empty cell set")
    pts = np.asarray(p, dtype=float)
    if pts.ndim == 1:
        return int(_nearest(pts[None, :], cells.centroids, cells.crs)[0])
    return _nearest(pts.reshape(-1, 2), cells.centroids, cells.crs)


@dataclass(frozen=True, eq=False)
class VoronoiPolygon:
    """Convex region of one cell; ``ring`` is counter-clockwise and closed."""

    cell_id: int
    ring: np.ndarray

    def contains(self, p, tol: float = 0.0) -> bool:
        """True when ``p`` lies inside or within ``tol`` of the boundary (planar coordinates)."""
        return bool(_in_convex(self.ring, np.asarray(p, dtype=float), tol))

    @property
    def area(self) -> float:
        x, y = self.ring[:-1, 0], self.ring[:-1, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _in_convex(ring: np.ndarray, p: np.ndarray, tol: float) -> bool:
    a = ring[:-1]
    b = ring[1:]
    edge = b - a
    length = np.hypot(edge[:, 0], edge[:, 1])
    length[length == 0] = 1.0
    cross = edge[:, 0] * (p[1] - a[:, 1]) - edge[:, 1] * (p[0] - a[:, 0])
    return bool(np.all(cross / length >= -tol))


def _clip(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of a convex polygon (open ring) where ``normal @ x <= offset``."""
    if len(poly) == 0:
        return poly
    side = poly @ normal - offset
    out = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        sc, sn = side[i], side[(i + 1) % n]
        if sc <= 0:
            out.append(cur)
        if (sc < 0 < sn) or (sn < 0 < sc):
            out.append(cur + (nxt - cur) * (sc / (sc - sn)))
    return np.array(out).reshape(-1, 2)


def _voronoi_planar(gen: np.ndarray, bbox) -> list[np.ndarray]:
    xmin, ymin, xmax, ymax = bbox
    box = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]], dtype=float)
    rings = []
    for i, ci in enumerate(gen):
        poly = box
        others = np.delete(np.arange(len(gen)), i)
        # nearest generators first so the polygon shrinks quickly
        order = others[np.argsort(np.hypot(*(gen[others] - ci).T), kind="stable")]
        for j in order:
            cj = gen[j]
            normal = cj - ci
            poly = _clip(poly, normal, float(normal @ (ci + cj) / 2))
            if len(poly) == 0:
                break
        rings.append(np.vstack([poly, poly[:1]]) if len(poly) else poly)
    return rings


def build_voronoi(cells: CellSet, bbox=None, *, margin: float | None = None) -> list[VoronoiPolygon]:
    """Voronoi polygons of the cell centroids clipped to a rectangle.

    Parameters
    ----------
    cells : CellSet
    bbox : (xmin, ymin, xmax, ymax), optional
        Clip rectangle in the cell set's coordinates; defaults to the
        centroid bounds. It must contain every centroid.
    margin : float, optional
        Meters added on every side of ``bbox``; defaults to ``cells.gamma``.

    Geographic cell sets are tessellated in a local equirectangular
    projection and the rings are returned in degrees.
    """
    if len(cells) == 0:
        raise ValueError("empty cell set")
    c = cells.centroids
    if len(np.unique(c, axis=0)) != len(c):
        raise ValueError("centroids must be pairwise distinct")
    if bbox is None:
        bbox = (*c.min(axis=0), *c.max(axis=0))
    xmin, ymin, xmax, ymax = (float(v) for v in bbox)
    if (c[:, 0] < xmin).any() or (c[:, 0] > xmax).any() or (c[:, 1] < ymin).any() or (c[:, 1] > ymax).any():
        raise ValueError("bbox does not contain every centroid")
    margin = cells.gamma if margin is None else float(margin)

    if cells.crs is CRS.GEOGRAPHIC:
        proj = LocalProjection.about(c)
        gen = proj.forward(c)
        lo = proj.forward([xmin, ymin])
        hi = proj.forward([xmax, ymax])
        rings = _voronoi_planar(gen, (lo[0] - margin, lo[1] - margin, hi[0] + margin, hi[1] + margin))
        rings = [proj.inverse(r) if len(r) else r for r in rings]
    else:
        rings = _voronoi_planar(c, (xmin - margin, ymin - margin, xmax + margin, ymax + margin))
    return [VoronoiPolygon(i, r) for i, r in enumerate(rings)]


def cells_to_geojson(cells: CellSet, polygons: Iterable[VoronoiPolygon]) -> dict:
    """FeatureCollection with one polygon and one centroid point per cell."""
    features = []
    for poly in polygons:
        features.append({
            "type": "Feature",
            "properties": {"cell_id": poly.cell_id, "kind": "region"},
            "geometry": {"type": "Polygon", "coordinates": [poly.ring.tolist()]},
        })
    for cell in cells.cells:
        features.append({
            "type": "Feature",
            "properties": {"cell_id": cell.id, "kind": "centroid", "member_count": cell.member_count},
            "geometry": {"type": "Point", "coordinates": list(cell.centroid)},
        })
    return {"type": "FeatureCollection", "features": features}


def write_geojson(cells: CellSet, polygons, fp: IO[str]) -> None:
    json.dump(cells_to_geojson(cells, polygons), fp, sort_keys=True)
    fp.write("\n")


def write_cell_table(cells: CellSet, fp: IO[str]) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["cell_id", "cx", "cy", "member_count"])
    for cell in cells.cells:
        w.writerow([cell.id, repr(cell.centroid[0]), repr(cell.centroid[1]), cell.member_count])


def read_cell_table(fp: IO[str], gamma: float, crs: CRS | str = CRS.PLANAR) -> CellSet:
    rows = sorted(csv.DictReader(fp), key=lambda r: int(r["cell_id"]))
    if [int(r["cell_id"]) for r in rows] != list(range(len(rows))):
        raise ValueError("cell ids must be 0..n-1 without gaps")
    cent = [(float(r["cx"]), float(r["cy"])) for r in rows]
    counts = [int(r["member_count"]) for r in rows]
    return CellSet(np.array(cent).reshape(-1, 2), counts, gamma, crs)
