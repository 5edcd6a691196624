"""Distance metrics and the local planar projection used for geographic data."""

from __future__ import annotations

import enum

import numpy as np

EARTH_RADIUS_M = 6_371_008.8


class CRS(str, enum.Enum):
    PLANAR = "planar-meters"
    GEOGRAPHIC = "geographic-degrees"

    @classmethod
    def parse(cls, value: "CRS | str") -> "CRS":
        if isinstance(value, CRS):
            return value
        aliases = {"planar": cls.PLANAR, "geographic": cls.GEOGRAPHIC}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            from .errors import ConfigError

            raise ConfigError(f"unknown crs {value!r}") from None


def haversine_m(x1, y1, x2, y2):
    """Great-circle distance in meters; x is longitude, y latitude, in degrees."""
    lon1, lat1, lon2, lat2 = map(np.radians, (x1, y1, x2, y2))
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance(p, q, crs: CRS = CRS.PLANAR):
    """Distance between points (or broadcastable arrays of points) ``p`` and ``q``.

    The last axis holds (x, y).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if crs is CRS.GEOGRAPHIC:
        return haversine_m(p[..., 0], p[..., 1], q[..., 0], q[..., 1])
    return np.hypot(p[..., 0] - q[..., 0], p[..., 1] - q[..., 1])


def step_lengths(xy, crs: CRS = CRS.PLANAR) -> np.ndarray:
    """Lengths of the consecutive segments of a polyline given as an (n, 2) array."""
    xy = np.asarray(xy, dtype=float)
    if len(xy) < 2:
        return np.zeros(0)
    return distance(xy[:-1], xy[1:], crs)


class LocalProjection:
    """Equirectangular projection about a reference point.

    Maps lon/lat degrees to meters east/north of ``origin``. Adequate at city
    extent, which is all the Voronoi export needs.
    """

    def __init__(self, origin):
        self.lon0, self.lat0 = (float(v) for v in origin)
        self._kx = np.radians(1.0) * EARTH_RADIUS_M * np.cos(np.radians(self.lat0))
        self._ky = np.radians(1.0) * EARTH_RADIUS_M

    @classmethod
    def about(cls, lonlat) -> "LocalProjection":
        lonlat = np.asarray(lonlat, dtype=float).reshape(-1, 2)
        return cls(lonlat.mean(axis=0))

    def forward(self, lonlat):
        lonlat = np.asarray(lonlat, dtype=float)
        return np.stack([(lonlat[..., 0] - self.lon0) * self._kx,
                         (lonlat[..., 1] - self.lat0) * self._ky], axis=-1)

    def inverse(self, xy):
        xy = np.asarray(xy, dtype=float)
        return np.stack([xy[..., 0] / self._kx + self.lon0,
                         xy[..., 1] / self._ky + self.lat0], axis=-1)
