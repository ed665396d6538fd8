"""Uniform geographic hash grid for radius queries over point sets.

Buckets are fixed-size lat/lon rectangles.  A radius query first computes a
latitude band and a longitude window that provably contain the query disk,
scans only the buckets they overlap, then filters candidates with the exact
haversine distance.  Results therefore match a brute-force scan point for
point; the grid only prunes work.

Longitude windows do not wrap: point sets spanning the antimeridian are out
of scope, as are radii so large the window degenerates at the poles (those
fall back to scanning every longitude bucket, which stays correct, just
slow).
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Hashable, Iterable, Iterator

from .geo import EARTH_RADIUS_KM, KM_PER_DEG, GeoPoint, haversine_km


def lat_lon_window(center: GeoPoint, radius_km: float,
                   ) -> tuple[float, float, float | None]:
    """Half-widths (dlat_deg, and dlon_deg or None for all longitudes) of a
    box guaranteed to contain every point within radius_km of center.

    The latitude bound is exact: meridians are great circles.  The
    longitude bound inverts the haversine formula using the smallest
    cos(lat) anywhere in the latitude band, which only widens the window.
    Near the poles the window degenerates to the full longitude range.
    """
    if radius_km < 0:
        raise ValueError("radius must be >= 0")
    a = radius_km / EARTH_RADIUS_KM
    dlat = math.degrees(a)
    phi = math.radians(abs(center.lat))
    phi_max = min(math.pi / 2.0, phi + a)
    c = math.cos(phi) * math.cos(phi_max)
    if c <= 0.0:
        return dlat, None
    arg = math.sin(a / 2.0) / math.sqrt(c)
    if arg >= 1.0:
        return dlat, None
    dlon = math.degrees(2.0 * math.asin(arg))
    return dlat, dlon


class GridIndex:
    """Static spatial index over (id, point) pairs.

    The cell edge defaults to 1 km expressed in degrees of latitude, which
    suits the sub-kilometre to few-kilometre radii used by the siting rules
    and detection merging; query cost stays proportional to the number of
    buckets the search window overlaps.
    """

    def __init__(self, points: Iterable[tuple[Hashable, GeoPoint]],
                 cell_km: float = 1.0) -> None:
        if not cell_km > 0:
            raise ValueError("cell_km must be positive")
        self.cell_deg = cell_km / KM_PER_DEG
        self._buckets: dict[tuple[int, int], list[tuple[Hashable, GeoPoint]]]
        self._buckets = defaultdict(list)
        self._count = 0
        for pid, point in points:
            self._buckets[self._bucket(point.lat, point.lon)].append((pid, point))
            self._count += 1

    def __len__(self) -> int:
        return self._count

    def _bucket(self, lat: float, lon: float) -> tuple[int, int]:
        return (math.floor(lat / self.cell_deg),
                math.floor(lon / self.cell_deg))

    def _candidates(self, center: GeoPoint, radius_km: float,
                    ) -> Iterator[tuple[Hashable, GeoPoint]]:
        dlat, dlon = lat_lon_window(center, radius_km)
        lat_lo = max(-90.0, center.lat - dlat)
        lat_hi = min(90.0, center.lat + dlat)
        if dlon is None:
            lon_lo, lon_hi = -180.0, 180.0
        else:
            lon_lo = center.lon - dlon
            lon_hi = center.lon + dlon
        row_lo, col_lo = self._bucket(lat_lo, lon_lo)
        row_hi, col_hi = self._bucket(lat_hi, lon_hi)
        for row in range(row_lo, row_hi + 1):
            for col in range(col_lo, col_hi + 1):
                yield from self._buckets.get((row, col), ())

    def within(self, center: GeoPoint, radius_km: float,
               ) -> list[tuple[Hashable, GeoPoint, float]]:
        """All indexed points with haversine distance <= radius_km, as
        (id, point, distance_km), sorted by (distance, id) for stable output.
        Callers needing a strict interior apply their own `<` filter."""
        out = []
        for pid, point in self._candidates(center, radius_km):
            d = haversine_km(center, point)
            if d <= radius_km:
                out.append((pid, point, d))
        out.sort(key=lambda item: (item[2], str(item[0])))
        return out

    def nearest_within(self, center: GeoPoint, radius_km: float,
                       exclude: Hashable | None = None,
                       ) -> tuple[Hashable, GeoPoint, float] | None:
        """Closest indexed point within radius_km, ties broken by id;
        None when the disk is empty.  `exclude` skips one id, letting a
        point query its own index for neighbours."""
        best = None
        for pid, point in self._candidates(center, radius_km):
            if exclude is not None and pid == exclude:
                continue
            d = haversine_km(center, point)
            if d > radius_km:
                continue
            key = (d, str(pid))
            if best is None or key < best[0]:
                best = (key, (pid, point, d))
        return None if best is None else best[1]
