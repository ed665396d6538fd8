"""Coordinate types and spherical-earth math shared by every other module.

Two radii are in play and both are intentional: great-circle distances use
the IUGG mean earth radius, while per-pixel ground resolution follows the
Web Mercator convention of a sphere with the WGS84 equatorial radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

EARTH_RADIUS_KM = 6371.0088
WEB_MERCATOR_RADIUS_M = 6378137.0
KM_PER_DEG = math.pi * EARTH_RADIUS_KM / 180.0

MIN_ZOOM = 0
MAX_ZOOM = 21
VALID_SCALES = (1, 2)


def _check_lat_lon(lat: float, lon: float) -> None:
    for name, value in (("lat", lat), ("lon", lon)):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise TypeError(f"{name} must be a number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"lat {lat!r} outside [-90, 90]")
    if not -180.0 <= lon < 180.0:
        raise ValueError(f"lon {lon!r} outside [-180, 180)")


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate, latitude in [-90, 90], longitude in [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        _check_lat_lon(self.lat, self.lon)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned lat/lon box with strictly positive extent."""

    south: float
    west: float
    north: float
    east: float

    def __post_init__(self) -> None:
        _check_lat_lon(self.south, self.west)
        _check_lat_lon(self.north, self.east)
        if not self.south < self.north:
            raise ValueError(f"south {self.south!r} must be < north {self.north!r}")
        if not self.west < self.east:
            raise ValueError(f"west {self.west!r} must be < east {self.east!r}")

    def contains(self, point: GeoPoint) -> bool:
        return (self.south <= point.lat <= self.north
                and self.west <= point.lon <= self.east)


@dataclass(frozen=True)
class GridCell:
    """A survey grid node: a coordinate that lies exactly on the 0.01 degree
    lattice.  Construction canonicalizes the stored floats to the lattice so
    two cells for the same node always compare equal."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        _check_lat_lon(self.lat, self.lon)
        for name, value in (("lat", self.lat), ("lon", self.lon)):
            scaled = value * 100.0
            nearest = round(scaled)
            if abs(scaled - nearest) > 1e-6:
                raise ValueError(
                    f"{name} {value!r} is not a multiple of 0.01 degrees")
            object.__setattr__(self, name, nearest / 100.0)

    @property
    def key(self) -> str:
        """Two-decimal identifier used in chip ids and cache file names."""
        return f"{self.lat:.2f}_{self.lon:.2f}"

    @property
    def center(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometres on the mean-radius sphere.

    Symmetric, zero for identical points, and exact for antipodes
    (pi times the radius).
    """
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = (math.sin(dphi / 2.0) ** 2
         + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2)
    # Clamp against rounding drift before asin; h can exceed 1 by ~1e-16
    # for near-antipodal pairs.
    h = min(1.0, h)
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def ground_resolution_m_per_px(lat: float, zoom: int, scale: int) -> float:
    """Metres of ground covered by one output pixel of a Web Mercator tile.

    cos(lat) * 2 * pi * R / (256 * 2**zoom * scale).  Monotone decreasing in
    zoom; a scale of 2 halves it.  At (zoom 16, scale 2) near 28.7 N this is
    about 1.05 m/px, the operating point for 224 px chips that span roughly
    235 m of ground.
    """
    _check_lat_lon(lat, 0.0)
    if not isinstance(zoom, int) or isinstance(zoom, bool):
        raise TypeError(f"zoom must be an int, got {type(zoom).__name__}")
    if not MIN_ZOOM <= zoom <= MAX_ZOOM:
        raise ValueError(f"zoom {zoom} outside [{MIN_ZOOM}, {MAX_ZOOM}]")
    if scale not in VALID_SCALES:
        raise ValueError(f"scale must be one of {VALID_SCALES}, got {scale!r}")
    circumference = 2.0 * math.pi * WEB_MERCATOR_RADIUS_M
    return math.cos(math.radians(lat)) * circumference / (256.0 * (2 ** zoom) * scale)


def snap_to_centigrid(point: GeoPoint) -> GridCell:
    """Snap a coordinate to the nearest 0.01 degree lattice node.

    Rounds each axis half away from zero, so 23.455 snaps to 23.46 and
    -23.455 to -23.46.  Decimal arithmetic on the shortest repr of the float
    keeps literals like 23.455 behaving as written rather than as their
    binary expansions.  A longitude that rounds to 180.00 wraps to -180.00.
    """
    def _snap(value: float) -> float:
        q = Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
        return float(q)

    lat = _snap(point.lat)
    lon = _snap(point.lon)
    if lon >= 180.0:
        lon = -180.0
    return GridCell(lat, lon)
