"""Planar point-in-polygon tests on raw lat/lon pairs.

Polygons here are rings of (lat, lon) vertices treated as planar
coordinates; survey masks and prohibited zones are small enough that
spherical distortion does not change which side of an edge a point falls
on.  Containment is even-odd (a point is inside when a ray crosses the
boundary an odd number of times), which also gives rings-with-holes the
obvious meaning when a polygon carries several rings.
"""

from __future__ import annotations

from typing import Sequence

Ring = Sequence[tuple[float, float]]


def ring_crossings(lat: float, lon: float, ring: Ring) -> int:
    """Crossing count of an eastward ray from (lat, lon) with one ring.

    Edges are half-open in latitude so a ray through a vertex is counted
    once, not twice.  The ring may be given open or explicitly closed.
    """
    if len(ring) < 3:
        raise ValueError(f"ring needs at least 3 vertices, got {len(ring)}")
    crossings = 0
    n = len(ring)
    for i in range(n):
        alat, alon = ring[i]
        blat, blon = ring[(i + 1) % n]
        if alat == blat:
            continue
        if (alat > lat) == (blat > lat):
            continue
        # Longitude where the edge crosses this latitude.
        t = (lat - alat) / (blat - alat)
        cross_lon = alon + t * (blon - alon)
        if cross_lon > lon:
            crossings += 1
    return crossings


def point_in_rings(lat: float, lon: float, rings: Sequence[Ring]) -> bool:
    """Even-odd containment across all rings of a polygon."""
    if not rings:
        raise ValueError("polygon has no rings")
    total = sum(ring_crossings(lat, lon, ring) for ring in rings)
    return total % 2 == 1


def on_ring_boundary(lat: float, lon: float, ring: Ring,
                     eps: float = 1e-12) -> bool:
    """True when the point lies on an edge or vertex of the ring.

    Collinearity is tested with a small absolute tolerance on the planar
    cross product, enough to absorb the rounding noise of coordinates that
    were parsed from text.
    """
    n = len(ring)
    for i in range(n):
        alat, alon = ring[i]
        blat, blon = ring[(i + 1) % n]
        cross = (blat - alat) * (lon - alon) - (blon - alon) * (lat - alat)
        if abs(cross) > eps:
            continue
        if (min(alat, blat) - eps <= lat <= max(alat, blat) + eps
                and min(alon, blon) - eps <= lon <= max(alon, blon) + eps):
            return True
    return False
