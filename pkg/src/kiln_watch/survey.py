"""Survey planning: turn a region of interest into a deduplicated grid of
tile-query centers and estimate the API effort needed to fetch them.

Centers live on the 0.01 degree lattice.  Strides are absolute multiples of
the lattice pitch anchored at 0 degrees, not offsets from the region edge,
so adjacent surveys planned independently share grid nodes and their caches
overlap instead of interleaving.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .geo import (
    BoundingBox,
    GeoPoint,
    GridCell,
    ground_resolution_m_per_px,
    snap_to_centigrid,
)
from .polygon import Ring, point_in_rings

CHIPS_PER_QUERY = 25
DEFAULT_DAILY_QUOTA = 25_000
DEFAULT_ZOOM = 16
DEFAULT_SCALE = 2

# Static-map size cap in logical pixels.  scale multiplies output pixel
# density over the same viewport: 600 logical at scale 2 is the 1200 px
# tile the ingest stage consumes.
VIEWPORT_LOGICAL_PX = 600

# Slop for float boundary tests, in centigrid units (1e-8 degrees).
_EDGE_EPS = 1e-6


@dataclass(frozen=True)
class QueryPlan:
    """An ordered, duplicate-free list of tile-query centers.

    Centers are sorted latitude-major so plans serialize deterministically
    and diffs between plan files stay readable.
    """

    centers: tuple[GridCell, ...]
    stride: float = 0.01
    zoom: int = DEFAULT_ZOOM
    scale: int = DEFAULT_SCALE

    def __post_init__(self) -> None:
        _check_stride(self.stride)
        _check_zoom_scale(self.zoom, self.scale)
        seen = None
        for cell in self.centers:
            if not isinstance(cell, GridCell):
                raise TypeError(f"plan centers must be GridCell, got {cell!r}")
            key = (cell.lat, cell.lon)
            if seen is not None and key <= seen:
                raise ValueError(
                    f"plan centers out of order or duplicated near {cell.key}")
            seen = key

    def __len__(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class EffortEstimate:
    """Query, chip and wall-clock cost of executing a plan."""

    query_count: int
    chip_count: int
    api_days: int
    keys: int
    daily_quota: int = DEFAULT_DAILY_QUOTA

    def __post_init__(self) -> None:
        if self.query_count < 0:
            raise ValueError("query_count must be >= 0")
        if self.chip_count != self.query_count * CHIPS_PER_QUERY:
            raise ValueError("chip_count must equal query_count * 25")
        if self.keys < 1:
            raise ValueError("keys must be >= 1")
        if self.daily_quota < 1:
            raise ValueError("daily_quota must be >= 1")

    @property
    def chips_per_key_day(self) -> int:
        return CHIPS_PER_QUERY * self.daily_quota


def _check_stride(stride: float) -> int:
    """Validate a stride and return it in whole centigrid units."""
    if not stride > 0:
        raise ValueError(f"stride must be positive, got {stride!r}")
    units = round(stride * 100.0)
    if units < 1 or abs(stride * 100.0 - units) > _EDGE_EPS:
        raise ValueError(
            f"stride {stride!r} is not a multiple of 0.01 degrees")
    return units


def _check_zoom_scale(zoom: int, scale: int) -> None:
    # Reuse the range checks without caring about the returned value.
    ground_resolution_m_per_px(0.0, zoom, scale)


def plan_queries(region: BoundingBox,
                 mask: Sequence[Ring] | None = None,
                 stride: float = 0.01,
                 zoom: int = DEFAULT_ZOOM,
                 scale: int = DEFAULT_SCALE) -> QueryPlan:
    """Enumerate grid centers covering a region, optionally clipped to a mask.

    A center is kept when it lies inside the region (boundary inclusive on
    all four edges) and, if a mask polygon is given, inside the mask under
    the even-odd rule.  With the default stride a one-degree span yields 101
    centers per axis because both endpoints land on the lattice.
    """
    units = _check_stride(stride)
    _check_zoom_scale(zoom, scale)

    def _axis(lo: float, hi: float) -> range:
        k_lo = math.ceil((lo * 100.0 - _EDGE_EPS) / units)
        k_hi = math.floor((hi * 100.0 + _EDGE_EPS) / units)
        return range(k_lo, k_hi + 1)

    centers = []
    for klat in _axis(region.south, region.north):
        lat = klat * units / 100.0
        for klon in _axis(region.west, region.east):
            lon = klon * units / 100.0
            if mask is not None and not point_in_rings(lat, lon, mask):
                continue
            centers.append(GridCell(lat, lon))
    return QueryPlan(tuple(centers), stride=stride, zoom=zoom, scale=scale)


def mask_filter(plan: QueryPlan, mask: Sequence[Ring]) -> QueryPlan:
    """Drop plan centers that fall outside an additional mask polygon."""
    kept = tuple(c for c in plan.centers if point_in_rings(c.lat, c.lon, mask))
    return QueryPlan(kept, stride=plan.stride, zoom=plan.zoom, scale=plan.scale)


def dedupe_plan(plan: QueryPlan, done: Iterable[GridCell]) -> QueryPlan:
    """Remove already-fetched centers, preserving the plan's order."""
    done_set = set(done)
    kept = tuple(c for c in plan.centers if c not in done_set)
    return QueryPlan(kept, stride=plan.stride, zoom=plan.zoom, scale=plan.scale)


def estimate_effort_for_count(query_count: int, keys: int,
                              daily_quota: int = DEFAULT_DAILY_QUOTA,
                              ) -> EffortEstimate:
    """API effort for a query count: days = ceil(q / (keys * daily quota))."""
    if query_count < 0:
        raise ValueError("query_count must be >= 0")
    if keys < 1:
        raise ValueError("keys must be >= 1")
    if daily_quota < 1:
        raise ValueError("daily_quota must be >= 1")
    days = math.ceil(query_count / (keys * daily_quota))
    return EffortEstimate(query_count=query_count,
                          chip_count=query_count * CHIPS_PER_QUERY,
                          api_days=days, keys=keys, daily_quota=daily_quota)


def estimate_effort(plan: QueryPlan, keys: int,
                    daily_quota: int = DEFAULT_DAILY_QUOTA) -> EffortEstimate:
    """API effort for a plan; see estimate_effort_for_count."""
    return estimate_effort_for_count(len(plan), keys, daily_quota)


def tile_ground_side_m(lat: float, zoom: int) -> float:
    """Ground side length, in metres, of one query's viewport.

    The viewport is fixed in logical pixels, so its footprint depends on
    zoom alone; requesting scale 2 doubles output pixel density over the
    same ground.  That is why surveying at (zoom 16, scale 2) needs a
    quarter of the queries of (zoom 17, scale 1) for equal-resolution
    coverage of the same area.
    """
    return VIEWPORT_LOGICAL_PX * ground_resolution_m_per_px(lat, zoom, 1)


def queries_for_area(width_m: float, height_m: float, lat: float,
                     zoom: int) -> int:
    """Queries needed to cover a width x height ground rectangle at a zoom.

    Counts whole non-overlapping viewports per axis.  The tiny epsilon
    before ceil keeps exact-fit areas from spilling into an extra row or
    column through float noise.
    """
    if not (width_m > 0 and height_m > 0):
        raise ValueError("area dimensions must be positive")
    side = tile_ground_side_m(lat, zoom)
    cols = math.ceil(width_m / side - 1e-9)
    rows = math.ceil(height_m / side - 1e-9)
    return cols * rows


def write_plan(plan: QueryPlan, path: str | Path) -> None:
    """Write a plan as JSON lines, one center per line.

    The format is fixed field order with two-decimal coordinates, so
    replanning an unchanged region produces a byte-identical file.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for cell in plan.centers:
            fh.write(f'{{"lat": {cell.lat:.2f}, "lon": {cell.lon:.2f}, '
                     f'"zoom": {plan.zoom}, "scale": {plan.scale}}}\n')


def read_plan(path: str | Path, stride: float = 0.01) -> QueryPlan:
    """Read a plan file back into a QueryPlan.

    The stride is not stored in the file (rows are self-contained fetch
    requests); pass the one used at planning time when it matters.
    """
    path = Path(path)
    centers: list[GridCell] = []
    zoom: int | None = None
    scale: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                cell = GridCell(row["lat"], row["lon"])
                row_zoom, row_scale = int(row["zoom"]), int(row["scale"])
            except (ValueError, TypeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad plan row: {exc}") from exc
            if zoom is None:
                zoom, scale = row_zoom, row_scale
            elif (row_zoom, row_scale) != (zoom, scale):
                raise ValueError(
                    f"{path}:{lineno}: zoom/scale differ from earlier rows")
            centers.append(cell)
    if zoom is None:
        raise ValueError(f"{path}: empty plan file")
    return QueryPlan(tuple(centers), stride=stride, zoom=zoom, scale=scale)


def parse_region_text(text: str) -> BoundingBox | list[list[tuple[float, float]]]:
    """Parse a region file: either one `bbox south west north east` line or
    a polygon given as `lat lon` vertex lines, blank lines separating rings.
    """
    rings: list[list[tuple[float, float]]] = []
    current: list[tuple[float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                rings.append(current)
                current = []
            continue
        parts = line.split()
        if parts[0].lower() == "bbox":
            if rings or current:
                raise ValueError(f"line {lineno}: bbox mixed with vertices")
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: bbox needs 4 numbers")
            south, west, north, east = (float(p) for p in parts[1:])
            return BoundingBox(south, west, north, east)
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected `lat lon`")
        current.append((float(parts[0]), float(parts[1])))
    if current:
        rings.append(current)
    if not rings:
        raise ValueError("region file has no bbox and no vertices")
    for ring in rings:
        if len(ring) < 3:
            raise ValueError("polygon rings need at least 3 vertices")
    return rings


def parse_region(path: str | Path) -> BoundingBox | list[list[tuple[float, float]]]:
    return parse_region_text(Path(path).read_text(encoding="utf-8"))


def rings_bbox(rings: Sequence[Ring]) -> BoundingBox:
    """Tight bounding box of a polygon's vertices."""
    lats = [lat for ring in rings for lat, _ in ring]
    lons = [lon for ring in rings for _, lon in ring]
    return BoundingBox(min(lats), min(lons), max(lats), max(lons))


def snap_region(points: Iterable[tuple[float, float]]) -> list[GridCell]:
    """Snap arbitrary coordinates to their nearest grid cells, deduplicated,
    in input order.  Convenience for reconciling external kiln lists with
    the survey lattice."""
    out: list[GridCell] = []
    seen: set[GridCell] = set()
    for lat, lon in points:
        cell = snap_to_centigrid(GeoPoint(lat, lon))
        if cell not in seen:
            seen.add(cell)
            out.append(cell)
    return out
