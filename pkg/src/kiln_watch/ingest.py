"""Tile fetching and chipping: execute a query plan against a static-map
provider under per-key daily quotas, cache tiles on disk, and cut each
1200 px tile into the 25 chips the classifier consumes.

The fetch layer is deliberately paranoid: every payload is decoded and
dimension-checked before it may enter the cache, transient transport
trouble is retried with exponential backoff, and quota exhaustion surfaces
as an error carrying the cells still owed so a resumed run can pick up
exactly where this one stopped.
"""

from __future__ import annotations

import io
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np
import requests
from PIL import Image

from .geo import KM_PER_DEG, GridCell, ground_resolution_m_per_px
from .survey import QueryPlan

TILE_PX = 1200
CROP_PX = 1120
CHIP_PX = 224
CHIP_GRID = 5
CROP_MARGIN = (TILE_PX - CROP_PX) // 2

METERS_PER_DEG = KM_PER_DEG * 1000.0

DEFAULT_ENDPOINT = "https://maps.googleapis.com/maps/api/staticmap"


class IngestError(Exception):
    """Base class for fetch-stage failures."""


class TransportError(IngestError):
    """Network or server trouble that persisted through every retry."""

    def __init__(self, message: str, attempts: int = 1) -> None:
        super().__init__(message)
        self.attempts = attempts


class MalformedTileError(IngestError):
    """The provider answered, but not with a usable 1200x1200 image."""


class QuotaExhaustedError(IngestError):
    """Every key's daily budget is spent.  remaining_cells lists the plan
    entries that were not fetched, in plan order."""

    def __init__(self, message: str,
                 remaining_cells: Sequence[GridCell] = (),
                 summary: "IngestSummary | None" = None) -> None:
        super().__init__(message)
        self.remaining_cells = tuple(remaining_cells)
        self.summary = summary


@dataclass(frozen=True)
class TileRequest:
    """One static-map query, centred on a grid cell."""

    center: GridCell
    zoom: int = 16
    scale: int = 2
    size_px: int = TILE_PX
    maptype: str = "satellite"

    def __post_init__(self) -> None:
        ground_resolution_m_per_px(self.center.lat, self.zoom, self.scale)
        if self.size_px != TILE_PX:
            raise ValueError(f"only {TILE_PX} px tiles are supported")


@dataclass(frozen=True)
class TileImage:
    request: TileRequest
    pixels: np.ndarray
    fetched_at: datetime

    def __post_init__(self) -> None:
        shape = self.pixels.shape
        if shape != (TILE_PX, TILE_PX, 3) or self.pixels.dtype != np.uint8:
            raise ValueError(
                f"tile pixels must be uint8 ({TILE_PX}, {TILE_PX}, 3), "
                f"got {self.pixels.dtype} {shape}")


@dataclass(frozen=True)
class ChipRef:
    """Geometry of one chip within its tile: grid position, pixel window
    (x, y, width, height) in tile coordinates, and geographic center."""

    chip_id: str
    cell: GridCell
    row: int
    col: int
    center_lat: float
    center_lon: float
    pixel_window: tuple[int, int, int, int]


def build_tile_url(request: TileRequest, key: str,
                   endpoint: str = DEFAULT_ENDPOINT) -> str:
    """Provider query string; parameter order is part of the wire contract."""
    c = request.center
    return (f"{endpoint}?center={c.lat:.2f},{c.lon:.2f}"
            f"&zoom={request.zoom}"
            f"&size={request.size_px}x{request.size_px}"
            f"&scale={request.scale}"
            f"&maptype={request.maptype}"
            f"&key={key}")


def chip_refs(cell: GridCell, zoom: int, scale: int) -> list[ChipRef]:
    """The 25 chip windows of a tile, row-major.

    The 1200 px tile is center-cropped to 1120 px (40 px margin trims the
    provider watermark band and off-grid overlap), then cut 5x5.  Chip
    geographic centers are offset from the tile center by whole multiples
    of 224 px worth of ground, converted through metres-per-degree at the
    tile's latitude.
    """
    res = ground_resolution_m_per_px(cell.lat, zoom, scale)
    cos_lat = math.cos(math.radians(cell.lat))
    refs = []
    for row in range(CHIP_GRID):
        for col in range(CHIP_GRID):
            x0 = CROP_MARGIN + CHIP_PX * col
            y0 = CROP_MARGIN + CHIP_PX * row
            # Offset of the chip's center pixel from the tile's center pixel.
            dx_px = x0 + CHIP_PX / 2.0 - TILE_PX / 2.0
            dy_px = y0 + CHIP_PX / 2.0 - TILE_PX / 2.0
            lat = cell.lat - dy_px * res / METERS_PER_DEG
            lon = cell.lon + dx_px * res / (METERS_PER_DEG * cos_lat)
            refs.append(ChipRef(
                chip_id=f"{cell.key}_r{row}c{col}",
                cell=cell, row=row, col=col,
                center_lat=lat, center_lon=lon,
                pixel_window=(x0, y0, CHIP_PX, CHIP_PX)))
    return refs


def chip_pixels(tile_pixels: np.ndarray, ref: ChipRef) -> np.ndarray:
    x0, y0, w, h = ref.pixel_window
    return tile_pixels[y0:y0 + h, x0:x0 + w]


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


def decode_tile(payload: bytes, context: str) -> np.ndarray:
    """Decode and dimension-check a tile payload; anything that is not a
    1200x1200 RGB(A) image is rejected before it can reach the cache."""
    try:
        with Image.open(io.BytesIO(payload)) as img:
            arr = np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise MalformedTileError(f"{context}: undecodable payload: {exc}") from exc
    if arr.shape != (TILE_PX, TILE_PX, 3):
        raise MalformedTileError(
            f"{context}: expected {TILE_PX}x{TILE_PX} pixels, got "
            f"{arr.shape[1]}x{arr.shape[0]}")
    return arr


class TileProvider(Protocol):
    def fetch(self, request: TileRequest, key: str) -> bytes:
        """Return raw image bytes; raise TransportError for retryable
        trouble, MalformedTileError for a rejected request."""
        ...


class HttpTileProvider:
    """Static-map HTTP backend.  Server errors and connection trouble are
    transient (worth retrying); 4xx responses are not, a retried bad key
    stays bad."""

    def __init__(self, endpoint: str = DEFAULT_ENDPOINT,
                 timeout_s: float = 30.0,
                 session: requests.Session | None = None) -> None:
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def fetch(self, request: TileRequest, key: str) -> bytes:
        url = build_tile_url(request, key, self.endpoint)
        try:
            resp = self.session.get(url, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"{request.center.key}: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(
                f"{request.center.key}: server returned {resp.status_code}")
        if resp.status_code != 200:
            raise MalformedTileError(
                f"{request.center.key}: provider rejected the request "
                f"({resp.status_code})")
        return resp.content


class MockTileProvider:
    """Offline provider rendering deterministic synthetic tiles.

    The raster depends only on (cell, zoom, scale), so repeated runs and
    different machines agree byte-for-byte.  Failure injection knobs let
    tests exercise the retry, quota and validation paths without a
    network.
    """

    def __init__(self,
                 fail_transient: dict[str, int] | None = None,
                 fail_always: set[str] | None = None,
                 malformed: set[str] | None = None) -> None:
        self.fail_transient = dict(fail_transient or {})
        self.fail_always = set(fail_always or ())
        self.malformed = set(malformed or ())
        self.calls: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    def fetch(self, request: TileRequest, key: str) -> bytes:
        cell_key = request.center.key
        with self._lock:
            self.calls.append((cell_key, key))
            if cell_key in self.fail_always:
                raise TransportError(f"{cell_key}: injected persistent failure")
            left = self.fail_transient.get(cell_key, 0)
            if left > 0:
                self.fail_transient[cell_key] = left - 1
                raise TransportError(f"{cell_key}: injected transient failure")
            if cell_key in self.malformed:
                return b"not a png"
        return png_bytes(render_synthetic_tile(request))


def render_synthetic_tile(request: TileRequest) -> np.ndarray:
    """5x5 colour blocks seeded by the request, one shade per future chip."""
    c = request.center
    seed = ((round(c.lat * 100) + 9000) * 36001
            + (round(c.lon * 100) + 18000)) * 64 + request.zoom * 2 + request.scale
    rng = np.random.default_rng(seed)
    blocks = rng.integers(32, 224, size=(CHIP_GRID, CHIP_GRID, 3), dtype=np.uint8)
    tile = np.repeat(np.repeat(blocks, TILE_PX // CHIP_GRID, axis=0),
                     TILE_PX // CHIP_GRID, axis=1)
    # Thin dark gridlines make chip boundaries visible to human reviewers.
    step = TILE_PX // CHIP_GRID
    tile[::step, :, :] = 16
    tile[:, ::step, :] = 16
    return tile


class TileCache:
    """Tile store keyed by cell, zoom and scale: `{lat}_{lon}_z{zoom}s{scale}.png`.

    The cache is the resume mechanism: a cell with a file on disk is never
    refetched, and the file's mtime stands in as the fetch timestamp so
    reruns over a warm cache reproduce manifests byte for byte.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, cell: GridCell, zoom: int, scale: int) -> Path:
        return self.root / f"{cell.key}_z{zoom}s{scale}.png"

    def has(self, cell: GridCell, zoom: int, scale: int) -> bool:
        return self.path_for(cell, zoom, scale).exists()

    def store(self, cell: GridCell, zoom: int, scale: int,
              payload: bytes) -> Path:
        path = self.path_for(cell, zoom, scale)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(payload)
        os.replace(tmp, path)
        return path

    def load_pixels(self, cell: GridCell, zoom: int, scale: int) -> np.ndarray:
        path = self.path_for(cell, zoom, scale)
        return decode_tile(path.read_bytes(), str(path))

    def fetched_at(self, cell: GridCell, zoom: int, scale: int) -> datetime:
        mtime = self.path_for(cell, zoom, scale).stat().st_mtime
        return datetime.fromtimestamp(int(mtime), tz=timezone.utc)


class KeyPool:
    """Thread-safe round-robin over API keys with a per-key daily budget.

    Acquire picks the least-used key still under quota for the current UTC
    day; the day rolling over resets every count.  Every acquire consumes
    budget whether or not the subsequent request succeeds, mirroring how
    providers meter."""

    def __init__(self, keys: Sequence[str], daily_quota: int = 25_000,
                 clock: Callable[[], datetime] | None = None) -> None:
        keys = list(keys)
        if not keys or len(set(keys)) != len(keys) or any(not k for k in keys):
            raise ValueError("keys must be non-empty and unique")
        if daily_quota < 1:
            raise ValueError("daily_quota must be >= 1")
        self.daily_quota = daily_quota
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._used = {k: 0 for k in keys}
        self._day = self._clock().date()
        self._lock = threading.Lock()

    def acquire(self) -> str:
        with self._lock:
            today = self._clock().date()
            if today != self._day:
                self._day = today
                self._used = {k: 0 for k in self._used}
            key = min(self._used, key=self._used.get)
            if self._used[key] >= self.daily_quota:
                raise QuotaExhaustedError(
                    f"all {len(self._used)} key(s) exhausted for {self._day}")
            self._used[key] += 1
            return key

    def usage(self) -> dict[str, int]:
        with self._lock:
            return dict(self._used)

    @property
    def remaining_today(self) -> int:
        with self._lock:
            return sum(self.daily_quota - u for u in self._used.values())


def fetch_tile(provider: TileProvider, request: TileRequest, cache: TileCache,
               key_pool: KeyPool, *, retries: int = 3, backoff_s: float = 1.0,
               sleep: Callable[[float], None] = time.sleep,
               ) -> tuple[TileImage, bool]:
    """Fetch one tile through the cache.  Returns (tile, fetched_fresh).

    Cache hits cost nothing.  Misses consume one key acquisition per
    attempt (failed calls are still metered) and retry transport errors
    with doubling backoff; malformed payloads and quota exhaustion are
    final on the first occurrence.
    """
    if retries < 0:
        raise ValueError("retries must be >= 0")
    cell, zoom, scale = request.center, request.zoom, request.scale
    if cache.has(cell, zoom, scale):
        pixels = cache.load_pixels(cell, zoom, scale)
        return TileImage(request, pixels, cache.fetched_at(cell, zoom, scale)), False

    last_error: TransportError | None = None
    for attempt in range(retries + 1):
        if attempt > 0:
            sleep(backoff_s * (2.0 ** (attempt - 1)))
        key = key_pool.acquire()
        try:
            payload = provider.fetch(request, key)
        except TransportError as exc:
            last_error = exc
            continue
        pixels = decode_tile(payload, cell.key)
        cache.store(cell, zoom, scale, payload)
        return TileImage(request, pixels, cache.fetched_at(cell, zoom, scale)), True
    raise TransportError(
        f"{cell.key}: giving up after {retries + 1} attempts: {last_error}",
        attempts=retries + 1)


@dataclass(frozen=True)
class ManifestRow:
    """One chip's entry in the ingest manifest."""

    chip_id: str
    tile_lat: float
    tile_lon: float
    row: int
    col: int
    center_lat: float
    center_lon: float
    pixel_window: tuple[int, int, int, int]
    image: str
    fetched_at: str


def _manifest_line(row: ManifestRow) -> str:
    window = ", ".join(str(v) for v in row.pixel_window)
    return (f'{{"chip_id": "{row.chip_id}", '
            f'"tile_lat": {row.tile_lat:.2f}, "tile_lon": {row.tile_lon:.2f}, '
            f'"row": {row.row}, "col": {row.col}, '
            f'"center_lat": {row.center_lat:.6f}, '
            f'"center_lon": {row.center_lon:.6f}, '
            f'"pixel_window": [{window}], '
            f'"image": "{row.image}", '
            f'"fetched_at": "{row.fetched_at}"}}\n')


def read_manifest(path: str | Path) -> list[ManifestRow]:
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                rows.append(ManifestRow(
                    chip_id=raw["chip_id"],
                    tile_lat=float(raw["tile_lat"]),
                    tile_lon=float(raw["tile_lon"]),
                    row=int(raw["row"]), col=int(raw["col"]),
                    center_lat=float(raw["center_lat"]),
                    center_lon=float(raw["center_lon"]),
                    pixel_window=tuple(int(v) for v in raw["pixel_window"]),
                    image=raw["image"],
                    fetched_at=raw["fetched_at"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest row: {exc}") from exc
    return rows


def load_chip_pixels(row: ManifestRow, base_dir: str | Path) -> np.ndarray:
    """Crop one chip out of its cached tile, per the manifest geometry."""
    tile_path = Path(base_dir) / row.image
    pixels = decode_tile(tile_path.read_bytes(), str(tile_path))
    x0, y0, w, h = row.pixel_window
    return pixels[y0:y0 + h, x0:x0 + w]


@dataclass
class IngestSummary:
    requested: int
    fetched: int
    from_cache: int
    failed: dict[str, str]
    manifest_path: Path
    chip_rows: int


def ingest(plan: QueryPlan, provider: TileProvider, out_dir: str | Path, *,
           key_pool: KeyPool | None = None,
           keys: Sequence[str] = ("local",),
           daily_quota: int = 25_000,
           workers: int = 4,
           retries: int = 3,
           backoff_s: float = 1.0,
           sleep: Callable[[float], None] = time.sleep,
           materialize_chips: bool = False) -> IngestSummary:
    """Execute a plan: fetch every uncached cell, then write `chips.jsonl`
    with 25 rows per completed cell, in plan order regardless of which
    worker finished first.

    Individual cell failures are collected, not fatal; the summary names
    them and the CLI turns a non-empty failure set into a nonzero exit.
    Quota exhaustion stops new work and raises QuotaExhaustedError carrying
    the unfetched cells (the manifest for completed cells is still
    written), so tomorrow's run resumes from the cache.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = TileCache(out_dir / "tiles")
    chips_dir = out_dir / "chips"
    if materialize_chips:
        chips_dir.mkdir(exist_ok=True)
    pool = key_pool or KeyPool(keys, daily_quota=daily_quota)
    stop = threading.Event()

    def work(cell: GridCell) -> tuple:
        if stop.is_set():
            return ("blocked", cell, None)
        request = TileRequest(cell, plan.zoom, plan.scale)
        try:
            tile, fresh = fetch_tile(provider, request, cache, pool,
                                     retries=retries, backoff_s=backoff_s,
                                     sleep=sleep)
        except QuotaExhaustedError:
            stop.set()
            return ("blocked", cell, None)
        except IngestError as exc:
            return ("failed", cell, str(exc))
        if materialize_chips:
            for ref in chip_refs(cell, plan.zoom, plan.scale):
                out = chips_dir / f"{ref.chip_id}.png"
                if not out.exists():
                    out.write_bytes(png_bytes(chip_pixels(tile.pixels, ref)))
        return ("done", cell, (fresh, tile.fetched_at))

    if workers == 1:
        results = [work(cell) for cell in plan.centers]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(work, cell) for cell in plan.centers]
            results = [f.result() for f in futures]

    fetched = from_cache = 0
    failed: dict[str, str] = {}
    blocked: list[GridCell] = []
    manifest_path = out_dir / "chips.jsonl"
    chip_rows = 0
    with manifest_path.open("w", encoding="utf-8") as fh:
        for status, cell, payload in results:
            if status == "failed":
                failed[cell.key] = payload
                continue
            if status == "blocked":
                blocked.append(cell)
                continue
            fresh, fetched_at = payload
            fetched += 1 if fresh else 0
            from_cache += 0 if fresh else 1
            stamp = fetched_at.strftime("%Y-%m-%dT%H:%M:%SZ")
            image = f"tiles/{cache.path_for(cell, plan.zoom, plan.scale).name}"
            for ref in chip_refs(cell, plan.zoom, plan.scale):
                fh.write(_manifest_line(ManifestRow(
                    chip_id=ref.chip_id, tile_lat=cell.lat, tile_lon=cell.lon,
                    row=ref.row, col=ref.col,
                    center_lat=ref.center_lat, center_lon=ref.center_lon,
                    pixel_window=ref.pixel_window, image=image,
                    fetched_at=stamp)))
                chip_rows += 1

    summary = IngestSummary(requested=len(plan), fetched=fetched,
                            from_cache=from_cache, failed=failed,
                            manifest_path=manifest_path, chip_rows=chip_rows)
    if blocked:
        raise QuotaExhaustedError(
            f"daily quota exhausted with {len(blocked)} cell(s) remaining",
            remaining_cells=blocked, summary=summary)
    return summary
