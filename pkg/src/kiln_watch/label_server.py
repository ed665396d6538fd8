"""HTTP facade over the label store for browser-based annotation.

Opaque bearer tokens in the X-Auth-Token header map to a user id and a
role; annotators pull batches and submit labels, moderators see and
resolve conflicts, everyone can read progress stats.  Chip images are
served as PNGs cropped on demand from the cached tiles, outside the /api
prefix because <img> tags cannot attach headers.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .ingest import ManifestRow, decode_tile, png_bytes
from .labels import (
    InvalidSubmissionError,
    LabelStore,
    StateError,
    UnknownBatchError,
)

INSTRUCTIONS = (
    "Each batch is a 5x5 grid of 224 px satellite chips. Mark a chip "
    "`kiln` when it contains any part of a brick kiln: look for the oval "
    "or racetrack-shaped firing trench, a central chimney and its shadow, "
    "fired-brick stacking yards, or the characteristic reddish spoil. "
    "Power-plant cooling towers and chimneys are the classic false "
    "friends; without the oval trench, mark `no_kiln`. When fewer than "
    "half the pixels of a kiln are visible at a chip edge, still mark "
    "`kiln`; the merge step deduplicates neighbours.")


class _Identity:
    def __init__(self, user_id: str, role: str) -> None:
        self.user_id = user_id
        self.role = role


class LabelsBody(BaseModel):
    labels: list[str]


class ResolutionBody(BaseModel):
    decisions: dict[str, str]


def create_app(store: LabelStore,
               manifest_rows: Sequence[ManifestRow],
               data_dir: str | Path,
               tokens: Mapping[str, tuple[str, str]],
               ui_dir: str | Path | None = None) -> FastAPI:
    """Build the service.

    tokens maps each opaque token to (user_id, role) with role `annotator`
    or `moderator`.  data_dir is the ingest output directory the manifest's
    relative image paths resolve against.  ui_dir, when given, is mounted
    at / so the labeling frontend and the API share an origin.
    """
    for token, (user_id, role) in tokens.items():
        if role not in ("annotator", "moderator"):
            raise ValueError(f"{user_id}: unknown role {role!r}")
        if not token or not user_id:
            raise ValueError("tokens and user ids must be non-empty")

    data_dir = Path(data_dir)
    by_chip = {row.chip_id: row for row in manifest_rows}
    app = FastAPI(title="kiln-watch label service")

    @lru_cache(maxsize=32)
    def tile_pixels(image_rel: str) -> np.ndarray:
        path = data_dir / image_rel
        return decode_tile(path.read_bytes(), str(path))

    def identity(x_auth_token: str | None = Header(default=None)) -> _Identity:
        if x_auth_token is None:
            raise HTTPException(status_code=401, detail="missing X-Auth-Token")
        entry = tokens.get(x_auth_token)
        if entry is None:
            raise HTTPException(status_code=403, detail="unrecognized token")
        return _Identity(*entry)

    def require_role(who: _Identity, role: str) -> None:
        if who.role != role:
            raise HTTPException(status_code=403,
                                detail=f"this endpoint needs the {role} role")

    def translate(exc: Exception) -> HTTPException:
        if isinstance(exc, UnknownBatchError):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, StateError):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, InvalidSubmissionError):
            return HTTPException(status_code=422, detail=str(exc))
        raise exc

    @app.get("/api/batches/next")
    def next_batch(who: _Identity = Depends(identity)) -> dict:
        require_role(who, "annotator")
        batch = store.next_batch(who.user_id)
        if batch is None:
            return {"batch": None, "instructions": INSTRUCTIONS}
        already = store.submission(batch.batch_id, who.user_id)
        return {
            "batch": {
                "batch_id": batch.batch_id,
                "chips": [{
                    "chip_id": chip_id,
                    "row": i // 5,
                    "col": i % 5,
                    "image_url": f"/chips/{chip_id}.png",
                } for i, chip_id in enumerate(batch.chip_ids)],
                "already_submitted": already is not None,
            },
            "instructions": INSTRUCTIONS,
        }

    @app.post("/api/batches/{batch_id}/labels")
    def submit(batch_id: str, body: LabelsBody,
               who: _Identity = Depends(identity)) -> dict:
        require_role(who, "annotator")
        try:
            status = store.submit_labels(batch_id, who.user_id, body.labels)
        except (UnknownBatchError, StateError, InvalidSubmissionError) as exc:
            raise translate(exc) from exc
        return {"batch_id": batch_id, "status": status}

    @app.get("/api/conflicts")
    def conflicts(who: _Identity = Depends(identity)) -> dict:
        require_role(who, "moderator")
        out = []
        for conflict in store.conflicts():
            out.append({
                "batch_id": conflict["batch_id"],
                "chips": [{
                    **chip, "image_url": f"/chips/{chip['chip_id']}.png",
                } for chip in conflict["chips"]],
            })
        return {"conflicts": out}

    @app.post("/api/conflicts/{batch_id}/resolution")
    def resolve(batch_id: str, body: ResolutionBody,
                who: _Identity = Depends(identity)) -> dict:
        require_role(who, "moderator")
        try:
            status = store.resolve_conflict(batch_id, who.user_id, body.decisions)
        except (UnknownBatchError, StateError, InvalidSubmissionError) as exc:
            raise translate(exc) from exc
        return {"batch_id": batch_id, "status": status}

    @app.get("/api/stats")
    def stats(who: _Identity = Depends(identity)) -> dict:
        return store.stats()

    @app.get("/chips/{chip_id}.png")
    def chip_png(chip_id: str) -> Response:
        row = by_chip.get(chip_id)
        if row is None:
            raise HTTPException(status_code=404, detail=f"no chip {chip_id!r}")
        pixels = tile_pixels(row.image)
        x0, y0, w, h = row.pixel_window
        return Response(content=png_bytes(pixels[y0:y0 + h, x0:x0 + w]),
                        media_type="image/png")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")

    return app
