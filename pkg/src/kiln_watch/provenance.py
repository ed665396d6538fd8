"""Run manifests: every CLI artifact is written alongside a record of the
exact inputs (by content digest), parameters and timestamps that produced
it, so a number in a report can be traced back to bytes on disk."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_run_manifest(artifact: str | Path, command: str,
                       arguments: Mapping[str, object],
                       inputs: Sequence[str | Path],
                       started_at: str, finished_at: str) -> Path:
    """Write `<artifact>.run.json` next to an artifact, atomically.

    Inputs are digested at write time; a manifest therefore certifies the
    artifact against the input bytes that were actually read.
    """
    artifact = Path(artifact)
    record = {
        "command": command,
        "arguments": {k: _plain(v) for k, v in sorted(arguments.items())},
        "inputs": [{"path": str(p), "sha256": file_digest(p)}
                   for p in inputs],
        "artifact": artifact.name,
        "started_at": started_at,
        "finished_at": finished_at,
        "tool_version": __version__,
    }
    target = artifact.parent / (artifact.name + ".run.json")
    fd, tmp = tempfile.mkstemp(dir=str(artifact.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def _plain(value: object) -> object:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    return str(value)
