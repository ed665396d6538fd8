"""Dual-annotation workflow over chip batches, event-sourced.

Every mutation (assignment, submission, moderator resolution) is appended
to a JSONL log before it touches in-memory state; rebuilding a store from
the log reproduces the state exactly.  Batches are one tile's 25 chips.
Two annotators label each batch independently; positionwise agreement
finalizes chips, disagreement routes just the conflicted positions to a
moderator.
"""

from __future__ import annotations

import csv
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .ingest import ManifestRow

LABEL_VOCAB = ("kiln", "no_kiln")
BATCH_SIZE = 25

STATUSES = ("pending", "assigned", "submitted_one", "agreed", "conflicted",
            "resolved")


class LabelError(Exception):
    """Base class for labeling-workflow violations."""


class UnknownBatchError(LabelError):
    pass


class InvalidSubmissionError(LabelError):
    """Malformed labels or a submitter who does not hold the assignment."""


class StateError(LabelError):
    """Operation not legal in the batch's current status."""


@dataclass(frozen=True)
class LabelBatch:
    """One tile's 25 chips in row-major order; the unit of assignment."""

    batch_id: str
    chip_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.chip_ids) != BATCH_SIZE:
            raise ValueError(
                f"batch {self.batch_id}: expected {BATCH_SIZE} chips, "
                f"got {len(self.chip_ids)}")
        if len(set(self.chip_ids)) != BATCH_SIZE:
            raise ValueError(f"batch {self.batch_id}: duplicate chip ids")


def build_batches(rows: Sequence[ManifestRow]) -> list[LabelBatch]:
    """Group manifest rows into batches, one per tile, in manifest order.

    A tile missing chips (or carrying extras) is a broken ingest and is
    rejected outright rather than queued for wasted annotator time.
    """
    order: list[str] = []
    groups: dict[str, list[ManifestRow]] = {}
    for row in rows:
        key = f"{row.tile_lat:.2f}_{row.tile_lon:.2f}"
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    batches = []
    for key in order:
        group = sorted(groups[key], key=lambda r: (r.row, r.col))
        positions = [(r.row, r.col) for r in group]
        expected = [(r, c) for r in range(5) for c in range(5)]
        if positions != expected:
            raise ValueError(
                f"tile {key}: manifest rows do not form a full 5x5 grid")
        batches.append(LabelBatch(batch_id=key,
                                  chip_ids=tuple(r.chip_id for r in group)))
    return batches


@dataclass
class _BatchState:
    batch: LabelBatch
    status: str = "pending"
    assignees: list[str] = field(default_factory=list)
    submissions: dict[str, tuple[str, ...]] = field(default_factory=dict)
    conflicts: tuple[str, ...] = ()
    finals: dict[str, tuple[str, str]] = field(default_factory=dict)


class LabelStore:
    """State machine over label batches, backed by an append-only log.

    pending -> assigned -> submitted_one -> agreed | conflicted -> resolved;
    agreed and resolved are terminal.  At most two distinct annotators ever
    hold a batch, and a submitted batch is immutable for its submitter.
    """

    def __init__(self, batches: Sequence[LabelBatch],
                 log_path: str | Path | None = None,
                 clock: Callable[[], datetime] | None = None) -> None:
        ids = [b.batch_id for b in batches]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate batch ids")
        self._lock = threading.RLock()
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._order = list(ids)
        self._states = {b.batch_id: _BatchState(batch=b) for b in batches}
        self._log_path = None if log_path is None else Path(log_path)
        self._log_fh = None
        if self._log_path is not None:
            if self._log_path.exists():
                self._replay(self._log_path)
            self._log_fh = self._log_path.open("a", encoding="utf-8")

    # -- event plumbing ----------------------------------------------------

    def _replay(self, path: Path) -> None:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: corrupt event: {exc}") from exc
                try:
                    self._apply(event)
                except LabelError as exc:
                    raise ValueError(
                        f"{path}:{lineno}: log replay rejected event: {exc}"
                    ) from exc

    def _append(self, event: dict) -> None:
        self._apply(event)
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(event, sort_keys=True) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())

    def _apply(self, event: dict) -> None:
        kind = event.get("event")
        if kind == "assign":
            self._apply_assign(event["batch_id"], event["annotator_id"])
        elif kind == "submit":
            self._apply_submit(event["batch_id"], event["annotator_id"],
                               tuple(event["labels"]))
        elif kind == "resolve":
            self._apply_resolve(event["batch_id"], event["moderator_id"],
                                dict(event["decisions"]))
        else:
            raise LabelError(f"unknown event kind {kind!r}")

    def _state(self, batch_id: str) -> _BatchState:
        state = self._states.get(batch_id)
        if state is None:
            raise UnknownBatchError(f"no such batch {batch_id!r}")
        return state

    def _apply_assign(self, batch_id: str, annotator_id: str) -> None:
        state = self._state(batch_id)
        if not annotator_id:
            raise InvalidSubmissionError("annotator_id must be non-empty")
        if annotator_id in state.assignees:
            return
        if state.status not in ("pending", "assigned", "submitted_one"):
            raise StateError(f"batch {batch_id} is {state.status}")
        if len(state.assignees) >= 2:
            raise StateError(f"batch {batch_id} already has two annotators")
        state.assignees.append(annotator_id)
        if state.status == "pending":
            state.status = "assigned"

    def _apply_submit(self, batch_id: str, annotator_id: str,
                      labels: tuple[str, ...]) -> None:
        state = self._state(batch_id)
        if annotator_id not in state.assignees:
            raise InvalidSubmissionError(
                f"{annotator_id!r} does not hold batch {batch_id}")
        if annotator_id in state.submissions:
            raise StateError(
                f"{annotator_id!r} already submitted batch {batch_id}; "
                "submissions are immutable")
        if state.status not in ("assigned", "submitted_one"):
            raise StateError(f"batch {batch_id} is {state.status}")
        if len(labels) != BATCH_SIZE:
            raise InvalidSubmissionError(
                f"expected {BATCH_SIZE} labels, got {len(labels)}")
        bad = sorted({l for l in labels if l not in LABEL_VOCAB})
        if bad:
            raise InvalidSubmissionError(
                f"labels outside vocabulary {LABEL_VOCAB}: {bad}")
        state.submissions[annotator_id] = labels
        if len(state.submissions) == 1:
            state.status = "submitted_one"
            return
        first, second = (state.submissions[a] for a in state.assignees)
        disagree = tuple(chip for chip, a, b
                         in zip(state.batch.chip_ids, first, second) if a != b)
        if disagree:
            state.conflicts = disagree
            state.status = "conflicted"
        else:
            state.status = "agreed"
        for i, chip in enumerate(state.batch.chip_ids):
            if first[i] == second[i]:
                state.finals[chip] = (first[i], "agreed")

    def _apply_resolve(self, batch_id: str, moderator_id: str,
                       decisions: dict[str, str]) -> None:
        state = self._state(batch_id)
        if not moderator_id:
            raise InvalidSubmissionError("moderator_id must be non-empty")
        if state.status != "conflicted":
            raise StateError(f"batch {batch_id} is {state.status}, "
                             "only conflicted batches can be resolved")
        if set(decisions) != set(state.conflicts):
            raise InvalidSubmissionError(
                f"decisions must cover exactly the conflicted chips "
                f"{sorted(state.conflicts)}, got {sorted(decisions)}")
        bad = sorted({l for l in decisions.values() if l not in LABEL_VOCAB})
        if bad:
            raise InvalidSubmissionError(
                f"labels outside vocabulary {LABEL_VOCAB}: {bad}")
        for chip, label in decisions.items():
            state.finals[chip] = (label, "moderated")
        state.status = "resolved"

    # -- public workflow ---------------------------------------------------

    def next_batch(self, annotator_id: str) -> LabelBatch | None:
        """Assign and return the first batch this annotator can work on.

        An annotator holding an unsubmitted batch gets that batch back
        rather than a new one; otherwise assignment is first-in-first-out
        over batches still short of two annotators.  Returns None when
        nothing is available.
        """
        with self._lock:
            if not annotator_id:
                raise InvalidSubmissionError("annotator_id must be non-empty")
            for batch_id in self._order:
                state = self._states[batch_id]
                if (annotator_id in state.assignees
                        and annotator_id not in state.submissions
                        and state.status in ("assigned", "submitted_one")):
                    return state.batch
            for batch_id in self._order:
                state = self._states[batch_id]
                if (state.status in ("pending", "assigned", "submitted_one")
                        and len(state.assignees) < 2
                        and annotator_id not in state.assignees):
                    self._append({"event": "assign", "batch_id": batch_id,
                                  "annotator_id": annotator_id,
                                  "at": self._now()})
                    return state.batch
            return None

    def submit_labels(self, batch_id: str, annotator_id: str,
                      labels: Sequence[str]) -> str:
        """Record one annotator's 25 labels; returns the batch's new status."""
        with self._lock:
            self._append({"event": "submit", "batch_id": batch_id,
                          "annotator_id": annotator_id,
                          "labels": list(labels), "at": self._now()})
            return self._states[batch_id].status

    def resolve_conflict(self, batch_id: str, moderator_id: str,
                         decisions: Mapping[str, str]) -> str:
        """Apply a moderator's per-chip decisions to a conflicted batch."""
        with self._lock:
            self._append({"event": "resolve", "batch_id": batch_id,
                          "moderator_id": moderator_id,
                          "decisions": dict(decisions), "at": self._now()})
            return self._states[batch_id].status

    def _now(self) -> str:
        return self._clock().strftime("%Y-%m-%dT%H:%M:%SZ")

    # -- queries -----------------------------------------------------------

    def batch(self, batch_id: str) -> LabelBatch:
        with self._lock:
            return self._state(batch_id).batch

    def status(self, batch_id: str) -> str:
        with self._lock:
            return self._state(batch_id).status

    def assignees(self, batch_id: str) -> tuple[str, ...]:
        with self._lock:
            return tuple(self._state(batch_id).assignees)

    def submission(self, batch_id: str, annotator_id: str,
                   ) -> tuple[str, ...] | None:
        with self._lock:
            return self._state(batch_id).submissions.get(annotator_id)

    def conflicts(self) -> list[dict]:
        """Open conflicts: for each conflicted batch, the disputed chips
        with both annotators' labels, ready for a moderator."""
        with self._lock:
            out = []
            for batch_id in self._order:
                state = self._states[batch_id]
                if state.status != "conflicted":
                    continue
                chip_pos = {c: i for i, c in enumerate(state.batch.chip_ids)}
                out.append({
                    "batch_id": batch_id,
                    "chips": [{
                        "chip_id": chip,
                        "labels": {a: state.submissions[a][chip_pos[chip]]
                                   for a in state.assignees},
                    } for chip in state.conflicts],
                })
            return out

    def ground_truth(self) -> list[tuple[str, str, str]]:
        """Final (chip_id, label, source) rows from agreed and resolved
        batches, in batch order then grid order.  Source records whether
        the label came from agreement or moderation."""
        with self._lock:
            rows = []
            for batch_id in self._order:
                state = self._states[batch_id]
                if state.status not in ("agreed", "resolved"):
                    continue
                for chip in state.batch.chip_ids:
                    label, source = state.finals[chip]
                    rows.append((chip, label, source))
            return rows

    def stats(self) -> dict:
        with self._lock:
            by_status = {status: 0 for status in STATUSES}
            per_annotator: dict[str, int] = {}
            for state in self._states.values():
                by_status[state.status] += 1
                for annotator in state.submissions:
                    per_annotator[annotator] = per_annotator.get(annotator, 0) + 1
            finalized = sum(len(s.finals) for s in self._states.values()
                            if s.status in ("agreed", "resolved"))
            return {
                "batches": by_status,
                "total_batches": len(self._states),
                "submitted_by": dict(sorted(per_annotator.items())),
                "chips_finalized": finalized,
                "open_conflicts": by_status["conflicted"],
            }

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None


def export_ground_truth(store: LabelStore, path: str | Path) -> int:
    """Write the ground-truth CSV (chip_id,final_label,source); returns the
    row count."""
    rows = store.ground_truth()
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chip_id", "final_label", "source"])
        writer.writerows(rows)
    return len(rows)
