"""Turn per-chip classifier scores into deduplicated kiln detections and
compute the evaluation numbers reported alongside them: precision, recall,
F1, per-district tables, fold summaries, growth rates and hard-negative
exports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

from .geo import GeoPoint
from .spatial import GridIndex

VERIFIED_STATES = ("unreviewed", "true_positive", "false_positive")

DEFAULT_THRESHOLD = 0.5
DEFAULT_MERGE_RADIUS_M = 250.0


class UndefinedMetricError(ValueError):
    """A ratio whose denominator is zero; refusing to silently report 0."""


@dataclass(frozen=True)
class Prediction:
    """One chip's classifier output."""

    chip_id: str
    center: GeoPoint
    score: float

    def __post_init__(self) -> None:
        if not self.chip_id:
            raise ValueError("chip_id must be non-empty")
        if not (isinstance(self.score, (int, float))
                and math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score!r} outside [0, 1]")


@dataclass(frozen=True)
class KilnDetection:
    """A merged detection: one physical kiln supported by >= 1 chips."""

    detection_id: str
    location: GeoPoint
    support: tuple[str, ...]
    max_score: float
    verified: str = "unreviewed"

    def __post_init__(self) -> None:
        if not self.support:
            raise ValueError("detection needs at least one supporting chip")
        if list(self.support) != sorted(self.support):
            raise ValueError("support chip ids must be sorted")
        if self.verified not in VERIFIED_STATES:
            raise ValueError(f"verified must be one of {VERIFIED_STATES}, "
                             f"got {self.verified!r}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int = 0

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{name} must be a non-negative int, got {v!r}")


def read_predictions(path: str | Path) -> list[Prediction]:
    """Read a `chip_id,lat,lon,score` CSV, validating every row.

    Errors carry the 1-based file line number so a bad row in a
    hundred-thousand-line scored survey can be found and fixed.
    """
    path = Path(path)
    preds: list[Prediction] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["chip_id", "lat",
                                                             "lon", "score"]:
            raise ValueError(
                f"{path}:1: expected header chip_id,lat,lon,score, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                preds.append(Prediction(chip_id=row[0].strip(),
                                        center=GeoPoint(float(row[1]), float(row[2])),
                                        score=float(row[3])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return preds


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def threshold_and_merge(predictions: Sequence[Prediction],
                        threshold: float = DEFAULT_THRESHOLD,
                        merge_radius_m: float = DEFAULT_MERGE_RADIUS_M,
                        ) -> list[KilnDetection]:
    """Keep chips scoring >= threshold and single-link cluster them into
    detections, merging chips strictly closer than merge_radius_m.

    A kiln near a chip boundary fires on both chips; merging collapses the
    pair.  The strict inequality makes radius 0 a no-merge pass-through.
    Input order does not matter: chips are processed sorted by chip_id, the
    cluster id is the smallest member chip_id, and output is sorted by
    detection_id.  Locations are score-weighted centroids, so a borderline
    second chip nudges rather than drags the point.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold!r} outside [0, 1]")
    if merge_radius_m < 0:
        raise ValueError("merge_radius_m must be >= 0")
    seen: set[str] = set()
    for p in predictions:
        if p.chip_id in seen:
            raise ValueError(f"duplicate chip_id {p.chip_id!r} in predictions")
        seen.add(p.chip_id)

    kept = sorted((p for p in predictions if p.score >= threshold),
                  key=lambda p: p.chip_id)
    if not kept:
        return []

    radius_km = merge_radius_m / 1000.0
    uf = _UnionFind(len(kept))
    if radius_km > 0:
        index = GridIndex(((i, p.center) for i, p in enumerate(kept)),
                          cell_km=max(radius_km, 0.05))
        for i, p in enumerate(kept):
            for j, _, dist in index.within(p.center, radius_km):
                if j != i and dist < radius_km:
                    uf.union(i, j)

    clusters: dict[int, list[Prediction]] = {}
    for i, p in enumerate(kept):
        clusters.setdefault(uf.find(i), []).append(p)

    detections = []
    for members in clusters.values():
        support = tuple(sorted(p.chip_id for p in members))
        total = sum(p.score for p in members)
        if total > 0:
            lat = sum(p.score * p.center.lat for p in members) / total
            lon = sum(p.score * p.center.lon for p in members) / total
        else:
            # All-zero scores can only pass a zero threshold; fall back to
            # the plain mean.
            lat = sum(p.center.lat for p in members) / len(members)
            lon = sum(p.center.lon for p in members) / len(members)
        detections.append(KilnDetection(
            detection_id=f"det_{support[0]}",
            location=GeoPoint(lat, lon),
            support=support,
            max_score=max(p.score for p in members)))
    detections.sort(key=lambda d: d.detection_id)
    return detections


def mark_verified(detections: Sequence[KilnDetection],
                  verdicts: Mapping[str, str]) -> list[KilnDetection]:
    """Apply manual review verdicts keyed by detection_id."""
    by_id = {d.detection_id: d for d in detections}
    unknown = sorted(set(verdicts) - set(by_id))
    if unknown:
        raise ValueError(f"verdicts for unknown detections: {unknown}")
    out = []
    for det in detections:
        if det.detection_id in verdicts:
            det = replace(det, verified=verdicts[det.detection_id])
        out.append(det)
    return out


def export_hard_negatives(detections: Sequence[KilnDetection],
                          ) -> list[tuple[str, str, str]]:
    """Ground-truth rows (chip_id, no_kiln, verification) for every support
    chip of a detection a reviewer marked false_positive.  Feeding these
    back into training is how the power-plant confusion was beaten down."""
    rows = []
    for det in detections:
        if det.verified != "false_positive":
            continue
        for chip_id in det.support:
            rows.append((chip_id, "no_kiln", "verification"))
    rows.sort()
    return rows


def write_hard_negatives(detections: Sequence[KilnDetection],
                         path: str | Path) -> int:
    rows = export_hard_negatives(detections)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chip_id", "final_label", "source"])
        writer.writerows(rows)
    return len(rows)


def precision(counts: ConfusionCounts) -> float:
    if counts.tp + counts.fp == 0:
        raise UndefinedMetricError("precision undefined: tp + fp == 0")
    return counts.tp / (counts.tp + counts.fp)


def recall(counts: ConfusionCounts) -> float:
    if counts.tp + counts.fn == 0:
        raise UndefinedMetricError("recall undefined: tp + fn == 0")
    return counts.tp / (counts.tp + counts.fn)


def f1(counts: ConfusionCounts) -> float:
    p = precision(counts)
    r = recall(counts)
    if p + r == 0:
        raise UndefinedMetricError("f1 undefined: precision + recall == 0")
    return 2.0 * p * r / (p + r)


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of already-computed precision and recall.

    Defined as 0.0 at exactly (0, 0), the continuous extension along any
    approach path; published tables use that convention for degenerate
    rows.
    """
    for name, v in (("precision", p), ("recall", r)):
        if not (isinstance(v, (int, float)) and math.isfinite(v)
                and 0.0 <= v <= 1.0):
            raise ValueError(f"{name} {v!r} outside [0, 1]")
    if p == 0.0 and r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


@dataclass(frozen=True)
class DistrictRow:
    district: str
    tp: int
    fp: int
    precision: float


@dataclass(frozen=True)
class DistrictSummary:
    rows: tuple[DistrictRow, ...]
    total_tp: int
    total_fp: int
    aggregate_precision: float


def district_summary(counts: Sequence[tuple[str, int, int]]) -> DistrictSummary:
    """Per-district precision plus the count-weighted aggregate.

    The aggregate is sum(tp) / (sum(tp) + sum(fp)), not the mean of the
    per-district precisions; a large sloppy district should drag the
    total down more than a small clean one lifts it.
    """
    if not counts:
        raise ValueError("no district rows")
    rows = []
    total_tp = total_fp = 0
    for district, tp, fp in counts:
        for name, v in (("tp", tp), ("fp", fp)):
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(
                    f"{district}: {name} must be a non-negative int, got {v!r}")
        if tp + fp == 0:
            raise UndefinedMetricError(
                f"{district}: precision undefined, no verified detections")
        rows.append(DistrictRow(district, tp, fp, tp / (tp + fp)))
        total_tp += tp
        total_fp += fp
    return DistrictSummary(rows=tuple(rows), total_tp=total_tp,
                           total_fp=total_fp,
                           aggregate_precision=total_tp / (total_tp + total_fp))


def fold_summary(folds: Sequence[tuple[float, float, float]],
                 ) -> tuple[float, float, float]:
    """Mean (precision, recall, f1) across cross-validation folds."""
    if not folds:
        raise ValueError("no folds")
    n = len(folds)
    sums = [0.0, 0.0, 0.0]
    for fold in folds:
        if len(fold) != 3:
            raise ValueError(f"fold must be (precision, recall, f1), got {fold!r}")
        for i, v in enumerate(fold):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"fold metric {v!r} outside [0, 1]")
            sums[i] += v
    return sums[0] / n, sums[1] / n, sums[2] / n


@dataclass(frozen=True)
class GrowthReport:
    intervals: tuple[tuple[date, date, float], ...]
    overall_pct: float


def kiln_growth(snapshots: Sequence[tuple[date, int]]) -> GrowthReport:
    """Percent change in kiln count between consecutive dated snapshots and
    from first to last."""
    if len(snapshots) < 2:
        raise ValueError("growth needs at least two snapshots")
    for d, count in snapshots:
        if not isinstance(d, date):
            raise TypeError(f"snapshot date must be a date, got {d!r}")
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise ValueError(f"snapshot count must be a non-negative int, got {count!r}")
    dates = [d for d, _ in snapshots]
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ValueError("snapshot dates must be strictly increasing")
    intervals = []
    for (d0, c0), (d1, c1) in zip(snapshots, snapshots[1:]):
        if c0 == 0:
            raise UndefinedMetricError(
                f"count is 0 on {d0.isoformat()}; percent change undefined")
        intervals.append((d0, d1, 100.0 * (c1 - c0) / c0))
    first, last = snapshots[0][1], snapshots[-1][1]
    return GrowthReport(intervals=tuple(intervals),
                        overall_pct=100.0 * (last - first) / first)
