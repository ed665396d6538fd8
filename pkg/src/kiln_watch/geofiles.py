"""Readers and writers for the geographic artifacts the pipeline exchanges:
detection lists (GeoJSON or CSV), mapped feature layers, population grids
and violation reports.

GeoJSON coordinates are [lon, lat] per the standard; everything else in
this package is (lat, lon).  The converters here are the only place that
flip happens.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .compliance import (
    FeatureSet,
    LineFeature,
    PointFeature,
    PolygonFeature,
    PopulationGrid,
    ViolationReport,
)
from .detect import KilnDetection
from .geo import GeoPoint

DETECTION_CSV_HEADER = ["detection_id", "lat", "lon", "max_score",
                        "support_count", "support", "verified"]


def write_detections_geojson(detections: Sequence[KilnDetection],
                             path: str | Path) -> None:
    features = []
    for det in detections:
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point",
                         "coordinates": [det.location.lon, det.location.lat]},
            "properties": {
                "detection_id": det.detection_id,
                "max_score": det.max_score,
                "support_count": len(det.support),
                "support": list(det.support),
                "verified": det.verified,
            },
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_detections_csv(detections: Sequence[KilnDetection],
                         path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETECTION_CSV_HEADER)
        for det in detections:
            writer.writerow([det.detection_id,
                             f"{det.location.lat:.6f}",
                             f"{det.location.lon:.6f}",
                             f"{det.max_score:.4f}",
                             len(det.support),
                             "|".join(det.support),
                             det.verified])


def read_detections(path: str | Path) -> list[KilnDetection]:
    """Read detections back from either output format, picked by suffix."""
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        return _read_detections_geojson(path)
    return _read_detections_csv(path)


def _read_detections_geojson(path: Path) -> list[KilnDetection]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: not a GeoJSON FeatureCollection")
    out = []
    for i, feature in enumerate(doc.get("features", [])):
        try:
            geom = feature["geometry"]
            if geom["type"] != "Point":
                raise ValueError(f"geometry type {geom['type']!r}, expected Point")
            lon, lat = geom["coordinates"]
            props = feature["properties"]
            out.append(KilnDetection(
                detection_id=str(props["detection_id"]),
                location=GeoPoint(float(lat), float(lon)),
                support=tuple(sorted(props.get("support",
                                               [props["detection_id"]]))),
                max_score=float(props.get("max_score", 1.0)),
                verified=props.get("verified", "unreviewed")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: feature {i}: {exc}") from exc
    return out


def _read_detections_csv(path: Path) -> list[KilnDetection]:
    out = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"detection_id", "lat", "lon"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                support = row.get("support") or row["detection_id"]
                out.append(KilnDetection(
                    detection_id=row["detection_id"],
                    location=GeoPoint(float(row["lat"]), float(row["lon"])),
                    support=tuple(sorted(support.split("|"))),
                    max_score=float(row.get("max_score") or 1.0),
                    verified=row.get("verified") or "unreviewed"))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def kilns_from_detections(detections: Sequence[KilnDetection],
                          ) -> list[tuple[str, GeoPoint]]:
    """Adapt detections to the (id, point) pairs the audit functions take."""
    return [(d.detection_id, d.location) for d in detections]


def read_kilns(path: str | Path) -> list[tuple[str, GeoPoint]]:
    return kilns_from_detections(read_detections(path))


def read_feature_collection(path: str | Path) -> dict[str, FeatureSet]:
    """Read a GeoJSON feature layer, grouping features into sets by their
    `feature_class` property.

    Supports Point, LineString and Polygon geometries.  Features without an
    id property get one derived from their position in the file.
    """
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: not a GeoJSON FeatureCollection")
    grouped: dict[str, list] = {}
    for i, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        fclass = props.get("feature_class")
        if not fclass:
            raise ValueError(f"{path}: feature {i} lacks a feature_class property")
        fid = str(props.get("id", f"{fclass}-{i}"))
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        try:
            if gtype == "Point":
                lon, lat = coords
                parsed = PointFeature(fid, GeoPoint(float(lat), float(lon)))
            elif gtype == "LineString":
                parsed = LineFeature(fid, tuple(
                    GeoPoint(float(lat), float(lon)) for lon, lat in coords))
            elif gtype == "Polygon":
                parsed = PolygonFeature(fid, tuple(
                    tuple(GeoPoint(float(lat), float(lon)) for lon, lat in ring)
                    for ring in coords))
            else:
                raise ValueError(f"unsupported geometry type {gtype!r}")
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: feature {i} ({fid}): {exc}") from exc
        grouped.setdefault(fclass, []).append(parsed)
    return {fclass: FeatureSet(fclass, tuple(feats))
            for fclass, feats in grouped.items()}


def read_population_csv(path: str | Path) -> PopulationGrid:
    """Read a `lat,lon,population` grid."""
    path = Path(path)
    cells = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["lat", "lon",
                                                             "population"]:
            raise ValueError(
                f"{path}:1: expected header lat,lon,population, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                cells.append((GeoPoint(float(row[0]), float(row[1])),
                              float(row[2])))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return PopulationGrid(tuple(cells))


def write_violation_geojson(report: ViolationReport,
                            kilns: Sequence[tuple[str, GeoPoint]],
                            path: str | Path) -> None:
    """One feature per audited kiln, flagged violating or compliant, with
    the offending counterpart and distance attached as evidence."""
    evidence = {v.kiln_id: v for v in report.violations}
    features = []
    for kid, point in sorted(kilns):
        v = evidence.get(kid)
        props: dict = {
            "kiln_id": kid,
            "rule_id": report.rule.rule_id,
            "status": "violating" if v is not None else "compliant",
        }
        if v is not None:
            props["offender_id"] = v.other_id
            if v.distance_km is not None:
                props["distance_km"] = round(v.distance_km, 6)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [point.lon, point.lat]},
            "properties": props,
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_violation_summary(reports: Sequence[ViolationReport],
                            skipped: Sequence[tuple],
                            path: str | Path) -> None:
    """Summary CSV: one row per rule with counts and the violating fraction."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rule_id", "kind", "threshold_km", "kilns_checked",
                         "violations", "fraction", "status"])
        for report in reports:
            rule = report.rule
            writer.writerow([rule.rule_id, rule.kind,
                             "" if rule.threshold_km is None else rule.threshold_km,
                             report.kilns_checked, len(report.violations),
                             f"{report.fraction:.4f}", "checked"])
        for rule, reason in skipped:
            writer.writerow([rule.rule_id, rule.kind,
                             "" if rule.threshold_km is None else rule.threshold_km,
                             "", "", "", f"skipped: {reason}"])


def read_ground_truth_csv(path: str | Path) -> list[tuple[str, str, str]]:
    """Read `chip_id,final_label,source` rows, the format shared by label
    exports and hard-negative files."""
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["chip_id",
                                                             "final_label",
                                                             "source"]:
            raise ValueError(
                f"{path}:1: expected header chip_id,final_label,source, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields")
            rows.append((row[0], row[1], row[2]))
    return rows
