"""End-to-end tests of the command-line interface via click's test runner.

Commands run against small synthetic inputs under tmp_path; assertions
cover exit codes, the exact echo lines, artifact bytes and the run
manifests written next to each artifact.
"""

from __future__ import annotations

import hashlib
import json
import math
import re

import numpy as np
import pytest
from click.testing import CliRunner

from kiln_watch import __version__, geofiles, ingest, labels, sslmath, survey
from kiln_watch.cli import main
from kiln_watch.detect import KilnDetection
from kiln_watch.geo import KM_PER_DEG, GeoPoint

TIMESTAMP = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z")


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    # Settings resolution reads these directly; ambient values would leak
    # into every test.
    for name in ("KILN_WATCH_API_KEY", "KILN_WATCH_ENDPOINT",
                 "KILN_WATCH_DAILY_QUOTA"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture()
def region_6(tmp_path):
    """Bounding box covering a 2 x 3 lattice of centigrid centers."""
    path = tmp_path / "region.txt"
    path.write_text("bbox 28.696 77.096 28.714 77.124\n", encoding="utf-8")
    return path


@pytest.fixture()
def plan_6(tmp_path, runner, region_6):
    out = tmp_path / "plan6.jsonl"
    result = runner.invoke(main, ["plan", "--region", str(region_6),
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output
    return out


def check_run_manifest(artifact, command, inputs):
    """Assert `<artifact>.run.json` matches its artifact and input bytes."""
    doc = json.loads((artifact.parent / (artifact.name + ".run.json"))
                     .read_text(encoding="utf-8"))
    assert doc["command"] == command
    assert doc["artifact"] == artifact.name
    assert doc["tool_version"] == __version__
    assert TIMESTAMP.fullmatch(doc["started_at"])
    assert TIMESTAMP.fullmatch(doc["finished_at"])
    assert doc["started_at"] <= doc["finished_at"]
    assert doc["inputs"] == [
        {"path": str(p), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
        for p in inputs]
    return doc


# -- group basics -----------------------------------------------------------


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "kiln-watch" in result.output
    assert __version__ in result.output


def test_help_lists_every_command(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for command in ("plan", "estimate", "fetch", "serve-labels",
                    "export-labels", "ssl", "detections", "metrics",
                    "district-report", "check", "exposure", "growth"):
        assert command in result.output


def test_unknown_command_is_usage_error(runner):
    result = runner.invoke(main, ["frobnicate"])
    assert result.exit_code == 2


def test_missing_config_file_is_usage_error(runner, tmp_path):
    result = runner.invoke(main, ["--config", str(tmp_path / "nope.toml"),
                                  "metrics", "--tp", "1", "--fp", "1"])
    assert result.exit_code == 2


# -- plan ---------------------------------------------------------------------


def test_plan_bbox_writes_plan_and_manifest(runner, tmp_path, region_6):
    out = tmp_path / "plan.jsonl"
    result = runner.invoke(main, ["plan", "--region", str(region_6),
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output == f"planned 6 queries -> {out}\n"

    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    assert lines[0] == '{"lat": 28.70, "lon": 77.10, "zoom": 16, "scale": 2}'
    assert lines[-1] == '{"lat": 28.71, "lon": 77.12, "zoom": 16, "scale": 2}'

    doc = check_run_manifest(out, "plan", [region_6])
    assert doc["arguments"] == {"mask": None, "region": str(region_6),
                                "scale": 2, "stride": 0.01, "zoom": 16}


def test_plan_is_byte_deterministic(runner, tmp_path, region_6):
    out_a, out_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (out_a, out_b):
        result = runner.invoke(main, ["plan", "--region", str(region_6),
                                      "-o", str(out)])
        assert result.exit_code == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_plan_zoom_scale_flags(runner, tmp_path, region_6):
    out = tmp_path / "plan.jsonl"
    result = runner.invoke(main, ["plan", "--region", str(region_6),
                                  "--zoom", "17", "--scale", "1",
                                  "-o", str(out)])
    assert result.exit_code == 0
    first = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert (first["zoom"], first["scale"]) == (17, 1)


def test_plan_polygon_region(runner, tmp_path):
    region = tmp_path / "tri.txt"
    region.write_text("28.696 77.096\n28.696 77.134\n28.724 77.096\n",
                      encoding="utf-8")
    out = tmp_path / "plan.jsonl"
    result = runner.invoke(main, ["plan", "--region", str(region),
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output

    rings = survey.parse_region(region)
    expected = survey.plan_queries(survey.rings_bbox(rings), mask=rings)
    assert f"planned {len(expected)} queries" in result.output
    got = survey.read_plan(out)
    assert got.centers == expected.centers


def test_plan_mask_drops_outside_centers(runner, tmp_path, region_6):
    mask = tmp_path / "mask.txt"
    # Only the 77.10 column survives this sliver.
    mask.write_text("28.690 77.095\n28.690 77.105\n28.720 77.105\n"
                    "28.720 77.095\n", encoding="utf-8")
    out = tmp_path / "plan.jsonl"
    result = runner.invoke(main, ["plan", "--region", str(region_6),
                                  "--mask", str(mask), "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert "planned 2 queries" in result.output
    assert {cell.lon for cell in survey.read_plan(out).centers} == {77.10}
    doc = check_run_manifest(out, "plan", [region_6, mask])
    assert doc["arguments"]["mask"] == str(mask)


def test_plan_mask_must_be_polygon(runner, tmp_path, region_6):
    mask = tmp_path / "mask.txt"
    mask.write_text("bbox 28.0 77.0 29.0 78.0\n", encoding="utf-8")
    result = runner.invoke(main, ["plan", "--region", str(region_6),
                                  "--mask", str(mask),
                                  "-o", str(tmp_path / "p.jsonl")])
    assert result.exit_code == 1
    assert "--mask must be a polygon file" in result.stderr


def test_plan_missing_region_is_usage_error(runner, tmp_path):
    result = runner.invoke(main, ["plan", "--region",
                                  str(tmp_path / "absent.txt"),
                                  "-o", str(tmp_path / "p.jsonl")])
    assert result.exit_code == 2


def test_plan_bad_stride_fails_cleanly(runner, tmp_path, region_6):
    result = runner.invoke(main, ["plan", "--region", str(region_6),
                                  "--stride", "0.015",
                                  "-o", str(tmp_path / "p.jsonl")])
    assert result.exit_code == 1
    assert "stride" in result.stderr


# -- estimate -----------------------------------------------------------------


def test_estimate_output_lines(runner, plan_6):
    result = runner.invoke(main, ["estimate", "--plan", str(plan_6)])
    assert result.exit_code == 0
    assert result.output == ("queries:           6\n"
                             "chips:             150\n"
                             "keys:              1\n"
                             "daily quota/key:   25000\n"
                             "chips per key-day: 625000\n"
                             "api days:          1\n")


def _api_days(output: str) -> int:
    match = re.search(r"api days:\s+(\d+)", output)
    assert match, output
    return int(match.group(1))


def test_estimate_quota_precedence(runner, tmp_path, plan_6):
    """Env beats flag beats config beats the built-in default."""
    config = tmp_path / "cfg.toml"
    config.write_text("[provider]\ndaily_quota = 3\n", encoding="utf-8")

    # 6 queries: quota 3 -> 2 days, quota 2 -> 3 days, quota 1 -> 6 days.
    result = runner.invoke(main, ["--config", str(config),
                                  "estimate", "--plan", str(plan_6)])
    assert result.exit_code == 0
    assert "daily quota/key:   3" in result.output
    assert _api_days(result.output) == 2

    result = runner.invoke(main, ["--config", str(config), "estimate",
                                  "--plan", str(plan_6),
                                  "--daily-quota", "2"])
    assert _api_days(result.output) == 3

    result = runner.invoke(main, ["--config", str(config), "estimate",
                                  "--plan", str(plan_6),
                                  "--daily-quota", "2"],
                           env={"KILN_WATCH_DAILY_QUOTA": "1"})
    assert _api_days(result.output) == 6


def test_estimate_keys_divide_days(runner, plan_6):
    result = runner.invoke(main, ["estimate", "--plan", str(plan_6),
                                  "--keys", "3", "--daily-quota", "1"])
    assert result.exit_code == 0
    assert _api_days(result.output) == 2


def test_estimate_empty_plan_fails(runner, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    result = runner.invoke(main, ["estimate", "--plan", str(empty)])
    assert result.exit_code == 1
    assert "empty plan" in result.stderr


# -- fetch --------------------------------------------------------------------


def test_fetch_mock_cold_then_warm(runner, tmp_path, plan_6):
    data = tmp_path / "data"
    args = ["fetch", "--plan", str(plan_6), "-o", str(data), "--mock",
            "--workers", "2"]

    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    manifest = data / "chips.jsonl"
    assert result.output.splitlines() == [
        "requested: 6  fetched: 6  cached: 0  failed: 0",
        f"manifest: {manifest} ({6 * 25} chips)",
    ]
    assert len(manifest.read_text(encoding="utf-8").splitlines()) == 150
    doc = check_run_manifest(manifest, "fetch", [plan_6])
    assert doc["arguments"]["mock"] is True
    assert doc["arguments"]["daily_quota"] == 25000
    before = manifest.read_bytes()

    # Warm rerun: everything served from cache, identical manifest bytes.
    result = runner.invoke(main, args)
    assert result.exit_code == 0
    assert "requested: 6  fetched: 0  cached: 6  failed: 0" in result.output
    assert manifest.read_bytes() == before


def test_fetch_quota_exhaustion_then_resume(runner, tmp_path):
    plan = tmp_path / "plan5.jsonl"
    region = tmp_path / "row.txt"
    region.write_text("bbox 28.696 77.096 28.704 77.144\n", encoding="utf-8")
    assert runner.invoke(main, ["plan", "--region", str(region),
                                "-o", str(plan)]).exit_code == 0
    assert len(plan.read_text(encoding="utf-8").splitlines()) == 5
    data = tmp_path / "data"

    result = runner.invoke(main, ["fetch", "--plan", str(plan),
                                  "-o", str(data), "--mock",
                                  "--daily-quota", "3", "--workers", "1"])
    assert result.exit_code == 1
    assert "quota exhausted; 2 cell(s) remain for the next run" in result.stderr
    # The partial manifest is still written so the run's work is kept...
    assert "requested: 5  fetched: 3  cached: 0  failed: 0" in result.stdout
    manifest = data / "chips.jsonl"
    assert len(manifest.read_text(encoding="utf-8").splitlines()) == 75
    # ...but it gets no run manifest; the artifact is incomplete.
    assert not (data / "chips.jsonl.run.json").exists()

    result = runner.invoke(main, ["fetch", "--plan", str(plan),
                                  "-o", str(data), "--mock"])
    assert result.exit_code == 0, result.output
    assert "requested: 5  fetched: 2  cached: 3  failed: 0" in result.stdout
    assert len(manifest.read_text(encoding="utf-8").splitlines()) == 125
    assert (data / "chips.jsonl.run.json").exists()


def test_fetch_without_keys_or_mock_fails(runner, tmp_path, plan_6):
    result = runner.invoke(main, ["fetch", "--plan", str(plan_6),
                                  "-o", str(tmp_path / "data")])
    assert result.exit_code == 1
    assert "no API keys" in result.stderr


def test_fetch_materialize_chips(runner, tmp_path, plan_6):
    data = tmp_path / "data"
    result = runner.invoke(main, ["fetch", "--plan", str(plan_6),
                                  "-o", str(data), "--mock",
                                  "--materialize-chips"])
    assert result.exit_code == 0, result.output
    rows = ingest.read_manifest(data / "chips.jsonl")
    pngs = {p.name for p in (data / "chips").glob("*.png")}
    assert pngs == {f"{row.chip_id}.png" for row in rows}


# -- labeling commands --------------------------------------------------------


@pytest.fixture()
def labeled_batch(runner, tmp_path):
    """One ingested cell whose single batch two annotators agreed on."""
    region = tmp_path / "cell.txt"
    region.write_text("bbox 28.696 77.096 28.704 77.104\n", encoding="utf-8")
    plan = tmp_path / "plan1.jsonl"
    assert runner.invoke(main, ["plan", "--region", str(region),
                                "-o", str(plan)]).exit_code == 0
    data = tmp_path / "data"
    assert runner.invoke(main, ["fetch", "--plan", str(plan), "-o", str(data),
                                "--mock"]).exit_code == 0

    manifest = data / "chips.jsonl"
    log = data / "labels-log.jsonl"
    rows = ingest.read_manifest(manifest)
    store = labels.LabelStore(labels.build_batches(rows), log_path=log)
    try:
        batch = store.next_batch("ann_a")
        store.submit_labels(batch.batch_id, "ann_a", ["kiln"] * 25)
        store.next_batch("ann_b")
        store.submit_labels(batch.batch_id, "ann_b", ["kiln"] * 25)
    finally:
        store.close()
    return manifest, log


def test_export_labels(runner, tmp_path, labeled_batch):
    manifest, log = labeled_batch
    out = tmp_path / "truth.csv"
    result = runner.invoke(main, ["export-labels", "--manifest", str(manifest),
                                  "--log", str(log), "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output == f"exported 25 labeled chips -> {out}\n"

    rows = geofiles.read_ground_truth_csv(out)
    assert len(rows) == 25
    assert {r[1] for r in rows} == {"kiln"}
    assert {r[2] for r in rows} == {"agreed"}
    check_run_manifest(out, "export-labels", [manifest, log])


def test_serve_labels_requires_auth_config(runner, tmp_path, labeled_batch):
    manifest, _ = labeled_batch
    config = tmp_path / "noauth.toml"
    config.write_text("[provider]\ndaily_quota = 5\n", encoding="utf-8")
    result = runner.invoke(main, ["--config", str(config), "serve-labels",
                                  "--manifest", str(manifest)])
    assert result.exit_code == 1
    assert "[auth.annotators]" in result.stderr


def test_serve_labels_rejects_reused_token(runner, tmp_path, labeled_batch):
    manifest, _ = labeled_batch
    config = tmp_path / "dup.toml"
    config.write_text('[auth.annotators]\ntok = "alice"\n'
                      '[auth.moderators]\ntok = "drew"\n', encoding="utf-8")
    result = runner.invoke(main, ["--config", str(config), "serve-labels",
                                  "--manifest", str(manifest)])
    assert result.exit_code == 1
    assert "token reused across roles" in result.stderr


# -- ssl ----------------------------------------------------------------------


def test_ssl_ntxent_matches_library(runner, tmp_path):
    rng = np.random.default_rng(11)
    vectors = rng.normal(size=(6, 4))
    emb = tmp_path / "emb.csv"
    emb.write_text("\n".join(",".join(f"{v:.9f}" for v in row)
                             for row in vectors) + "\n", encoding="utf-8")

    loaded = np.loadtxt(emb, delimiter=",", ndmin=2)
    for tau in (0.5, 0.1):
        expected, per_anchor = sslmath.nt_xent_loss(loaded, tau)
        result = runner.invoke(main, ["ssl", "ntxent", "--embeddings",
                                      str(emb), "--tau", str(tau)])
        assert result.exit_code == 0, result.output
        assert result.output == (f"anchors: {len(per_anchor)}\n"
                                 f"nt-xent loss: {expected:.6f}\n")


def test_ssl_ntxent_odd_batch_fails(runner, tmp_path):
    emb = tmp_path / "emb.csv"
    emb.write_text("1.0,0.0\n0.0,1.0\n1.0,1.0\n", encoding="utf-8")
    result = runner.invoke(main, ["ssl", "ntxent", "--embeddings", str(emb)])
    assert result.exit_code == 1


def test_ssl_perms_two_by_two(runner, tmp_path):
    out = tmp_path / "perms.json"
    result = runner.invoke(main, ["ssl", "perms", "--grid-n", "2",
                                  "--count", "4", "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output == ("selected 4 permutations of a 2x2 grid\n"
                             "min pairwise hamming: 4\n"
                             f"wrote {out}\n")
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["grid_n"] == 2
    assert doc["seed"] == 0
    assert doc["permutations"][0] == [0, 1, 2, 3]
    assert len(doc["permutations"]) == 4
    assert sorted(map(tuple, doc["permutations"])) == sorted(
        map(tuple, sslmath.select_permutations(2, 4).permutations))


def test_ssl_perms_count_beyond_space_fails(runner):
    result = runner.invoke(main, ["ssl", "perms", "--grid-n", "2",
                                  "--count", "25"])
    assert result.exit_code == 1
    assert result.stderr.startswith("Error:")


# -- detections and metrics ---------------------------------------------------


@pytest.fixture()
def preds_csv(tmp_path):
    """Four chip predictions: a mergeable pair, one isolated hit, one miss."""
    path = tmp_path / "preds.csv"
    path.write_text("chip_id,lat,lon,score\n"
                    "c_a1,28.700,77.100,0.90\n"
                    "c_a2,28.700,77.101,0.80\n"
                    "c_b,28.800,77.300,0.95\n"
                    "c_lo,28.750,77.200,0.30\n", encoding="utf-8")
    return path


def test_detections_csv_roundtrip(runner, tmp_path, preds_csv):
    out = tmp_path / "dets.csv"
    result = runner.invoke(main, ["detections", "--preds", str(preds_csv),
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output == (
        f"2 detections from 4 chip predictions -> {out}\n")

    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "detection_id,lat,lon,max_score,support_count,support,verified"
    dets = geofiles.read_detections(out)
    assert [d.detection_id for d in dets] == ["det_c_a1", "det_c_b"]
    assert dets[0].support == ("c_a1", "c_a2")
    assert dets[0].max_score == 0.9
    doc = check_run_manifest(out, "detections", [preds_csv])
    assert doc["arguments"]["threshold"] == 0.5
    assert doc["arguments"]["merge_radius_m"] == 250.0


def test_detections_geojson_output(runner, tmp_path, preds_csv):
    out = tmp_path / "dets.geojson"
    result = runner.invoke(main, ["detections", "--preds", str(preds_csv),
                                  "-o", str(out)])
    assert result.exit_code == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["type"] == "FeatureCollection"
    assert len(doc["features"]) == 2
    assert [d.detection_id for d in geofiles.read_detections(out)] == \
        ["det_c_a1", "det_c_b"]


def test_detections_threshold_flag(runner, tmp_path, preds_csv):
    out = tmp_path / "dets.csv"
    result = runner.invoke(main, ["detections", "--preds", str(preds_csv),
                                  "--threshold", "0.25", "-o", str(out)])
    assert result.exit_code == 0
    assert "3 detections from 4 chip predictions" in result.output


def test_detections_verdicts_and_hard_negatives(runner, tmp_path, preds_csv):
    verdicts = tmp_path / "verdicts.csv"
    verdicts.write_text("detection_id,verified\n"
                        "det_c_a1,false_positive\n"
                        "det_c_b,true_positive\n", encoding="utf-8")
    out = tmp_path / "dets.csv"
    negatives = tmp_path / "hard_negatives.csv"
    result = runner.invoke(main, ["detections", "--preds", str(preds_csv),
                                  "--verdicts", str(verdicts),
                                  "--hard-negatives", str(negatives),
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert f"2 hard-negative chips -> {negatives}" in result.output

    by_id = {d.detection_id: d for d in geofiles.read_detections(out)}
    assert by_id["det_c_a1"].verified == "false_positive"
    assert by_id["det_c_b"].verified == "true_positive"
    assert geofiles.read_ground_truth_csv(negatives) == [
        ("c_a1", "no_kiln", "verification"),
        ("c_a2", "no_kiln", "verification")]
    check_run_manifest(out, "detections", [preds_csv, verdicts])


def test_detections_bad_preds_fails_with_line(runner, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("chip_id,lat,lon,score\nc,91.0,77.1,0.5\n",
                   encoding="utf-8")
    result = runner.invoke(main, ["detections", "--preds", str(bad),
                                  "-o", str(tmp_path / "out.csv")])
    assert result.exit_code == 1
    assert ":2" in result.stderr


def test_metrics_precision_only(runner):
    result = runner.invoke(main, ["metrics", "--tp", "94", "--fp", "6"])
    assert result.exit_code == 0
    assert result.output == "precision: 0.9400\n"


def test_metrics_full(runner):
    result = runner.invoke(main, ["metrics", "--tp", "94", "--fp", "6",
                                  "--fn", "15"])
    assert result.exit_code == 0
    assert result.output == ("precision: 0.9400\n"
                             "recall:    0.8624\n"
                             "f1:        0.8995\n")


def test_metrics_undefined_precision(runner):
    result = runner.invoke(main, ["metrics", "--tp", "0", "--fp", "0"])
    assert result.exit_code == 1
    assert "precision undefined" in result.stderr


def test_metrics_negative_count(runner):
    result = runner.invoke(main, ["metrics", "--tp=-1", "--fp", "5"])
    assert result.exit_code == 1


# -- district report ----------------------------------------------------------


def test_district_report_bundled_aggregate(runner):
    result = runner.invoke(main, ["district-report"])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert re.fullmatch(r"district\s+tp\s+fp\s+precision", lines[0])
    amritsar = next(l for l in lines if l.startswith("Amritsar"))
    assert re.fullmatch(r"Amritsar\s+210\s+30\s+87\.50%", amritsar)
    assert re.fullmatch(r"aggregate\s+7286\s+1628\s+81\.74%", lines[-1])
    assert len(lines) == 30  # header + 28 districts + aggregate


def test_district_report_csv_and_manifest(runner, tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("district,tp,fp\nA,9,1\nB,1,9\n", encoding="utf-8")
    out = tmp_path / "report.csv"
    result = runner.invoke(main, ["district-report", "--counts", str(counts),
                                  "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert re.search(r"^A\s+9\s+1\s+90\.00%$", result.output, re.M)
    assert re.search(r"^aggregate\s+10\s+10\s+50\.00%$", result.output, re.M)
    assert f"wrote {out}" in result.output

    assert out.read_text(encoding="utf-8").splitlines() == [
        "district,tp,fp,precision",
        "A,9,1,0.9000",
        "B,1,9,0.1000",
        "aggregate,10,10,0.5000"]
    doc = check_run_manifest(out, "district-report", [counts])
    assert doc["arguments"] == {"counts": str(counts)}


def test_district_report_bad_header(runner, tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("name,hits,misses\nA,1,2\n", encoding="utf-8")
    result = runner.invoke(main, ["district-report", "--counts", str(counts)])
    assert result.exit_code == 1
    assert "expected header district,tp,fp" in result.stderr


# -- compliance commands ------------------------------------------------------


def _write_kilns(path):
    """Three kilns: a pair 0.5 km apart plus one isolated ~22 km away."""
    k1 = GeoPoint(28.700, 77.100)
    k2 = GeoPoint(28.700 + 0.5 / KM_PER_DEG, 77.100)
    k3 = GeoPoint(28.800, 77.300)
    dets = [KilnDetection(f"det_k{i}", p, (f"chip_k{i}",), 0.9)
            for i, p in enumerate((k1, k2, k3), start=1)]
    geofiles.write_detections_csv(dets, path)
    return k1, k2, k3


def _write_features(path, k1, k3):
    """Habitation point 0.3 km from k3, a protected square around k1, and
    river/highway lines far from every kiln."""
    east = 0.3 / (KM_PER_DEG * math.cos(math.radians(k3.lat)))
    doc = {"type": "FeatureCollection", "features": [
        {"type": "Feature",
         "geometry": {"type": "Point",
                      "coordinates": [k3.lon + east, k3.lat]},
         "properties": {"feature_class": "habitation", "id": "village"}},
        {"type": "Feature",
         "geometry": {"type": "LineString",
                      "coordinates": [[77.5, 28.5], [77.5, 29.0]]},
         "properties": {"feature_class": "river", "id": "yamuna"}},
        {"type": "Feature",
         "geometry": {"type": "LineString",
                      "coordinates": [[76.7, 28.5], [76.7, 29.0]]},
         "properties": {"feature_class": "highway", "id": "nh44"}},
        {"type": "Feature",
         "geometry": {"type": "Polygon",
                      "coordinates": [[[k1.lon - 0.002, k1.lat - 0.002],
                                       [k1.lon + 0.002, k1.lat - 0.002],
                                       [k1.lon + 0.002, k1.lat + 0.002],
                                       [k1.lon - 0.002, k1.lat + 0.002],
                                       [k1.lon - 0.002, k1.lat - 0.002]]]},
         "properties": {"feature_class": "protected", "id": "sanctuary"}},
    ]}
    path.write_text(json.dumps(doc), encoding="utf-8")


def test_check_default_rules(runner, tmp_path):
    kilns = tmp_path / "kilns.csv"
    k1, _, k3 = _write_kilns(kilns)
    features = tmp_path / "features.geojson"
    _write_features(features, k1, k3)
    out_dir = tmp_path / "audit"

    result = runner.invoke(main, ["check", "--kilns", str(kilns),
                                  "--features", str(features),
                                  "-o", str(out_dir)])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert "rule kiln-spacing: 2/3 violating (66.67%)" in lines
    assert "rule habitation-buffer: 1/3 violating (33.33%)" in lines
    assert "rule river-buffer: 0/3 violating (0.00%)" in lines
    assert "rule highway-buffer: 0/3 violating (0.00%)" in lines
    assert "rule protected-zone: 1/3 violating (33.33%)" in lines
    railway = next(l for l in lines if l.startswith("rule railway-buffer"))
    assert "skipped" in railway and "railway" in railway
    assert lines[-1] == f"wrote {out_dir / 'summary.csv'}"

    spacing = json.loads((out_dir / "kiln-spacing.geojson")
                         .read_text(encoding="utf-8"))
    status = {f["properties"]["kiln_id"]: f["properties"]["status"]
              for f in spacing["features"]}
    assert status == {"det_k1": "violating", "det_k2": "violating",
                      "det_k3": "compliant"}
    zone = json.loads((out_dir / "protected-zone.geojson")
                      .read_text(encoding="utf-8"))
    flagged = [f["properties"] for f in zone["features"]
               if f["properties"]["status"] == "violating"]
    assert [p["kiln_id"] for p in flagged] == ["det_k1"]
    assert flagged[0]["offender_id"] == "sanctuary"

    summary = (out_dir / "summary.csv").read_text(encoding="utf-8").splitlines()
    assert summary[0] == ("rule_id,kind,threshold_km,kilns_checked,"
                          "violations,fraction,status")
    assert len(summary) == 7  # 5 checked + 1 skipped
    assert sum(1 for row in summary[1:] if row.endswith(",checked")) == 5
    check_run_manifest(out_dir / "summary.csv", "check", [kilns, features])


def test_check_custom_rules_toml(runner, tmp_path):
    kilns = tmp_path / "kilns.csv"
    _write_kilns(kilns)
    rules = tmp_path / "rules.toml"
    rules.write_text('[[rules]]\nrule_id = "spacing-2km"\n'
                     'kind = "pairwise_kiln"\nthreshold_km = 2.0\n',
                     encoding="utf-8")
    out_dir = tmp_path / "audit"
    result = runner.invoke(main, ["check", "--kilns", str(kilns),
                                  "--rules", str(rules), "-o", str(out_dir)])
    assert result.exit_code == 0, result.output
    assert "rule spacing-2km: 2/3 violating (66.67%)" in result.output
    assert (out_dir / "spacing-2km.geojson").exists()


def test_check_empty_rules_toml(runner, tmp_path):
    kilns = tmp_path / "kilns.csv"
    _write_kilns(kilns)
    rules = tmp_path / "rules.toml"
    rules.write_text("# nothing here\n", encoding="utf-8")
    result = runner.invoke(main, ["check", "--kilns", str(kilns),
                                  "--rules", str(rules),
                                  "-o", str(tmp_path / "audit")])
    assert result.exit_code == 1
    assert "no [[rules]] entries" in result.stderr


def test_exposure(runner, tmp_path):
    kilns = tmp_path / "kilns.csv"
    geofiles.write_detections_csv(
        [KilnDetection("det_k", GeoPoint(28.70, 77.10), ("chip",), 0.9)],
        kilns)
    population = tmp_path / "pop.csv"
    population.write_text("lat,lon,population\n"
                          "28.7045,77.10,500\n"   # ~0.50 km
                          "28.7135,77.10,1000\n"  # ~1.50 km
                          "28.7720,77.10,2000\n", # ~8.0 km
                          encoding="utf-8")
    out = tmp_path / "exposure.csv"
    result = runner.invoke(main, ["exposure", "--kilns", str(kilns),
                                  "--population", str(population),
                                  "--radii", "1,2,10", "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output == ("within 1 km: 500 people\n"
                             "within 2 km: 1,500 people\n"
                             "within 10 km: 3,500 people\n"
                             f"wrote {out}\n")
    assert out.read_text(encoding="utf-8").splitlines() == [
        "radius_km,population", "1,500.0", "2,1500.0", "10,3500.0"]
    check_run_manifest(out, "exposure", [kilns, population])


def test_exposure_bad_radii(runner, tmp_path):
    kilns = tmp_path / "kilns.csv"
    _write_kilns(kilns)
    population = tmp_path / "pop.csv"
    population.write_text("lat,lon,population\n28.7,77.1,10\n",
                          encoding="utf-8")
    result = runner.invoke(main, ["exposure", "--kilns", str(kilns),
                                  "--population", str(population),
                                  "--radii", "5,1"])
    assert result.exit_code == 1


# -- growth -------------------------------------------------------------------


def test_growth_from_counts(runner, tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("date,count\n2010-01-01,662\n2022-01-01,762\n",
                      encoding="utf-8")
    result = runner.invoke(main, ["growth", "--counts", str(counts)])
    assert result.exit_code == 0
    assert result.output == (
        "2010-01-01 -> 2022-01-01: +15.1%\n"
        "overall: +15.1% (662 -> 762 kilns, 2010-01-01 to 2022-01-01)\n")


def test_growth_multiple_intervals(runner, tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("date,count\n2010-01-01,662\n2016-01-01,700\n"
                      "2022-01-01,762\n", encoding="utf-8")
    result = runner.invoke(main, ["growth", "--counts", str(counts)])
    assert result.exit_code == 0
    assert result.output.splitlines() == [
        "2010-01-01 -> 2016-01-01: +5.7%",
        "2016-01-01 -> 2022-01-01: +8.9%",
        "overall: +15.1% (662 -> 762 kilns, 2010-01-01 to 2022-01-01)"]


def test_growth_from_snapshots_sorts_by_date(runner, tmp_path):
    def snapshot(name, n):
        path = tmp_path / name
        geofiles.write_detections_geojson(
            [KilnDetection(f"det_{i}", GeoPoint(28.7 + i * 0.01, 77.1),
                           (f"chip_{i}",), 0.9) for i in range(n)], path)
        return path

    early, late = snapshot("a.geojson", 2), snapshot("b.geojson", 3)
    result = runner.invoke(main, ["growth",
                                  "--snapshot", f"2021-01-01={late}",
                                  "--snapshot", f"2020-01-01={early}"])
    assert result.exit_code == 0, result.output
    assert result.output.splitlines()[-1] == \
        "overall: +50.0% (2 -> 3 kilns, 2020-01-01 to 2021-01-01)"


def test_growth_bad_snapshot_spec(runner):
    result = runner.invoke(main, ["growth", "--snapshot", "nodate.geojson"])
    assert result.exit_code == 1
    assert "is not DATE=FILE" in result.stderr


def test_growth_bad_counts_header(runner, tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("when,how_many\n2010-01-01,1\n", encoding="utf-8")
    result = runner.invoke(main, ["growth", "--counts", str(counts)])
    assert result.exit_code == 1
    assert "expected header date,count" in result.stderr
