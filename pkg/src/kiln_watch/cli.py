"""Command-line entry points tying the pipeline stages together.

Settings resolve in precedence order: environment variables
(KILN_WATCH_API_KEY, KILN_WATCH_ENDPOINT, KILN_WATCH_DAILY_QUOTA) beat
command-line flags, which beat the TOML config file, which beats built-in
defaults.  Exit codes: 0 success, 1 any runtime or validation failure,
2 usage errors (click's convention).
"""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from datetime import date
from importlib import resources
from pathlib import Path

import click

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__, compliance, detect, geofiles, ingest, labels, provenance
from . import sslmath, survey
from .geo import BoundingBox

ENV_API_KEY = "KILN_WATCH_API_KEY"
ENV_ENDPOINT = "KILN_WATCH_ENDPOINT"
ENV_DAILY_QUOTA = "KILN_WATCH_DAILY_QUOTA"

BUNDLED_DISTRICT_COUNTS = "district_counts_2022.csv"


def _friendly(fn):
    """Convert domain errors into clean exit-1 messages."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, OSError, ingest.IngestError,
                labels.LabelError) as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve(env_name: str, flag_value, config_value, default=None):
    env = os.environ.get(env_name)
    if env not in (None, ""):
        return env
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


@click.group()
@click.version_option(version=__version__, prog_name="kiln-watch")
@click.option("--config", "config_path", type=click.Path(exists=True,
              dir_okay=False), default=None,
              help="TOML config with provider and auth settings.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Plan imagery surveys, fetch and chip tiles, run the labeling
    service, merge detections and audit siting rules."""
    ctx.obj = _load_config(config_path)


# -- survey ------------------------------------------------------------------


@main.command("plan")
@click.option("--region", "region_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Region file: `bbox S W N E` or polygon vertex lines.")
@click.option("--mask", "mask_path", type=click.Path(exists=True,
              dir_okay=False), default=None,
              help="Extra polygon; keep only centers inside it.")
@click.option("--stride", default=0.01, show_default=True,
              help="Grid pitch in degrees; a multiple of 0.01.")
@click.option("--zoom", default=survey.DEFAULT_ZOOM, show_default=True)
@click.option("--scale", default=survey.DEFAULT_SCALE, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@_friendly
def plan_cmd(region_path: str, mask_path: str | None, stride: float,
             zoom: int, scale: int, out: str) -> None:
    """Write the grid of tile-query centers covering a region."""
    started = provenance.utc_now()
    region = survey.parse_region(region_path)
    if isinstance(region, BoundingBox):
        result = survey.plan_queries(region, mask=None, stride=stride,
                                     zoom=zoom, scale=scale)
    else:
        result = survey.plan_queries(survey.rings_bbox(region), mask=region,
                                     stride=stride, zoom=zoom, scale=scale)
    inputs = [region_path]
    if mask_path is not None:
        mask = survey.parse_region(mask_path)
        if isinstance(mask, BoundingBox):
            raise click.ClickException("--mask must be a polygon file")
        result = survey.mask_filter(result, mask)
        inputs.append(mask_path)
    survey.write_plan(result, out)
    provenance.write_run_manifest(
        out, "plan", {"stride": stride, "zoom": zoom, "scale": scale,
                      "region": region_path, "mask": mask_path},
        inputs, started, provenance.utc_now())
    click.echo(f"planned {len(result)} queries -> {out}")


@main.command("estimate")
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--keys", default=1, show_default=True,
              help="Number of API keys available.")
@click.option("--daily-quota", default=None, type=int,
              help=f"Queries per key per day [default {survey.DEFAULT_DAILY_QUOTA}].")
@click.pass_obj
@_friendly
def estimate_cmd(config: dict, plan_path: str, keys: int,
                 daily_quota: int | None) -> None:
    """Queries, chips and API days a plan will cost."""
    quota = int(_resolve(ENV_DAILY_QUOTA, daily_quota,
                         config.get("provider", {}).get("daily_quota"),
                         survey.DEFAULT_DAILY_QUOTA))
    plan = survey.read_plan(plan_path)
    effort = survey.estimate_effort(plan, keys=keys, daily_quota=quota)
    click.echo(f"queries:           {effort.query_count}")
    click.echo(f"chips:             {effort.chip_count}")
    click.echo(f"keys:              {effort.keys}")
    click.echo(f"daily quota/key:   {effort.daily_quota}")
    click.echo(f"chips per key-day: {effort.chips_per_key_day}")
    click.echo(f"api days:          {effort.api_days}")


# -- ingest ------------------------------------------------------------------


@main.command("fetch")
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", "out_dir", required=True,
              type=click.Path(file_okay=False))
@click.option("--key", "keys", multiple=True,
              help="API key; repeat for several. KILN_WATCH_API_KEY wins.")
@click.option("--keys-file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="File with one API key per line.")
@click.option("--daily-quota", default=None, type=int)
@click.option("--workers", default=4, show_default=True)
@click.option("--retries", default=3, show_default=True)
@click.option("--endpoint", default=None, help="Static-map endpoint URL.")
@click.option("--mock", is_flag=True,
              help="Use the offline synthetic provider instead of HTTP.")
@click.option("--materialize-chips", is_flag=True,
              help="Also write each 224 px chip as its own PNG.")
@click.pass_obj
@_friendly
def fetch_cmd(config: dict, plan_path: str, out_dir: str,
              keys: tuple[str, ...], keys_file: str | None,
              daily_quota: int | None, workers: int, retries: int,
              endpoint: str | None, mock: bool,
              materialize_chips: bool) -> None:
    """Fetch a plan's tiles into a cache and write the chip manifest."""
    started = provenance.utc_now()
    provider_cfg = config.get("provider", {})
    quota = int(_resolve(ENV_DAILY_QUOTA, daily_quota,
                         provider_cfg.get("daily_quota"),
                         survey.DEFAULT_DAILY_QUOTA))

    key_list = list(keys)
    if keys_file is not None:
        key_list += [line.strip() for line in
                     Path(keys_file).read_text(encoding="utf-8").splitlines()
                     if line.strip()]
    env_key = os.environ.get(ENV_API_KEY)
    if env_key:
        key_list = [env_key]
    elif not key_list:
        key_list = list(provider_cfg.get("keys", []))

    if mock:
        provider: ingest.TileProvider = ingest.MockTileProvider()
        if not key_list:
            key_list = ["mock-key"]
    else:
        if not key_list:
            raise click.ClickException(
                f"no API keys: pass --key/--keys-file, set {ENV_API_KEY}, "
                "or configure provider.keys")
        resolved_endpoint = str(_resolve(ENV_ENDPOINT, endpoint,
                                         provider_cfg.get("endpoint"),
                                         ingest.DEFAULT_ENDPOINT))
        provider = ingest.HttpTileProvider(endpoint=resolved_endpoint)

    plan = survey.read_plan(plan_path)
    try:
        summary = ingest.ingest(plan, provider, out_dir, keys=key_list,
                                daily_quota=quota, workers=workers,
                                retries=retries,
                                materialize_chips=materialize_chips)
    except ingest.QuotaExhaustedError as exc:
        if exc.summary is not None:
            _echo_ingest(exc.summary)
        click.echo(f"quota exhausted; {len(exc.remaining_cells)} cell(s) "
                   "remain for the next run", err=True)
        raise click.exceptions.Exit(1)
    _echo_ingest(summary)
    provenance.write_run_manifest(
        summary.manifest_path, "fetch",
        {"plan": plan_path, "workers": workers, "retries": retries,
         "daily_quota": quota, "mock": mock},
        [plan_path], started, provenance.utc_now())
    if summary.failed:
        for cell_key, reason in sorted(summary.failed.items()):
            click.echo(f"failed {cell_key}: {reason}", err=True)
        raise click.exceptions.Exit(1)


def _echo_ingest(summary: ingest.IngestSummary) -> None:
    click.echo(f"requested: {summary.requested}  fetched: {summary.fetched}  "
               f"cached: {summary.from_cache}  failed: {len(summary.failed)}")
    click.echo(f"manifest: {summary.manifest_path} ({summary.chip_rows} chips)")


# -- labeling ----------------------------------------------------------------


def _auth_tokens(config: dict) -> dict[str, tuple[str, str]]:
    auth = config.get("auth", {})
    tokens: dict[str, tuple[str, str]] = {}
    for role_key, role in (("annotators", "annotator"),
                           ("moderators", "moderator")):
        for token, user in auth.get(role_key, {}).items():
            if token in tokens:
                raise click.ClickException(f"token reused across roles: {user}")
            tokens[token] = (str(user), role)
    if not tokens:
        raise click.ClickException(
            "config has no [auth.annotators]/[auth.moderators] tokens")
    return tokens


@main.command("serve-labels")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Ingest output dir; defaults to the manifest's parent.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False),
              default=None, help="Event log [default <data-dir>/labels-log.jsonl].")
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False),
              default=None, help="Static frontend directory to mount at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.pass_obj
@_friendly
def serve_labels_cmd(config: dict, manifest_path: str, data_dir: str | None,
                     log_path: str | None, ui_dir: str | None, host: str,
                     port: int) -> None:
    """Serve the labeling API (and optionally the UI) over HTTP."""
    import uvicorn

    from .label_server import create_app

    tokens = _auth_tokens(config)
    rows = ingest.read_manifest(manifest_path)
    base = Path(data_dir) if data_dir else Path(manifest_path).parent
    log = Path(log_path) if log_path else base / "labels-log.jsonl"
    store = labels.LabelStore(labels.build_batches(rows), log_path=log)
    app = create_app(store, rows, base, tokens, ui_dir=ui_dir)
    click.echo(f"serving {store.stats()['total_batches']} batches on "
               f"http://{host}:{port} (log: {log})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("export-labels")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--log", "log_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@_friendly
def export_labels_cmd(manifest_path: str, log_path: str, out: str) -> None:
    """Export finalized chip labels as ground-truth CSV."""
    started = provenance.utc_now()
    rows = ingest.read_manifest(manifest_path)
    store = labels.LabelStore(labels.build_batches(rows), log_path=log_path)
    try:
        count = labels.export_ground_truth(store, out)
    finally:
        store.close()
    provenance.write_run_manifest(
        out, "export-labels", {"manifest": manifest_path, "log": log_path},
        [manifest_path, log_path], started, provenance.utc_now())
    click.echo(f"exported {count} labeled chips -> {out}")


# -- self-supervised kernels -----------------------------------------------


@main.group("ssl")
def ssl_group() -> None:
    """Pretext-task kernels: contrastive loss and jigsaw permutations."""


@ssl_group.command("ntxent")
@click.option("--embeddings", "emb_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of embeddings; rows 2k and 2k+1 are a positive pair.")
@click.option("--tau", default=0.5, show_default=True)
@_friendly
def ntxent_cmd(emb_path: str, tau: float) -> None:
    """Mean NT-Xent loss over a batch of paired embeddings."""
    import numpy as np

    vectors = np.loadtxt(emb_path, delimiter=",", ndmin=2)
    loss, per_anchor = sslmath.nt_xent_loss(vectors, tau)
    click.echo(f"anchors: {len(per_anchor)}")
    click.echo(f"nt-xent loss: {loss:.6f}")


@ssl_group.command("perms")
@click.option("--grid-n", default=2, show_default=True)
@click.option("--count", default=24, show_default=True,
              help="Number of permutations (classes) to select.")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None)
@_friendly
def perms_cmd(grid_n: int, count: int, seed: int, out: str | None) -> None:
    """Select well-separated jigsaw permutations."""
    perms = sslmath.select_permutations(grid_n, count, seed=seed)
    click.echo(f"selected {perms.k} permutations of a "
               f"{grid_n}x{grid_n} grid")
    click.echo(f"min pairwise hamming: {perms.min_pairwise_hamming()}")
    if out is not None:
        doc = {"grid_n": grid_n, "seed": seed,
               "permutations": [list(p) for p in perms.permutations]}
        Path(out).write_text(json.dumps(doc, indent=2) + "\n",
                             encoding="utf-8")
        click.echo(f"wrote {out}")


# -- detections and metrics ----------------------------------------------


@main.command("detections")
@click.option("--preds", "preds_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="chip_id,lat,lon,score CSV.")
@click.option("--threshold", default=detect.DEFAULT_THRESHOLD,
              show_default=True)
@click.option("--merge-radius", default=detect.DEFAULT_MERGE_RADIUS_M,
              show_default=True, help="Metres; chips closer than this merge.")
@click.option("--verdicts", "verdicts_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="detection_id,verified CSV from manual review.")
@click.option("--hard-negatives", "hard_negatives_path", default=None,
              type=click.Path(dir_okay=False),
              help="Write confirmed-false-positive chips here as no_kiln rows.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False),
              help="Output .geojson or .csv, chosen by suffix.")
@_friendly
def detections_cmd(preds_path: str, threshold: float, merge_radius: float,
                   verdicts_path: str | None,
                   hard_negatives_path: str | None, out: str) -> None:
    """Threshold chip scores and merge neighbours into kiln detections."""
    started = provenance.utc_now()
    preds = detect.read_predictions(preds_path)
    dets = detect.threshold_and_merge(preds, threshold=threshold,
                                      merge_radius_m=merge_radius)
    inputs = [preds_path]
    if verdicts_path is not None:
        verdicts = {}
        with open(verdicts_path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                verdicts[row["detection_id"]] = row["verified"]
        dets = detect.mark_verified(dets, verdicts)
        inputs.append(verdicts_path)
    if Path(out).suffix.lower() in (".geojson", ".json"):
        geofiles.write_detections_geojson(dets, out)
    else:
        geofiles.write_detections_csv(dets, out)
    provenance.write_run_manifest(
        out, "detections",
        {"threshold": threshold, "merge_radius_m": merge_radius,
         "preds": preds_path, "verdicts": verdicts_path},
        inputs, started, provenance.utc_now())
    click.echo(f"{len(dets)} detections from {len(preds)} chip predictions "
               f"-> {out}")
    if hard_negatives_path is not None:
        count = detect.write_hard_negatives(dets, hard_negatives_path)
        click.echo(f"{count} hard-negative chips -> {hard_negatives_path}")


@main.command("metrics")
@click.option("--tp", required=True, type=int)
@click.option("--fp", required=True, type=int)
@click.option("--fn", default=None, type=int,
              help="Give false negatives to also get recall and F1.")
@_friendly
def metrics_cmd(tp: int, fp: int, fn: int | None) -> None:
    """Precision (and recall/F1 when FN is known) from raw counts."""
    counts = detect.ConfusionCounts(tp=tp, fp=fp, fn=fn or 0)
    click.echo(f"precision: {detect.precision(counts):.4f}")
    if fn is not None:
        click.echo(f"recall:    {detect.recall(counts):.4f}")
        click.echo(f"f1:        {detect.f1(counts):.4f}")


@main.command("district-report")
@click.option("--counts", "counts_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="district,tp,fp CSV [default: bundled 2022 survey table].")
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None)
@_friendly
def district_report_cmd(counts_path: str | None, out: str | None) -> None:
    """Per-district precision table with the count-weighted aggregate."""
    started = provenance.utc_now()
    if counts_path is None:
        source = resources.files("kiln_watch.data") / BUNDLED_DISTRICT_COUNTS
        text = source.read_text(encoding="utf-8")
        source_name = f"bundled:{BUNDLED_DISTRICT_COUNTS}"
        inputs: list[str] = []
    else:
        text = Path(counts_path).read_text(encoding="utf-8")
        source_name = counts_path
        inputs = [counts_path]

    rows = []
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["district", "tp", "fp"]:
        raise click.ClickException(
            f"{source_name}: expected header district,tp,fp")
    for row in reader:
        if row:
            rows.append((row[0], int(row[1]), int(row[2])))
    summary = detect.district_summary(rows)

    width = max(len(r.district) for r in summary.rows) + 2
    click.echo(f"{'district':<{width}}{'tp':>6}{'fp':>6}  precision")
    for r in summary.rows:
        click.echo(f"{r.district:<{width}}{r.tp:>6}{r.fp:>6}  "
                   f"{100 * r.precision:.2f}%")
    click.echo(f"{'aggregate':<{width}}{summary.total_tp:>6}"
               f"{summary.total_fp:>6}  "
               f"{100 * summary.aggregate_precision:.2f}%")
    if out is not None:
        with Path(out).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["district", "tp", "fp", "precision"])
            for r in summary.rows:
                writer.writerow([r.district, r.tp, r.fp, f"{r.precision:.4f}"])
            writer.writerow(["aggregate", summary.total_tp, summary.total_fp,
                             f"{summary.aggregate_precision:.4f}"])
        provenance.write_run_manifest(
            out, "district-report", {"counts": source_name}, inputs,
            started, provenance.utc_now())
        click.echo(f"wrote {out}")


# -- compliance ----------------------------------------------------------


def _load_rules(path: str | None) -> list[compliance.PolicyRule]:
    if path is None:
        return list(compliance.DEFAULT_RULES)
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    rows = doc.get("rules")
    if not rows:
        raise click.ClickException(f"{path}: no [[rules]] entries")
    out = []
    for row in rows:
        out.append(compliance.PolicyRule(
            rule_id=row.get("rule_id", ""),
            kind=row.get("kind", ""),
            threshold_km=row.get("threshold_km"),
            feature_class=row.get("feature_class")))
    return out


@main.command("check")
@click.option("--kilns", "kilns_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Detections (.geojson or .csv) to audit.")
@click.option("--rules", "rules_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML rule set [default: national siting guidance].")
@click.option("--features", "features_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="GeoJSON feature layer(s); repeatable.")
@click.option("-o", "--out", "out_dir", required=True,
              type=click.Path(file_okay=False))
@_friendly
def check_cmd(kilns_path: str, rules_path: str | None,
              features_paths: tuple[str, ...], out_dir: str) -> None:
    """Audit kilns against siting rules; write per-rule GeoJSON plus a
    summary CSV."""
    started = provenance.utc_now()
    kilns = geofiles.read_kilns(kilns_path)
    rules = _load_rules(rules_path)
    feature_sets: dict[str, compliance.FeatureSet] = {}
    for path in features_paths:
        for fclass, fset in geofiles.read_feature_collection(path).items():
            if fclass in feature_sets:
                merged = feature_sets[fclass].features + fset.features
                feature_sets[fclass] = compliance.FeatureSet(fclass, merged)
            else:
                feature_sets[fclass] = fset
    reports, skipped = compliance.evaluate_rules(kilns, rules, feature_sets)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for report in reports:
        geofiles.write_violation_geojson(report, kilns,
                                         out / f"{report.rule.rule_id}.geojson")
        click.echo(f"rule {report.rule.rule_id}: {len(report.violations)}"
                   f"/{report.kilns_checked} violating "
                   f"({100 * report.fraction:.2f}%)")
    for rule, reason in skipped:
        click.echo(f"rule {rule.rule_id}: skipped ({reason})")
    summary_path = out / "summary.csv"
    geofiles.write_violation_summary(reports, skipped, summary_path)
    provenance.write_run_manifest(
        summary_path, "check",
        {"kilns": kilns_path, "rules": rules_path or "defaults",
         "features": list(features_paths)},
        [kilns_path, *features_paths] + ([rules_path] if rules_path else []),
        started, provenance.utc_now())
    click.echo(f"wrote {summary_path}")


@main.command("exposure")
@click.option("--kilns", "kilns_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--population", "population_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="lat,lon,population grid CSV.")
@click.option("--radii", default="1,2,10", show_default=True,
              help="Ascending comma-separated radii in km.")
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None)
@_friendly
def exposure_cmd(kilns_path: str, population_path: str, radii: str,
                 out: str | None) -> None:
    """People living within each radius of at least one kiln."""
    started = provenance.utc_now()
    kilns = geofiles.read_kilns(kilns_path)
    grid = geofiles.read_population_csv(population_path)
    radii_km = [float(r) for r in radii.split(",") if r.strip()]
    results = compliance.population_exposure(kilns, grid, radii_km)
    for radius, pop in results:
        click.echo(f"within {radius:g} km: {pop:,.0f} people")
    if out is not None:
        with Path(out).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["radius_km", "population"])
            for radius, pop in results:
                writer.writerow([f"{radius:g}", f"{pop:.1f}"])
        provenance.write_run_manifest(
            out, "exposure",
            {"kilns": kilns_path, "population": population_path,
             "radii": radii},
            [kilns_path, population_path], started, provenance.utc_now())
        click.echo(f"wrote {out}")


@main.command("growth")
@click.option("--counts", "counts_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="date,count CSV of kiln tallies.")
@click.option("--snapshot", "snapshots", multiple=True,
              metavar="DATE=FILE",
              help="Dated detection file; repeatable, e.g. "
                   "2008-01-01=kilns_2008.geojson.")
@_friendly
def growth_cmd(counts_path: str | None, snapshots: tuple[str, ...]) -> None:
    """Percent growth in kiln counts between dated snapshots."""
    series: list[tuple[date, int]] = []
    if counts_path is not None:
        with open(counts_path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["date", "count"]:
                raise click.ClickException(
                    f"{counts_path}: expected header date,count")
            for row in reader:
                if row:
                    series.append((date.fromisoformat(row[0]), int(row[1])))
    for item in snapshots:
        if "=" not in item:
            raise click.ClickException(f"--snapshot {item!r} is not DATE=FILE")
        stamp, path = item.split("=", 1)
        series.append((date.fromisoformat(stamp),
                       len(geofiles.read_detections(path))))
    series.sort(key=lambda pair: pair[0])
    report = detect.kiln_growth(series)
    for d0, d1, pct in report.intervals:
        click.echo(f"{d0.isoformat()} -> {d1.isoformat()}: {pct:+.1f}%")
    first, last = series[0], series[-1]
    click.echo(f"overall: {report.overall_pct:+.1f}% "
               f"({first[1]} -> {last[1]} kilns, "
               f"{first[0].isoformat()} to {last[0].isoformat()})")


if __name__ == "__main__":
    main()
