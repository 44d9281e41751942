"""Command-line pipeline driver.

Stages map one-to-one onto subcommands: synth builds a complete synthetic
fixture set, ingest-traces replays GPS traces into edge segments,
build-real-gtfs reconstructs an as-operated timetable for one service day,
fuse produces the labelled instance table, evaluate runs the scenario/
method sweep, and report renders the results as text and figures.

Exit codes: 0 success, 2 configuration or data-contract error (any error
type this package defines), 1 unexpected internal failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys

from . import synth
from .built_env import SpatialDb
from .car_model import ZoneMatrix, ZoneSet
from .config import RunConfig, load_config
from .env_features import SensorStore
from .errors import ConfigError, EmptyTraceError, Error
from .fusion import (
    FusionConfig,
    ServiceBundle,
    config_fingerprint,
    emit_instances,
    extract_trips,
    sort_trips,
    survey_answer_columns,
)
from .gtfs import ObservedDeparture, build_real_timetable, parse_gtfs, write_gtfs
from .ml_harness import SCENARIOS, InstanceTable, run_scenario
from .router import StreetGraph, TransitNetwork
from .vehicle_flow import (
    SegmentStore,
    extract_edge_segments,
    locations_from_csv,
    replay_vehicle_day,
)

log = logging.getLogger(__name__)

RESULTS_HEADER = ("scenario", "method", "hyperparams", "fold", "kappa", "accuracy")


# --- synth ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = synth.CitySpec(
        seed=args.seed,
        n_respondents=args.respondents,
        trips_per_respondent=args.trips_per_respondent,
        label_noise=args.label_noise,
        delay_mean_s=args.delay_mean,
        delay_sd_s=args.delay_sd,
        halt_prob=args.halt_prob,
    )
    stats = synth.generate(spec, args.out)
    print(f"synthetic city written to {args.out}")
    for key in ("stops", "trips", "trace_rows", "respondents", "survey_trips"):
        print(f"  {key}: {stats[key]}")
    counts = stats["class_counts"]
    print("  labels: " + ", ".join(f"{k}={counts[k]}" for k in sorted(counts)))
    return 0


# --- ingest-traces -------------------------------------------------------------------

def _date_from_stem(path: str) -> dt.date:
    stem = os.path.splitext(os.path.basename(path))[0]
    try:
        return dt.date.fromisoformat(stem)
    except ValueError:
        raise ConfigError(
            f"cannot infer service date from {path!r}; "
            f"name trace files YYYY-MM-DD.csv or pass --date") from None


def ingest_trace_file(trace_path: str, timetable, service_date: dt.date,
                      store: SegmentStore) -> dict:
    """Replay one date partition into the segment store. Returns counters."""
    locations, skipped_rows = locations_from_csv(trace_path)
    by_vehicle: dict = {}
    for loc in locations:
        by_vehicle.setdefault((loc.line, loc.brigade), []).append(loc)

    stats = {"rows": len(locations) + skipped_rows, "skipped_rows": skipped_rows,
             "vehicles": len(by_vehicle), "matched": 0, "unmatched": 0,
             "duplicates": 0, "out_of_order": 0, "segments": 0}
    for (line, _brigade), locs in sorted(by_vehicle.items()):
        try:
            result = replay_vehicle_day(locs, line, timetable, service_date)
        except Error:
            # the whole vehicle-day failed to match (e.g. line not in feed)
            stats["unmatched"] += len(locs)
            continue
        stats["matched"] += result.counts["matched"]
        stats["unmatched"] += result.counts["pre_acquisition"]
        stats["duplicates"] += result.counts["duplicates"]
        stats["out_of_order"] += result.counts["out_of_order"]
        segments = extract_edge_segments(result.matched)
        store.append(service_date, segments)
        stats["segments"] += len(segments)
    return stats


def cmd_ingest_traces(args) -> int:
    timetable = parse_gtfs(args.gtfs)
    store = SegmentStore()
    totals: dict = {}
    for trace_path in args.traces:
        service_date = (dt.date.fromisoformat(args.date) if args.date
                        else _date_from_stem(trace_path))
        stats = ingest_trace_file(trace_path, timetable, service_date, store)
        for k, v in stats.items():
            totals[k] = totals.get(k, 0) + v
        print(f"{service_date}: " +
              " ".join(f"{k}={v}" for k, v in sorted(stats.items())))
    store.save(args.out)
    if len(args.traces) > 1:
        print("total: " + " ".join(f"{k}={v}" for k, v in sorted(totals.items())))
    return 0


# --- build-real-gtfs -----------------------------------------------------------------

def cmd_build_real_gtfs(args) -> int:
    service_date = dt.date.fromisoformat(args.date)
    store = SegmentStore.load(args.segments, dates={args.date})
    segments = store.segments_on(service_date)
    if not segments:
        raise EmptyTraceError(f"no segments for {args.date} under {args.segments}")
    observations = []
    for seg in segments:
        observations.append(ObservedDeparture(seg.trip_id, seg.from_stop,
                                              seg.dep_from_epoch))
        observations.append(ObservedDeparture(seg.trip_id, seg.to_stop,
                                              seg.dep_to_epoch))
    planned = parse_gtfs(args.gtfs)
    real = build_real_timetable(observations, planned, service_date)
    write_gtfs(real, args.out)
    print(f"real timetable for {args.date}: {len(real.trips)} of "
          f"{len(planned.trips_active_on(service_date))} planned trips, "
          f"written to {args.out}")
    return 0


# --- fuse ----------------------------------------------------------------------------

def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"{what} path does not exist: {path}")
    return path


def build_services(cfg: RunConfig) -> ServiceBundle:
    """Load every store referenced by the config. Unreferenced (empty-path)
    stores stay None and their feature sets fall back to sentinels."""
    services = ServiceBundle()
    if cfg.street_nodes and cfg.street_edges:
        services.street = StreetGraph.from_csv(
            _require(cfg.street_nodes, "street nodes"),
            _require(cfg.street_edges, "street edges"))
    if cfg.gtfs_dir:
        planned_tt = parse_gtfs(_require(cfg.gtfs_dir, "planned feed"))
        services.planned = TransitNetwork(planned_tt, services.street)
    if cfg.real_gtfs_dir and os.path.isdir(cfg.real_gtfs_dir):
        for name in sorted(os.listdir(cfg.real_gtfs_dir)):
            sub = os.path.join(cfg.real_gtfs_dir, name)
            if not os.path.isdir(sub):
                continue
            try:
                day = dt.date.fromisoformat(name)
            except ValueError:
                raise ConfigError(
                    f"real feed directory {sub!r} is not named YYYY-MM-DD")
            services.real_by_date[day] = TransitNetwork(parse_gtfs(sub),
                                                        services.street)
    if cfg.zones:
        services.zones = ZoneSet.from_geojson(_require(cfg.zones, "zones"))
    if cfg.ttbc_traffic:
        services.m_tr = ZoneMatrix.from_csv(
            _require(cfg.ttbc_traffic, "traffic matrix"), "TTBC_traffic")
    if cfg.ttbc_freeflow:
        services.m_ntr = ZoneMatrix.from_csv(
            _require(cfg.ttbc_freeflow, "free-flow matrix"), "TTBC_freeflow")
    if cfg.td_car:
        services.td_car = ZoneMatrix.from_csv(
            _require(cfg.td_car, "parking demand matrix"), "TD_car")
    if cfg.sensors:
        services.sensors = SensorStore.from_csv(_require(cfg.sensors, "sensors"))
    if cfg.spatial_dir:
        services.spatial = SpatialDb.load(_require(cfg.spatial_dir, "spatial layers"))
    if cfg.segments_dir and os.path.isdir(cfg.segments_dir):
        services.segments = SegmentStore.load(cfg.segments_dir)
    return services


def _survey_columns(cfg: RunConfig) -> tuple:
    if cfg.survey_columns:
        return tuple(cfg.survey_columns)
    with open(cfg.survey, newline="", encoding="utf-8-sig") as fh:
        header = next(csv.reader(fh), [])
    return survey_answer_columns(header)


def cmd_fuse(args) -> int:
    cfg = load_config(args.config)
    if not cfg.survey:
        raise ConfigError("fuse requires a survey path")
    _require(cfg.survey, "survey")
    services = build_services(cfg)
    fusion_cfg = FusionConfig(
        survey_columns=_survey_columns(cfg),
        window_before_s=cfg.window_before_s,
        window_after_s=cfg.window_after_s,
        built_env_radius_m=cfg.built_env_radius_m,
        max_connections=cfg.max_connections,
        pricing=cfg.pricing,
    )
    extracted = extract_trips(cfg.survey)
    trips = sort_trips(extracted.trips)
    result = emit_instances(trips, services, fusion_cfg, cfg.out_dir,
                            skipped=extracted.skipped)

    # stamp the manifest with a hash over the full run configuration, so any
    # config change is visible even when it does not alter the fusion stage
    with open(result.manifest_path) as fh:
        manifest = json.load(fh)
    manifest["run_config_hash"] = config_fingerprint(cfg.to_mapping())
    with open(result.manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"fused {result.n_instances} instances "
          f"({result.skipped} trips skipped) to {result.instances_path}")
    return 0


# --- evaluate ------------------------------------------------------------------------

def _parse_grids(raw) -> dict | None:
    if raw is None:
        return None
    out = {}
    for method, entries in raw.items():
        out[method] = [dict(e) for e in entries]
    return out


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    instances = args.instances or os.path.join(cfg.out_dir, "instances.csv")
    table = InstanceTable.from_csv(_require(instances, "instance table"))
    grids = _parse_grids(cfg.grids)

    reports = {}
    for name in cfg.scenarios:
        rep = run_scenario(table, SCENARIOS[name], cfg.methods, grids=grids,
                           k=cfg.k_folds, alpha=cfg.alpha, seed=cfg.seed,
                           importance_repeats=cfg.importance_repeats)
        reports[name] = rep
        print(f"{name}: best={rep.best_method} "
              f"holdout acc={rep.final_accuracy:.4f} kappa={rep.final_kappa:.4f}")

    os.makedirs(cfg.out_dir, exist_ok=True)
    report_doc = {
        "config_hash": config_fingerprint(cfg.to_mapping()),
        "scenarios": {name: rep.to_dict() for name, rep in reports.items()},
    }
    report_path = os.path.join(cfg.out_dir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(report_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    results_path = os.path.join(cfg.out_dir, "results.csv")
    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for name in cfg.scenarios:
            for row in reports[name].rows():
                writer.writerow([row[0], row[1], row[2], row[3],
                                 repr(row[4]), repr(row[5])])
    print(f"wrote {report_path} and {results_path}")
    return 0


# --- report --------------------------------------------------------------------------

def cmd_report(args) -> int:
    from . import report as report_mod

    doc = report_mod.load_report(args.report)
    sys.stdout.write(report_mod.render_text(doc))
    figures_dir = args.figures or os.path.join(os.path.dirname(args.report)
                                               or ".", "figures")
    for path in report_mod.render_figures(doc, figures_dir):
        print(f"figure: {path}")
    return 0


# --- entry ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="modefusion",
        description="travel mode choice data fusion and evaluation pipeline")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="enable debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic city fixture set")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--respondents", type=int, default=50)
    s.add_argument("--trips-per-respondent", type=int, default=4)
    s.add_argument("--label-noise", type=float, default=0.0)
    s.add_argument("--delay-mean", type=float, default=60.0)
    s.add_argument("--delay-sd", type=float, default=20.0)
    s.add_argument("--halt-prob", type=float, default=0.15)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest-traces",
                       help="replay GPS traces into edge segments")
    s.add_argument("--traces", nargs="+", required=True,
                   help="trace CSV files, one per service date")
    s.add_argument("--gtfs", required=True, help="planned feed directory")
    s.add_argument("--out", required=True, help="segment store root")
    s.add_argument("--date", help="service date override (single file only)")
    s.set_defaults(func=cmd_ingest_traces)

    s = sub.add_parser("build-real-gtfs",
                       help="reconstruct the as-operated timetable for a date")
    s.add_argument("--segments", required=True)
    s.add_argument("--gtfs", required=True)
    s.add_argument("--date", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_real_gtfs)

    s = sub.add_parser("fuse", help="fuse survey trips into instances.csv")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("evaluate",
                       help="run the scenario/method sweep on instances.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--instances", help="defaults to <out>/instances.csv")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="render a report.json as text and figures")
    s.add_argument("--report", required=True)
    s.add_argument("--figures", help="defaults to figures/ next to the report")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "ingest-traces" and args.date and len(args.traces) > 1:
        print("error: --date cannot be combined with multiple trace files",
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
