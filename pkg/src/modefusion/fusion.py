"""Trip-level data fusion: survey trips in, labelled instances out.

Every trip is enriched in a fixed order: survey answers, unimodal level of
service for walk / cycle / car, car-in-traffic and parking features, transit
level of service against the planned timetable of the trip date and against
the real timetable of the preceding working day, vehicle-flow experience on
the candidate lines, weather and pollution, built environment, and finally
differential features between the modes. Services that cannot answer yield
sentinels, never missing columns: the column set is a function of the
configuration alone.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
from dataclasses import dataclass, field

from .built_env import DEFAULT_RADIUS_M, compute_built_env
from .car_model import duration_in_traffic, parking_difficulty, zone_of
from .env_features import POLLUTION_PARAMS, WEATHER_PARAMS, aggregate_env
from .errors import Error, IoError
from .gtfs import VEHICLE_KINDS
from .router import (
    LOS_SENTINEL,
    ModeChoiceWindow,
    aggregate_pt_los,
    plan_connections,
    route_unimodal,
)
from .timeutil import epoch_date, midnight_epoch, preceding_working_day, seconds_of_day
from .vehicle_flow import DURATION_THRESHOLDS_S, query_experience

log = logging.getLogger(__name__)

MODE_LABELS = ("car", "pt", "walk", "bike")

RUSH_BANDS_H = (0, 6, 9, 15, 19, 24)

FEATURE_SET_TAGS = (
    "SURVEY", "WALKING_LOS", "CYCLING_LOS", "CAR_LOS", "E_CAR_LOS",
    "PLAN_PT_LOS", "REAL_PT_LOS", "PT_EXPERIENCE", "WEATHER", "POLLUTION",
    "BUILT_ENV", "DIFF",
)

# DIFF operands: (token used in feature names, duration key, stats or None)
_DIFF_MODES = (
    ("Car", "Duration_CAR", None, "CAR_LOS"),
    ("Walk", "Duration_WALK", None, "WALKING_LOS"),
    ("Cycle", "Duration_CYCLE", None, "CYCLING_LOS"),
    ("Transit", "Duration_TRANSIT", ("min", "avg"), "PLAN_PT_LOS"),
    ("TransitReal", "Duration_TRANSIT_REAL", ("min", "avg"), "REAL_PT_LOS"),
)


@dataclass(frozen=True)
class Trip:
    respondent_id: str
    ordinal: int
    o: tuple
    d: tuple
    t_depart: int
    t_arrive: int | None
    label: str
    answers: dict = field(default_factory=dict, hash=False)
    home: tuple | None = None


@dataclass
class Instance:
    respondent_id: str
    ordinal: int
    t_depart: int
    label: str
    features: dict  # name -> value, in schema order
    tags: dict      # name -> feature set tag


@dataclass
class FusionConfig:
    survey_columns: tuple = ()
    window_before_s: int = 300
    window_after_s: int = 600
    built_env_radius_m: float = DEFAULT_RADIUS_M
    max_connections: int = 5
    pricing: dict | None = None
    rush_bands_h: tuple = RUSH_BANDS_H

    def as_mapping(self) -> dict:
        return {
            "survey_columns": list(self.survey_columns),
            "window_before_s": self.window_before_s,
            "window_after_s": self.window_after_s,
            "built_env_radius_m": self.built_env_radius_m,
            "max_connections": self.max_connections,
            "pricing": {str(k): v for k, v in (self.pricing or {}).items()} or None,
            "rush_bands_h": list(self.rush_bands_h),
        }


@dataclass
class ServiceBundle:
    street: object = None          # StreetGraph
    planned: object = None         # TransitNetwork for the planned timetable
    real_by_date: dict = field(default_factory=dict)  # date -> TransitNetwork
    zones: object = None           # ZoneSet
    m_tr: object = None            # ZoneMatrix TTBC_traffic
    m_ntr: object = None           # ZoneMatrix TTBC_freeflow
    td_car: object = None          # ZoneMatrix TD_car
    sensors: object = None         # SensorStore
    spatial: object = None         # SpatialDb
    segments: object = None        # SegmentStore


def config_fingerprint(mapping: dict) -> str:
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --- schema -----------------------------------------------------------------

_UNIMODAL = {
    "WALKING_LOS": ("walk", "WALK", ("Duration", "Distance", "Speed")),
    "CYCLING_LOS": ("cycle", "CYCLE", ("Duration", "Distance", "Speed")),
    "CAR_LOS": ("car", "CAR", ("Duration", "Speed", "Distance", "WalkDistance")),
}

_E_CAR_FEATURES = (
    "DurationInTraffic_CAR", "hasTraffic_CAR",
    "ParkingArrivalsOwnZone_CAR", "ParkingArrivalsNeighborhood_CAR",
    "ParkingArrivalsRank_CAR", "hasParking_CAR",
)


def _pt_los_names(real: bool) -> list:
    return list(aggregate_pt_los([], 0.0, real=real).keys())


def _experience_names() -> list:
    names = ["avgCurrentStopDelay_LOW_TRANSIT", "maxCurrentStopDelay_LOW_TRANSIT",
             "avgSpeed_LOW_TRANSIT"]
    for theta in DURATION_THRESHOLDS_S:
        names.append(f"stopEventsBelow{theta}_LOW_TRANSIT")
        names.append(f"stopEventsAtLeast{theta}_LOW_TRANSIT")
    names.append("hasExperience")
    return names


def _env_names(params) -> list:
    names = []
    for p in params:
        names += [f"avg{p}_2h", f"avg{p}_24h", f"has{p}"]
    return names


def _built_env_names() -> list:
    base = ["RoadDensity", "AddressDensity", "PopulationDensity", "GreenShare"]
    base += [f"{k.capitalize()}Distance_URBAN" for k in VEHICLE_KINDS]
    return base + [f"home{n}" for n in base] + ["hasHome"]


def diff_schema() -> list:
    """[(name, token_a, token_b, operand_key_a, operand_key_b)] in order."""
    out = []
    for (tok_a, key_a, stats_a, _), (tok_b, key_b, stats_b, _) in \
            itertools.combinations(_DIFF_MODES, 2):
        if stats_a is None and stats_b is None:
            for kind in ("Difference", "Ratio"):
                out.append((f"Duration{kind}{tok_a}To{tok_b}_DIFF",
                            tok_a, tok_b, key_a, key_b))
        else:
            stats = stats_b if stats_a is None else stats_a
            for stat in stats:
                a = key_a if stats_a is None else f"{stat}{key_a}"
                b = key_b if stats_b is None else f"{stat}{key_b}"
                for kind in ("Difference", "Ratio"):
                    out.append((f"{stat}Duration{kind}{tok_a}To{tok_b}_DIFF",
                                tok_a, tok_b, a, b))
    return out


DIFF_OPERAND_TAGS = {
    name: tuple(
        next(m[3] for m in _DIFF_MODES if m[0] == tok) for tok in (tok_a, tok_b)
    )
    for name, tok_a, tok_b, _, _ in diff_schema()
}


def feature_schema(config: FusionConfig) -> list:
    """Ordered [(name, tag)]; fixed by configuration, independent of data."""
    schema = [(c, "SURVEY") for c in config.survey_columns]
    for tag in ("WALKING_LOS", "CYCLING_LOS", "CAR_LOS"):
        _, suffix, quantities = _UNIMODAL[tag]
        schema += [(f"{q}_{suffix}", tag) for q in quantities]
        schema.append((f"hasRoute_{suffix}", tag))
    schema += [(n, "E_CAR_LOS") for n in _E_CAR_FEATURES]
    schema += [(n, "PLAN_PT_LOS") for n in _pt_los_names(real=False)]
    schema += [(n, "REAL_PT_LOS") for n in _pt_los_names(real=True)]
    schema += [(n, "PT_EXPERIENCE") for n in _experience_names()]
    schema += [(n, "WEATHER") for n in _env_names(WEATHER_PARAMS)]
    schema += [(n, "POLLUTION") for n in _env_names(POLLUTION_PARAMS)]
    schema += [(n, "BUILT_ENV") for n in _built_env_names()]
    schema += [(name, "DIFF") for name, *_ in diff_schema()]
    return schema


# --- survey ingestion ---------------------------------------------------------

_TRIP_FIELDS = ("o_lat", "o_lon", "d_lat", "d_lon", "depart", "arrive", "mode")
_RESPONDENT_FIELDS = ("respondent_id", "home_lat", "home_lon")


@dataclass
class ExtractResult:
    trips: list
    skipped: int


def survey_answer_columns(header) -> tuple:
    """Answer columns: everything that is neither respondent metadata nor a
    trip block column (trip<k>_<field>)."""
    out = []
    for col in header:
        if col in _RESPONDENT_FIELDS:
            continue
        stem = col.split("_", 1)[0]
        if stem.startswith("trip") and stem[4:].isdigit():
            continue
        out.append(col)
    return tuple(out)


def extract_trips(path: str) -> ExtractResult:
    """One survey row per respondent; trip blocks expand to Trip records.

    Malformed blocks (bad coordinates or label) are skipped and counted.
    """
    trips = []
    skipped = 0
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "respondent_id" not in reader.fieldnames:
            raise IoError(f"{path}: missing respondent_id column")
        block_ids = sorted({
            int(col.split("_", 1)[0][4:])
            for col in reader.fieldnames
            if col.split("_", 1)[0].startswith("trip")
            and col.split("_", 1)[0][4:].isdigit()
        })
        answer_cols = survey_answer_columns(reader.fieldnames)
        for row in reader:
            rid = row["respondent_id"]
            home = None
            if row.get("home_lat") and row.get("home_lon"):
                try:
                    home = (float(row["home_lat"]), float(row["home_lon"]))
                except ValueError:
                    home = None
            answers = {c: row.get(c, "") for c in answer_cols}
            for k in block_ids:
                # short rows leave trailing DictReader fields as None
                cells = {f: row.get(f"trip{k}_{f}") or "" for f in _TRIP_FIELDS}
                if not any(v.strip() for v in cells.values()):
                    continue  # unused trailing block
                try:
                    o = (float(cells["o_lat"]), float(cells["o_lon"]))
                    d = (float(cells["d_lat"]), float(cells["d_lon"]))
                    t_d = int(cells["depart"])
                    t_a = int(cells["arrive"]) if cells["arrive"].strip() else None
                    label = cells["mode"].strip()
                    if label not in MODE_LABELS:
                        raise ValueError(f"bad mode {label!r}")
                    if t_a is not None and t_a <= t_d:
                        raise ValueError("arrival not after departure")
                except ValueError as exc:
                    skipped += 1
                    log.warning("respondent %s trip %d skipped: %s", rid, k, exc)
                    continue
                trips.append(Trip(rid, k, o, d, t_d, t_a, label, answers, home))
    return ExtractResult(trips, skipped)


def sort_trips(trips) -> list:
    return sorted(trips, key=lambda t: (t.t_depart, t.respondent_id, t.ordinal))


# --- fusion -------------------------------------------------------------------

def _unimodal_los(street, o, d, suffix, quantities) -> dict:
    out = {f"{q}_{suffix}": LOS_SENTINEL for q in quantities}
    out[f"hasRoute_{suffix}"] = 0
    if street is None:
        return out
    mode = {"WALK": "walk", "CYCLE": "cycle", "CAR": "car"}[suffix]
    try:
        est = route_unimodal(street, o, d, mode)
    except Error:
        return out
    out[f"Duration_{suffix}"] = est.duration_s
    out[f"Distance_{suffix}"] = est.distance_m
    if "Speed" in quantities:
        out[f"Speed_{suffix}"] = est.distance_m / est.duration_s if est.duration_s > 0 else 0.0
    if "WalkDistance" in quantities:
        out[f"WalkDistance_{suffix}"] = est.access_walk_m
    out[f"hasRoute_{suffix}"] = 1
    return out


def _e_car_features(services: ServiceBundle, trip: Trip, free_flow_s: float) -> dict:
    out = {n: (0 if n.startswith("has") else LOS_SENTINEL) for n in _E_CAR_FEATURES}
    if services.zones is None:
        return out
    hour = seconds_of_day(trip.t_depart) // 3600
    try:
        o_zone = zone_of(trip.o, services.zones)
        d_zone = zone_of(trip.d, services.zones)
    except Error:
        return out
    if services.m_tr is not None and services.m_ntr is not None and free_flow_s >= 0:
        try:
            out["DurationInTraffic_CAR"] = duration_in_traffic(
                free_flow_s, o_zone, d_zone, hour, services.m_tr, services.m_ntr)
            out["hasTraffic_CAR"] = 1
        except Error:
            pass
    if services.td_car is not None:
        try:
            out["ParkingArrivalsOwnZone_CAR"] = parking_difficulty(
                d_zone, hour, services.td_car, services.zones, "own_zone")
            out["ParkingArrivalsNeighborhood_CAR"] = parking_difficulty(
                d_zone, hour, services.td_car, services.zones, "neighborhood")
            out["ParkingArrivalsRank_CAR"] = parking_difficulty(
                d_zone, hour, services.td_car, services.zones, "rank")
            out["hasParking_CAR"] = 1
        except Error:
            pass
    return out


def _experience_period(trip: Trip, prev_day, window: ModeChoiceWindow, bands_h):
    start_clock = max(0, seconds_of_day(trip.t_depart) - window.delta_s)
    end_epoch = trip.t_arrive if trip.t_arrive is not None \
        else trip.t_depart + window.delta_f
    end_clock = min(86400, seconds_of_day(end_epoch)
                    + (86400 if epoch_date(end_epoch) != epoch_date(trip.t_depart) else 0))
    if end_clock < start_clock:
        end_clock = 86400
    edges = [h * 3600 for h in bands_h]
    lo = max(e for e in edges if e <= start_clock)
    hi = min(e for e in edges if e >= end_clock)
    m = midnight_epoch(prev_day)
    return (m + lo, m + hi)


def _pt_experience(services: ServiceBundle, trip: Trip, connections,
                   prev_day, window, bands_h) -> dict:
    sentinels = {n: (0 if n == "hasExperience" else -1.0) for n in _experience_names()}
    if services.segments is None or not connections:
        return sentinels
    edges = set()
    lines = set()
    for conn in connections:
        for leg in conn.legs:
            if leg.mode == "walk" or leg.line_id is None:
                continue
            lines.add(leg.line_id)
            for a, b in zip(leg.via_stops, leg.via_stops[1:]):
                edges.add((a, b))
    if not edges:
        return sentinels
    period = _experience_period(trip, prev_day, window, bands_h)
    try:
        return query_experience(services.segments, sorted(edges), sorted(lines), period)
    except Error:
        return sentinels


def _shift_to_day(epoch: int, day) -> int:
    return midnight_epoch(day) + seconds_of_day(epoch)


def differential_features(x: dict) -> dict:
    """Differences and ratios between mode durations, sentinel-propagating.

    Operands are rounded to 6 decimals first so recomputation from emitted
    columns is exact; a feature is `first minus second` / `first over second`
    per its <A>To<B> name.
    """
    out = {}
    for name, _ta, _tb, key_a, key_b in diff_schema():
        a = x.get(key_a, LOS_SENTINEL)
        b = x.get(key_b, LOS_SENTINEL)
        if a == LOS_SENTINEL or b == LOS_SENTINEL or a is None or b is None:
            out[name] = LOS_SENTINEL
            continue
        a, b = round(float(a), 6), round(float(b), 6)
        if "Difference" in name:
            out[name] = a - b
        else:
            out[name] = a / b if b != 0 else LOS_SENTINEL
    return out


def fuse_trip(trip: Trip, services: ServiceBundle, config: FusionConfig) -> Instance:
    window = ModeChoiceWindow(config.window_before_s, config.window_after_s)
    x: dict = {}
    tags: dict = {}

    def put(mapping: dict, tag: str) -> None:
        for name, value in mapping.items():
            x[name] = value
            tags[name] = tag

    put({c: trip.answers.get(c, "") for c in config.survey_columns}, "SURVEY")

    for tag in ("WALKING_LOS", "CYCLING_LOS", "CAR_LOS"):
        _, suffix, quantities = _UNIMODAL[tag]
        put(_unimodal_los(services.street, trip.o, trip.d, suffix, quantities), tag)

    put(_e_car_features(services, trip, x["Duration_CAR"]), "E_CAR_LOS")

    direct_walk = x["Distance_WALK"]
    if direct_walk == LOS_SENTINEL:
        direct_walk = float("inf")

    connections = []
    if services.planned is not None:
        try:
            connections = plan_connections(
                services.planned, trip.o, trip.d, trip.t_depart, window,
                max_results=config.max_connections)
        except Error:
            connections = []
    put(aggregate_pt_los(connections, direct_walk, config.pricing), "PLAN_PT_LOS")

    prev_day = preceding_working_day(epoch_date(trip.t_depart))
    real_net = services.real_by_date.get(prev_day)
    real_connections = []
    if real_net is not None:
        try:
            real_connections = plan_connections(
                real_net, trip.o, trip.d, _shift_to_day(trip.t_depart, prev_day),
                window, max_results=config.max_connections)
        except Error:
            real_connections = []
    put(aggregate_pt_los(real_connections, direct_walk, config.pricing, real=True),
        "REAL_PT_LOS")

    put(_pt_experience(services, trip, connections, prev_day, window,
                       config.rush_bands_h), "PT_EXPERIENCE")

    if services.sensors is not None:
        env = aggregate_env(services.sensors, trip.o, trip.t_depart)
    else:
        env = {n: (-9999.0 if n.startswith("avg") else 0)
               for p in WEATHER_PARAMS + POLLUTION_PARAMS
               for n in (f"avg{p}_2h", f"avg{p}_24h", f"has{p}")}
    put({n: env[n] for n in _env_names(WEATHER_PARAMS)}, "WEATHER")
    put({n: env[n] for n in _env_names(POLLUTION_PARAMS)}, "POLLUTION")

    built = {}
    base_names = _built_env_names()
    if services.spatial is not None:
        origin_feats = compute_built_env(services.spatial, trip.o, config.built_env_radius_m)
        built.update(origin_feats)
        if trip.home is not None:
            home_feats = compute_built_env(services.spatial, trip.home,
                                           config.built_env_radius_m)
            built.update({f"home{n}": v for n, v in home_feats.items()})
            built["hasHome"] = 1
        else:
            built.update({n: -1.0 for n in base_names if n.startswith("home")})
            built["hasHome"] = 0
    else:
        built = {n: (0 if n == "hasHome" else -1.0) for n in base_names}
    put({n: built[n] for n in base_names}, "BUILT_ENV")

    put(differential_features(x), "DIFF")

    return Instance(trip.respondent_id, trip.ordinal, trip.t_depart, trip.label, x, tags)


# --- emission -----------------------------------------------------------------

_META_COLUMNS = ("respondent_id", "ordinal", "t_depart", "label")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class EmitResult:
    instances_path: str
    manifest_path: str
    n_instances: int
    skipped: int


def emit_instances(trips, services: ServiceBundle, config: FusionConfig,
                   out_dir: str, skipped: int = 0) -> EmitResult:
    """Fuse sorted trips into instances.csv + manifest.json under out_dir."""
    schema = feature_schema(config)
    names = [n for n, _ in schema]
    header = list(_META_COLUMNS) + [f"{n}@{t}" for n, t in schema]
    ordered = sort_trips(trips)

    os.makedirs(out_dir, exist_ok=True)
    instances_path = os.path.join(out_dir, "instances.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    try:
        with open(instances_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for trip in ordered:
                inst = fuse_trip(trip, services, config)
                if list(inst.features.keys()) != names:
                    raise Error("fused feature names diverge from schema")
                row = [inst.respondent_id, inst.ordinal, inst.t_depart, inst.label]
                row += [format_value(inst.features[n]) for n in names]
                writer.writerow(row)
    except OSError as exc:
        raise IoError(str(exc)) from exc

    counts: dict = {}
    for _, tag in schema:
        counts[tag] = counts.get(tag, 0) + 1
    manifest = {
        "config": config.as_mapping(),
        "config_hash": config_fingerprint(config.as_mapping()),
        "n_instances": len(ordered),
        "skipped_trips": skipped,
        "feature_counts": {t: counts.get(t, 0) for t in FEATURE_SET_TAGS},
        "sign_convention":
            "difference = first-named mode minus second; ratio = first over second",
    }
    try:
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return EmitResult(instances_path, manifest_path, len(ordered), skipped)
