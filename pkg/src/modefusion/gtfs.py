"""Timetable subset: stops, routes, trips, stop_times, calendar.

Reads and writes the four mandatory text tables plus an optional calendar.
Times are seconds since service midnight and may exceed 86400. Two extra
constructors exist: frequency expansion (headway spec -> concrete trips) and
reconstruction of a "real" single-day timetable from observed departures.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import os
from dataclasses import dataclass, field

from .errors import (
    EmptyTraceError,
    FeedIncomplete,
    InvalidHeadway,
    IoError,
    ReferentialError,
    ScheduleOrderError,
)
from .timeutil import format_gtfs_time, parse_date, parse_gtfs_time

log = logging.getLogger(__name__)

VEHICLE_KINDS = ("tram", "metro", "rail", "bus")

# route_type code <-> vehicle kind, standard surface codes only
_TYPE_TO_KIND = {"0": "tram", "1": "metro", "2": "rail", "3": "bus"}
_KIND_TO_TYPE = {v: k for k, v in _TYPE_TO_KIND.items()}

REQUIRED_FILES = ("stops.txt", "routes.txt", "trips.txt", "stop_times.txt")
CALENDAR_FILE = "calendar.txt"

_WEEKDAY_COLS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


@dataclass(frozen=True)
class Stop:
    id: str
    name: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Route:
    id: str
    short_name: str
    vehicle_kind: str


@dataclass(frozen=True)
class TransitTrip:
    id: str
    route_id: str
    service_id: str


@dataclass(frozen=True)
class StopTime:
    trip_id: str
    stop_id: str
    arrival_s: int
    departure_s: int
    sequence: int


@dataclass(frozen=True)
class ServicePattern:
    id: str
    weekdays: frozenset  # 0=Mon .. 6=Sun
    start_date: dt.date | None = None
    end_date: dt.date | None = None

    def active_on(self, day: dt.date) -> bool:
        if day.weekday() not in self.weekdays:
            return False
        if self.start_date is not None and day < self.start_date:
            return False
        if self.end_date is not None and day > self.end_date:
            return False
        return True


ALL_DAYS = frozenset(range(7))


@dataclass
class Timetable:
    stops: dict = field(default_factory=dict)          # stop_id -> Stop
    routes: dict = field(default_factory=dict)         # route_id -> Route
    trips: dict = field(default_factory=dict)          # trip_id -> TransitTrip
    stop_times: dict = field(default_factory=dict)     # trip_id -> [StopTime] by sequence
    services: dict = field(default_factory=dict)       # service_id -> ServicePattern
    provenance: tuple = field(default=("planned", None), compare=False)

    def trips_active_on(self, day: dt.date) -> list[str]:
        out = []
        for trip_id, trip in self.trips.items():
            svc = self.services.get(trip.service_id)
            if svc is None or svc.active_on(day):
                out.append(trip_id)
        return out

    def validate(self) -> None:
        for trip_id, trip in self.trips.items():
            if trip.route_id not in self.routes:
                raise ReferentialError("trips.txt", 0, f"trip {trip_id} -> route {trip.route_id}")
        for trip_id, sts in self.stop_times.items():
            if trip_id not in self.trips:
                raise ReferentialError("stop_times.txt", 0, f"unknown trip {trip_id}")
            prev_dep = None
            seen_seq = set()
            for st in sts:
                if st.stop_id not in self.stops:
                    raise ReferentialError("stop_times.txt", 0, f"unknown stop {st.stop_id}")
                if st.sequence in seen_seq:
                    raise ScheduleOrderError(trip_id, f"duplicate sequence {st.sequence}")
                seen_seq.add(st.sequence)
                if st.arrival_s > st.departure_s:
                    raise ScheduleOrderError(trip_id, "arrival after departure")
                if prev_dep is not None and st.departure_s <= prev_dep:
                    raise ScheduleOrderError(trip_id, "departures not strictly increasing")
                prev_dep = st.departure_s


def _read_rows(path: str, fname: str, required_cols: tuple) -> list[dict]:
    full = os.path.join(path, fname)
    if not os.path.exists(full):
        raise FeedIncomplete(f"missing {fname}")
    with open(full, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required_cols:
            if col not in header:
                raise FeedIncomplete(f"{fname} lacks column {col}")
        return list(reader)


def parse_gtfs(path: str) -> Timetable:
    """Load a feed directory. Raises FeedIncomplete / ReferentialError /
    ScheduleOrderError on contract violations."""
    if not os.path.isdir(path):
        raise IoError(f"not a directory: {path}")
    tt = Timetable()

    for row in _read_rows(path, "stops.txt", ("stop_id", "stop_lat", "stop_lon")):
        sid = row["stop_id"]
        lat = float(row["stop_lat"])
        lon = float(row["stop_lon"])
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ReferentialError("stops.txt", 0, f"stop {sid} coordinates out of range")
        tt.stops[sid] = Stop(sid, row.get("stop_name", "") or "", lat, lon)

    for row in _read_rows(path, "routes.txt", ("route_id", "route_type")):
        kind = _TYPE_TO_KIND.get(row["route_type"].strip())
        if kind is None:
            raise ReferentialError("routes.txt", 0, f"unsupported route_type {row['route_type']}")
        tt.routes[row["route_id"]] = Route(row["route_id"], row.get("route_short_name", "") or "", kind)

    for i, row in enumerate(_read_rows(path, "trips.txt", ("trip_id", "route_id", "service_id")), start=2):
        if row["route_id"] not in tt.routes:
            raise ReferentialError("trips.txt", i, f"unknown route {row['route_id']}")
        tt.trips[row["trip_id"]] = TransitTrip(row["trip_id"], row["route_id"], row["service_id"])

    raw_sts: dict[str, list[StopTime]] = {}
    cols = ("trip_id", "stop_id", "arrival_time", "departure_time", "stop_sequence")
    for i, row in enumerate(_read_rows(path, "stop_times.txt", cols), start=2):
        trip_id = row["trip_id"]
        if trip_id not in tt.trips:
            raise ReferentialError("stop_times.txt", i, f"unknown trip {trip_id}")
        if row["stop_id"] not in tt.stops:
            raise ReferentialError("stop_times.txt", i, f"unknown stop {row['stop_id']}")
        st = StopTime(
            trip_id,
            row["stop_id"],
            parse_gtfs_time(row["arrival_time"]),
            parse_gtfs_time(row["departure_time"]),
            int(row["stop_sequence"]),
        )
        raw_sts.setdefault(trip_id, []).append(st)
    for trip_id, sts in raw_sts.items():
        tt.stop_times[trip_id] = sorted(sts, key=lambda s: s.sequence)

    cal_path = os.path.join(path, CALENDAR_FILE)
    if os.path.exists(cal_path):
        for row in _read_rows(path, CALENDAR_FILE, ("service_id",)):
            days = frozenset(i for i, c in enumerate(_WEEKDAY_COLS) if row.get(c, "0").strip() == "1")
            start = parse_date(row["start_date"]) if row.get("start_date") else None
            end = parse_date(row["end_date"]) if row.get("end_date") else None
            tt.services[row["service_id"]] = ServicePattern(row["service_id"], days, start, end)
    # services referenced but not declared run every day
    for trip in tt.trips.values():
        if trip.service_id not in tt.services:
            tt.services[trip.service_id] = ServicePattern(trip.service_id, ALL_DAYS)

    tt.validate()
    return tt


def write_gtfs(tt: Timetable, path: str) -> None:
    """Write the feed with deterministic ordering; parse(write(tt)) == tt."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc

    def _write(fname, header, rows):
        with open(os.path.join(path, fname), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    _write(
        "stops.txt",
        ["stop_id", "stop_name", "stop_lat", "stop_lon"],
        [[s.id, s.name, repr(s.lat), repr(s.lon)] for s in sorted(tt.stops.values(), key=lambda s: s.id)],
    )
    _write(
        "routes.txt",
        ["route_id", "route_short_name", "route_type"],
        [[r.id, r.short_name, _KIND_TO_TYPE[r.vehicle_kind]]
         for r in sorted(tt.routes.values(), key=lambda r: r.id)],
    )
    _write(
        "trips.txt",
        ["trip_id", "route_id", "service_id"],
        [[t.id, t.route_id, t.service_id] for t in sorted(tt.trips.values(), key=lambda t: t.id)],
    )
    st_rows = []
    for trip_id in sorted(tt.stop_times):
        for st in tt.stop_times[trip_id]:
            st_rows.append([st.trip_id, st.stop_id, format_gtfs_time(st.arrival_s),
                            format_gtfs_time(st.departure_s), st.sequence])
    _write("stop_times.txt", ["trip_id", "stop_id", "arrival_time", "departure_time", "stop_sequence"], st_rows)

    cal_rows = []
    for svc in sorted(tt.services.values(), key=lambda s: s.id):
        row = [svc.id] + ["1" if d in svc.weekdays else "0" for d in range(7)]
        row.append(svc.start_date.strftime("%Y%m%d") if svc.start_date else "")
        row.append(svc.end_date.strftime("%Y%m%d") if svc.end_date else "")
        cal_rows.append(row)
    _write(CALENDAR_FILE, ["service_id"] + list(_WEEKDAY_COLS) + ["start_date", "end_date"], cal_rows)


def expand_frequency_service(
    route_id: str,
    pattern: list,
    headways: dict,
    service_id: str,
    span: tuple | None = None,
    trip_prefix: str | None = None,
) -> tuple[list, dict]:
    """Turn an hourly headway spec into concrete trips.

    pattern: [(stop_id, arrival_offset_s, departure_offset_s), ...] with the
    first departure offset 0. headways: {hour: headway_s}. A trip starts at
    every multiple of the headway within its hour (clipped to `span` when
    given). Returns (trips, stop_times-by-trip).
    """
    if not pattern:
        raise InvalidHeadway("empty stop pattern")
    prefix = trip_prefix or route_id
    trips = []
    stop_times = {}
    for hour in sorted(headways):
        headway = headways[hour]
        if headway <= 0:
            raise InvalidHeadway(f"headway {headway} for hour {hour}")
        start = hour * 3600
        k = 0
        while start + k * headway < (hour + 1) * 3600:
            dep0 = start + k * headway
            if span is not None and not (span[0] <= dep0 < span[1]):
                k += 1
                continue
            trip_id = f"{prefix}_h{hour:02d}_{k:02d}"
            trips.append(TransitTrip(trip_id, route_id, service_id))
            sts = []
            for seq, (stop_id, arr_off, dep_off) in enumerate(pattern):
                sts.append(StopTime(trip_id, stop_id, dep0 + arr_off, dep0 + dep_off, seq))
            stop_times[trip_id] = sts
            k += 1
    return trips, stop_times


@dataclass(frozen=True)
class ObservedDeparture:
    trip_id: str
    stop_id: str
    departure_epoch: int


def build_real_timetable(observations, planned: Timetable, service_date: dt.date) -> Timetable:
    """Single-day timetable from observed departures.

    Trips with no observation are dropped. Unobserved stops of a partially
    observed trip get the planned time shifted by the offset at the nearest
    observed stop (by sequence distance; ties prefer the preceding stop).
    Trips whose observations contradict the planned stop order are dropped.
    """
    from .timeutil import midnight_epoch

    obs_list = list(observations)
    if not obs_list:
        raise EmptyTraceError("no observed departures")
    midnight = midnight_epoch(service_date)

    by_trip: dict[str, dict[str, int]] = {}
    for obs in obs_list:
        if obs.trip_id not in planned.trips:
            log.warning("observation for unknown trip %s ignored", obs.trip_id)
            continue
        per = by_trip.setdefault(obs.trip_id, {})
        if obs.stop_id not in per:  # keep the first observation per stop
            per[obs.stop_id] = obs.departure_epoch - midnight

    real = Timetable(provenance=("real", service_date))
    real.stops = dict(planned.stops)
    service = ServicePattern(f"real_{service_date.isoformat()}", ALL_DAYS, service_date, service_date)
    real.services[service.id] = service

    dropped = 0
    for trip_id in sorted(by_trip):
        per = by_trip[trip_id]
        planned_sts = planned.stop_times.get(trip_id, [])
        obs_idx = [i for i, st in enumerate(planned_sts) if st.stop_id in per]
        if not obs_idx:
            continue
        # observed departures must respect planned stop order
        obs_seq = [per[planned_sts[i].stop_id] for i in obs_idx]
        if any(b <= a for a, b in zip(obs_seq, obs_seq[1:])):
            log.warning("trip %s observations out of order, dropped", trip_id)
            dropped += 1
            continue
        new_sts = []
        ok = True
        prev_dep = None
        obs_set = set(obs_idx)
        for i, st in enumerate(planned_sts):
            if i in obs_set:
                dep = per[st.stop_id]
                arr = dep - (st.departure_s - st.arrival_s)
            else:
                anchor = min(obs_idx, key=lambda j: (abs(j - i), j > i))
                shift = per[planned_sts[anchor].stop_id] - planned_sts[anchor].departure_s
                dep = st.departure_s + shift
                arr = st.arrival_s + shift
            if arr > dep or (prev_dep is not None and dep <= prev_dep):
                ok = False
                break
            prev_dep = dep
            new_sts.append(StopTime(trip_id, st.stop_id, arr, dep, st.sequence))
        if not ok:
            log.warning("trip %s incoherent after completion, dropped", trip_id)
            dropped += 1
            continue
        trip = planned.trips[trip_id]
        real.trips[trip_id] = TransitTrip(trip_id, trip.route_id, service.id)
        real.stop_times[trip_id] = new_sts
        if trip.route_id not in real.routes:
            real.routes[trip.route_id] = planned.routes[trip.route_id]
    if dropped:
        log.info("dropped %d trips while building real timetable", dropped)
    return real
