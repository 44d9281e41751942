"""GPS trace replay against a planned timetable.

Per-vehicle processing: a tracker assigns each location record to a trip,
derives the previous / next stop and the signed delay at the most recent
stop, and finalizes "stop visits" (the last in-geofence sample before the
vehicle exits a 50 m stop geofence). Consecutive visits of one trip become
EdgeSegments carrying average speed and stopping-event counters; segments
land in a date/line partitioned CSV store that answers experience queries.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import os
from dataclasses import dataclass, field

from .errors import InvalidPeriod, IoError, UnmatchedRecord
from .geo import haversine_m
from .gtfs import Timetable
from .timeutil import midnight_epoch

log = logging.getLogger(__name__)

SPEED_THRESHOLD_MS = 5.0 / 3.6          # 5 km/h
DURATION_THRESHOLDS_S = (30, 60, 90, 120)
GEOFENCE_M = 50.0


@dataclass(frozen=True)
class VehicleLocation:
    epoch: int
    line: str
    brigade: str
    lat: float
    lon: float

    @property
    def vehicle_id(self) -> str:
        return f"{self.line}/{self.brigade}"


@dataclass(frozen=True)
class MatchedLocation:
    epoch: int
    line: str
    brigade: str
    lat: float
    lon: float
    trip_id: str
    prev_stop: str | None
    next_stop: str | None
    dest_stop: str
    at_stop: str | None            # geofence the vehicle is currently inside
    delay_s: int | None            # observed - planned departure at prev_stop
    planned_dep_epoch: int | None  # planned departure epoch at prev_stop

    @property
    def vehicle_id(self) -> str:
        return f"{self.line}/{self.brigade}"


@dataclass(frozen=True)
class StopVisit:
    trip_id: str
    stop_id: str
    stop_index: int
    departure_epoch: int
    delay_s: int


@dataclass
class EdgeSegment:
    vehicle_id: str
    line: str
    trip_id: str
    from_stop: str
    to_stop: str
    dep_from_epoch: int
    dep_to_epoch: int
    delay_from_s: int
    delay_to_s: int
    avg_speed_ms: float
    events: dict = field(default_factory=dict)  # theta -> (below, at_or_above)


def count_stopping_events(series, speed_threshold: float = SPEED_THRESHOLD_MS,
                          duration_thresholds=DURATION_THRESHOLDS_S) -> dict:
    """Maximal sub-threshold runs in a time-ordered (epoch, speed) series.

    Episode duration is last minus first sample epoch of the run; each
    episode lands on exactly one side of every duration threshold.
    """
    durations = []
    run_start = None
    run_last = None
    for epoch, speed in series:
        if speed < speed_threshold:
            if run_start is None:
                run_start = epoch
            run_last = epoch
        else:
            if run_start is not None:
                durations.append(run_last - run_start)
                run_start = None
    if run_start is not None:
        durations.append(run_last - run_start)

    out = {}
    for theta in duration_thresholds:
        below = 0
        for d in durations:
            if d < theta:
                below += 1
        out[theta] = {"below": below, "at_or_above": len(durations) - below}
    return out


class VehicleTracker:
    """Streaming matcher state for one vehicle (line + brigade) on one day.

    Trip acquisition happens at the first geofence entry: among the line's
    trips active that day, the one whose planned departure at the entered
    stop is nearest in time wins (ties: lowest trip id). Records arriving
    before acquisition are unmatchable and counted.
    """

    def __init__(self, line: str, timetable: Timetable, service_date: dt.date,
                 geofence_m: float = GEOFENCE_M):
        self.line = line
        self.geofence_m = geofence_m
        midnight = midnight_epoch(service_date)
        self.trips: dict = {}
        for trip_id in timetable.trips_active_on(service_date):
            trip = timetable.trips[trip_id]
            route = timetable.routes[trip.route_id]
            if line not in (trip.route_id, route.short_name):
                continue
            sts = timetable.stop_times.get(trip_id)
            if not sts:
                continue
            self.trips[trip_id] = [
                (st.stop_id,
                 timetable.stops[st.stop_id].lat,
                 timetable.stops[st.stop_id].lon,
                 midnight + st.departure_s)
                for st in sts
            ]
        if not self.trips:
            raise UnmatchedRecord(f"line {line} has no trips on {service_date}")
        self.line_stops: dict = {}
        for chain in self.trips.values():
            for sid, lat, lon, _dep in chain:
                self.line_stops[sid] = (lat, lon)

        self.trip_id: str | None = None
        self._chain = None
        self._visited_idx = -1
        self._pending = None          # (stop_id, stop_index|None, last_inside_epoch)
        self._prev_visit: StopVisit | None = None
        self.visits: list = []
        self.matched: list = []
        self.out_of_order_trips: set = set()
        self.counts = {"matched": 0, "pre_acquisition": 0, "duplicates": 0, "out_of_order": 0}
        self._last_epoch = None

    def _nearest_stop(self, lat, lon):
        pool = self.line_stops if self.trip_id is None else {
            sid: (la, lo) for sid, la, lo, _ in self._chain
        }
        best = None
        for sid in sorted(pool):
            d = haversine_m(lat, lon, *pool[sid])
            if d <= self.geofence_m and (best is None or d < best[1]):
                best = (sid, d)
        return best[0] if best else None

    def _acquire(self, stop_id: str, epoch: int) -> None:
        best = None
        for trip_id in sorted(self.trips):
            for idx, (sid, _la, _lo, dep) in enumerate(self.trips[trip_id]):
                if sid != stop_id:
                    continue
                score = abs(dep - epoch)
                if best is None or score < best[0]:
                    best = (score, trip_id, idx)
        if best is None:
            return
        self.trip_id = best[1]
        self._chain = self.trips[best[1]]
        self._visited_idx = best[2] - 1
        self._prev_visit = None

    def _finalize_visit(self) -> None:
        stop_id, _idx, last_inside = self._pending
        self._pending = None
        if self.trip_id is None:
            return
        idx = None
        for i in range(self._visited_idx + 1, len(self._chain)):
            if self._chain[i][0] == stop_id:
                idx = i
                break
        if idx is None:
            behind = any(c[0] == stop_id for c in self._chain[: self._visited_idx + 1])
            if behind:
                self.counts["out_of_order"] += 1
                self.out_of_order_trips.add(self.trip_id)
            return
        planned_dep = self._chain[idx][3]
        visit = StopVisit(self.trip_id, stop_id, idx, last_inside, last_inside - planned_dep)
        self.visits.append(visit)
        self._prev_visit = visit
        self._visited_idx = idx

    def push(self, rec: VehicleLocation) -> MatchedLocation | None:
        if self._last_epoch is not None and rec.epoch <= self._last_epoch:
            self.counts["duplicates"] += 1
            return None
        self._last_epoch = rec.epoch

        at = self._nearest_stop(rec.lat, rec.lon)
        if self._pending is not None and at != self._pending[0]:
            self._finalize_visit()
        if at is not None:
            if self.trip_id is None and self._pending is None:
                self._acquire(at, rec.epoch)
            self._pending = (at, None, rec.epoch)

        if self.trip_id is None:
            self.counts["pre_acquisition"] += 1
            return None

        prev = self._prev_visit
        next_idx = self._visited_idx + 1
        m = MatchedLocation(
            epoch=rec.epoch, line=rec.line, brigade=rec.brigade,
            lat=rec.lat, lon=rec.lon,
            trip_id=self.trip_id,
            prev_stop=prev.stop_id if prev else None,
            next_stop=self._chain[next_idx][0] if next_idx < len(self._chain) else None,
            dest_stop=self._chain[-1][0],
            at_stop=at,
            delay_s=prev.delay_s if prev else None,
            planned_dep_epoch=self._chain[prev.stop_index][3] if prev else None,
        )
        self.matched.append(m)
        self.counts["matched"] += 1
        return m

    def finish(self) -> None:
        """End of stream: a pending geofence dwell never exited is not a
        departure; it is discarded."""
        self._pending = None


def match_location(record: VehicleLocation, planned: Timetable, state: VehicleTracker):
    """Streaming single-record entry point; see VehicleTracker.push."""
    return state.push(record)


@dataclass
class VehicleDayResult:
    vehicle_id: str
    matched: list
    visits: list
    counts: dict
    out_of_order_trips: set


def replay_vehicle_day(locations, line: str, timetable: Timetable, service_date: dt.date,
                       geofence_m: float = GEOFENCE_M) -> VehicleDayResult:
    """Replay one vehicle-day worth of records (any order, duplicates ok)."""
    tracker = VehicleTracker(line, timetable, service_date, geofence_m)
    vehicle_id = None
    for rec in sorted(locations, key=lambda r: r.epoch):
        vehicle_id = rec.vehicle_id
        tracker.push(rec)
    tracker.finish()
    return VehicleDayResult(vehicle_id or line, tracker.matched, tracker.visits,
                            tracker.counts, tracker.out_of_order_trips)


def extract_edge_segments(matched, *, speed_threshold: float = SPEED_THRESHOLD_MS,
                          duration_thresholds=DURATION_THRESHOLDS_S) -> list:
    """EdgeSegments between consecutive stop visits of one vehicle-day.

    The matched stream itself carries everything needed: visit boundaries
    show up as changes of (trip, prev_stop), and the visit departure epoch
    is planned departure + delay. Speed samples use the smaller of the two
    adjacent pairwise estimates so a halt spanning [T, T+d] measures d even
    though pairwise speeds only exist between samples. Dwell samples inside
    the destination stop's geofence are excluded.
    """
    if not matched:
        return []
    boundaries = []  # (index, trip_id, stop_id, dep_epoch, delay)
    prev_key = None
    for i, m in enumerate(matched):
        key = (m.trip_id, m.prev_stop, m.planned_dep_epoch)
        if key != prev_key and m.prev_stop is not None:
            boundaries.append((i, m.trip_id, m.prev_stop, m.planned_dep_epoch + m.delay_s, m.delay_s))
        prev_key = key

    segments = []
    for (i0, trip0, stop0, dep0, delay0), (i1, trip1, stop1, dep1, delay1) in zip(boundaries, boundaries[1:]):
        if trip0 != trip1 or dep1 <= dep0:
            continue
        rows = [m for m in matched[i0:i1] if m.at_stop != stop1]
        n = len(rows)
        pairv = [
            haversine_m(rows[k].lat, rows[k].lon, rows[k + 1].lat, rows[k + 1].lon)
            / (rows[k + 1].epoch - rows[k].epoch)
            for k in range(n - 1)
        ]
        speeds = []
        for k in range(n):
            adjacent = pairv[max(0, k - 1):k + 1]
            if adjacent:
                speeds.append((rows[k].epoch, min(adjacent)))
        dist = sum(pairv[k] * (rows[k + 1].epoch - rows[k].epoch) for k in range(n - 1))
        span = rows[-1].epoch - rows[0].epoch if n >= 2 else 0
        avg = dist / span if span > 0 else 0.0
        seg = EdgeSegment(
            vehicle_id=matched[i0].vehicle_id, line=matched[i0].line, trip_id=trip0,
            from_stop=stop0, to_stop=stop1,
            dep_from_epoch=dep0, dep_to_epoch=dep1,
            delay_from_s=delay0, delay_to_s=delay1,
            avg_speed_ms=avg,
            events=count_stopping_events(speeds, speed_threshold, duration_thresholds),
        )
        segments.append(seg)
    return segments


# --- segment store ----------------------------------------------------------

_STORE_HEADER = [
    "vehicle_id", "line", "trip_id", "from_stop", "to_stop",
    "dep_from_epoch", "dep_to_epoch", "delay_from_s", "delay_to_s", "avg_speed_ms",
]
for _theta in DURATION_THRESHOLDS_S:
    _STORE_HEADER += [f"ev_below_{_theta}", f"ev_atleast_{_theta}"]


class SegmentStore:
    """Append-only segment collection, persisted as segments/<date>/<line>.csv."""

    def __init__(self):
        self._by_partition: dict = {}  # (date_iso, line) -> [EdgeSegment]

    def append(self, service_date: dt.date, segments) -> None:
        for seg in segments:
            self._by_partition.setdefault((service_date.isoformat(), seg.line), []).append(seg)

    def all_segments(self):
        for key in sorted(self._by_partition):
            yield from self._by_partition[key]

    def segments_on(self, service_date: dt.date) -> list:
        iso = service_date.isoformat()
        out = []
        for (date_iso, _line) in sorted(self._by_partition):
            if date_iso == iso:
                out.extend(self._by_partition[(date_iso, _line)])
        return out

    def save(self, root: str) -> None:
        try:
            for (date_iso, line), segs in sorted(self._by_partition.items()):
                d = os.path.join(root, date_iso)
                os.makedirs(d, exist_ok=True)
                rows = []
                for s in segs:
                    row = [s.vehicle_id, s.line, s.trip_id, s.from_stop, s.to_stop,
                           s.dep_from_epoch, s.dep_to_epoch, s.delay_from_s, s.delay_to_s,
                           repr(s.avg_speed_ms)]
                    for theta in DURATION_THRESHOLDS_S:
                        ev = s.events.get(theta, {"below": 0, "at_or_above": 0})
                        row += [ev["below"], ev["at_or_above"]]
                    rows.append(row)
                rows.sort(key=lambda r: (r[0], int(r[5]), r[3]))
                with open(os.path.join(d, f"{line}.csv"), "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(_STORE_HEADER)
                    w.writerows(rows)
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def load(cls, root: str, dates=None) -> "SegmentStore":
        store = cls()
        if not os.path.isdir(root):
            raise IoError(f"not a directory: {root}")
        for date_iso in sorted(os.listdir(root)):
            d = os.path.join(root, date_iso)
            if not os.path.isdir(d):
                continue
            if dates is not None and date_iso not in dates:
                continue
            for fname in sorted(os.listdir(d)):
                if not fname.endswith(".csv"):
                    continue
                line = fname[:-4]
                segs = []
                with open(os.path.join(d, fname), newline="") as fh:
                    for row in csv.DictReader(fh):
                        events = {}
                        for theta in DURATION_THRESHOLDS_S:
                            events[theta] = {
                                "below": int(row[f"ev_below_{theta}"]),
                                "at_or_above": int(row[f"ev_atleast_{theta}"]),
                            }
                        segs.append(EdgeSegment(
                            vehicle_id=row["vehicle_id"], line=row["line"], trip_id=row["trip_id"],
                            from_stop=row["from_stop"], to_stop=row["to_stop"],
                            dep_from_epoch=int(row["dep_from_epoch"]),
                            dep_to_epoch=int(row["dep_to_epoch"]),
                            delay_from_s=int(row["delay_from_s"]),
                            delay_to_s=int(row["delay_to_s"]),
                            avg_speed_ms=float(row["avg_speed_ms"]),
                            events=events,
                        ))
                store._by_partition[(date_iso, line)] = segs
        return store


EXPERIENCE_SENTINEL = -1.0


def query_experience(store: SegmentStore, edges, lines, period) -> dict:
    """Aggregate delay / speed / stop-event features over matching segments.

    Matching: segment line in `lines` AND (from,to) in `edges` AND departure
    at the from-stop inside `period` (inclusive). Empty match yields the
    sentinel policy with hasExperience=0.
    """
    t_min, t_max = period
    if t_min > t_max:
        raise InvalidPeriod(f"{t_min} > {t_max}")
    edge_set = set(edges)
    line_set = set(lines)
    hits = []
    for seg in store.all_segments():
        if seg.line not in line_set:
            continue
        if (seg.from_stop, seg.to_stop) not in edge_set:
            continue
        if not (t_min <= seg.dep_from_epoch <= t_max):
            continue
        hits.append(seg)

    out = {}
    if not hits:
        out["avgCurrentStopDelay_LOW_TRANSIT"] = EXPERIENCE_SENTINEL
        out["maxCurrentStopDelay_LOW_TRANSIT"] = EXPERIENCE_SENTINEL
        out["avgSpeed_LOW_TRANSIT"] = EXPERIENCE_SENTINEL
        for theta in DURATION_THRESHOLDS_S:
            out[f"stopEventsBelow{theta}_LOW_TRANSIT"] = EXPERIENCE_SENTINEL
            out[f"stopEventsAtLeast{theta}_LOW_TRANSIT"] = EXPERIENCE_SENTINEL
        out["hasExperience"] = 0
        return out

    delays = [float(s.delay_from_s) for s in hits]
    out["avgCurrentStopDelay_LOW_TRANSIT"] = sum(delays) / len(delays)
    out["maxCurrentStopDelay_LOW_TRANSIT"] = max(delays)
    out["avgSpeed_LOW_TRANSIT"] = sum(s.avg_speed_ms for s in hits) / len(hits)
    for theta in DURATION_THRESHOLDS_S:
        out[f"stopEventsBelow{theta}_LOW_TRANSIT"] = float(sum(s.events[theta]["below"] for s in hits))
        out[f"stopEventsAtLeast{theta}_LOW_TRANSIT"] = float(sum(s.events[theta]["at_or_above"] for s in hits))
    out["hasExperience"] = 1
    return out


# --- trace file IO ------------------------------------------------------------

_TRACE_HEADER = ["epoch", "line", "brigade", "lat", "lon"]


def locations_to_csv(path: str, locations) -> None:
    rows = sorted(((l.line, l.brigade, l.epoch, l.lat, l.lon) for l in locations))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_TRACE_HEADER)
            for line, brigade, epoch, lat, lon in rows:
                w.writerow([epoch, line, brigade, repr(lat), repr(lon)])
    except OSError as exc:
        raise IoError(str(exc)) from exc


def locations_from_csv(path: str):
    """Read a raw trace file; malformed rows are counted, not fatal.
    Returns (locations sorted by vehicle then time, skipped count)."""
    locs, skipped = [], 0
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                try:
                    locs.append(VehicleLocation(
                        epoch=int(row["epoch"]), line=row["line"],
                        brigade=row["brigade"],
                        lat=float(row["lat"]), lon=float(row["lon"])))
                except (KeyError, TypeError, ValueError):
                    skipped += 1
    except OSError as exc:
        raise IoError(str(exc)) from exc
    locs.sort(key=lambda l: (l.line, l.brigade, l.epoch))
    return locs, skipped
