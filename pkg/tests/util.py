"""Shared builders for tests: randomized timetables and tiny networks."""

from __future__ import annotations

import datetime as dt
import math
import random

from modefusion.geo import haversine_m
from modefusion.gtfs import (
    ALL_DAYS,
    Route,
    ServicePattern,
    Stop,
    StopTime,
    Timetable,
    TransitTrip,
    VEHICLE_KINDS,
)

_NAMES = [
    "Central", "Market Sq", 'Plaza "Norte"', "Foo, Bar", "Dépôt",
    "Old Town", "River East", "Hill 3", "Stadium", "Airport",
]


def random_timetable(rng: random.Random) -> Timetable:
    """A structurally valid random feed, already in parse-normalised form."""
    tt = Timetable()
    n_stops = rng.randint(5, 20)
    for i in range(n_stops):
        sid = f"S{i:03d}"
        tt.stops[sid] = Stop(
            sid,
            rng.choice(_NAMES),
            52.0 + rng.random() * 0.2,
            20.8 + rng.random() * 0.3,
        )
    stop_ids = list(tt.stops)

    n_services = rng.randint(1, 3)
    for i in range(n_services):
        svc_id = f"C{i}"
        if rng.random() < 0.4:
            tt.services[svc_id] = ServicePattern(svc_id, ALL_DAYS)
        else:
            days = frozenset(rng.sample(range(7), rng.randint(1, 7)))
            start = dt.date(2023, rng.randint(1, 6), rng.randint(1, 28))
            end = start + dt.timedelta(days=rng.randint(10, 200))
            tt.services[svc_id] = ServicePattern(svc_id, days, start, end)
    service_ids = list(tt.services)

    n_routes = rng.randint(1, 5)
    for i in range(n_routes):
        rid = f"R{i}"
        tt.routes[rid] = Route(rid, str(rng.randint(1, 199)), rng.choice(VEHICLE_KINDS))

    trip_no = 0
    for rid in tt.routes:
        for _ in range(rng.randint(1, 6)):
            trip_id = f"T{trip_no:04d}"
            trip_no += 1
            tt.trips[trip_id] = TransitTrip(trip_id, rid, rng.choice(service_ids))
            if rng.random() < 0.05:
                continue  # a trip may exist without stop times
            n = rng.randint(2, min(8, n_stops))
            seq_stops = rng.sample(stop_ids, n)
            dep = rng.randint(4 * 3600, 27 * 3600)  # some run past midnight
            seq = 0
            sts = []
            for sid in seq_stops:
                arr = dep
                dep = arr + rng.randint(0, 90)  # dwell
                sts.append(StopTime(trip_id, sid, arr, dep, seq))
                seq += rng.randint(1, 3)  # gaps in sequence numbers are legal
                dep += rng.randint(30, 900)
            tt.stop_times[trip_id] = sts
    tt.validate()
    return tt


def routable_timetable(rng: random.Random, n_stops: int = 20, n_lines: int = 3,
                       headway_range=(300, 900), span=(6 * 3600, 22 * 3600)) -> Timetable:
    """Random but well-behaved transit net: jittered grid of stops, lines
    visiting random stop chains in both directions, constant per-line run
    times (so no overtaking), all-days service."""
    tt = Timetable()
    side = max(2, int(math.sqrt(n_stops)))
    idx = 0
    for gy in range(side):
        for gx in range(side):
            if idx >= n_stops:
                break
            sid = f"S{idx:03d}"
            lat = 52.15 + gy * 0.006 + rng.uniform(-0.001, 0.001)
            lon = 20.95 + gx * 0.009 + rng.uniform(-0.0015, 0.0015)
            tt.stops[sid] = Stop(sid, sid, lat, lon)
            idx += 1
    stop_ids = list(tt.stops)
    tt.services["ALL"] = ServicePattern("ALL", ALL_DAYS)

    trip_no = 0
    for li in range(n_lines):
        rid = f"L{li}"
        tt.routes[rid] = Route(rid, str(li + 1), rng.choice(VEHICLE_KINDS))
        chain = rng.sample(stop_ids, rng.randint(4, min(8, n_stops)))
        run = [max(45, int(haversine_m(tt.stops[a].lat, tt.stops[a].lon,
                                       tt.stops[b].lat, tt.stops[b].lon) / 8.0))
               for a, b in zip(chain, chain[1:])]
        dwell = rng.randint(0, 20)
        headway = rng.randrange(headway_range[0], headway_range[1], 60)
        for direction, seq in ((0, chain), (1, list(reversed(chain)))):
            runs = run if direction == 0 else list(reversed(run))
            dep0 = span[0] + rng.randrange(0, headway, 30)
            while dep0 < span[1]:
                trip_id = f"T{trip_no:04d}"
                trip_no += 1
                tt.trips[trip_id] = TransitTrip(trip_id, rid, "ALL")
                sts = []
                tcur = dep0
                for pos, sid in enumerate(seq):
                    arr = tcur
                    dep = arr + dwell
                    sts.append(StopTime(trip_id, sid, arr, dep, pos))
                    if pos < len(runs):
                        tcur = dep + runs[pos]
                tt.stop_times[trip_id] = sts
                dep0 += headway
    tt.validate()
    return tt


def bbox_of(tt: Timetable):
    lats = [s.lat for s in tt.stops.values()]
    lons = [s.lon for s in tt.stops.values()]
    return min(lats), min(lons), max(lats), max(lons)


def random_query(rng: random.Random, tt: Timetable, span=(7 * 3600, 21 * 3600)):
    lat0, lon0, lat1, lon1 = bbox_of(tt)
    o = (rng.uniform(lat0, lat1), rng.uniform(lon0, lon1))
    d = (rng.uniform(lat0, lat1), rng.uniform(lon0, lon1))
    day_start = 1_683_072_000  # 2023-05-03 00:00 UTC
    t = day_start + rng.randint(span[0], span[1])
    return o, d, t


M_PER_DEG_LAT = 6371000.0 * math.pi / 180.0


def line_timetable(n_stops: int = 6, spacing_m: float = 500.0, dep0_s: int = 8 * 3600,
                   run_s: int = 40, dwell_s: int = 20, n_trips: int = 1,
                   headway_s: int = 900, line: str = "L7", kind: str = "bus",
                   base=(52.2, 21.0)) -> Timetable:
    """One straight line of stops on a meridian with evenly timed trips."""
    tt = Timetable()
    for k in range(n_stops):
        sid = f"{line}_S{k}"
        tt.stops[sid] = Stop(sid, f"Stop {k}", base[0] + k * spacing_m / M_PER_DEG_LAT, base[1])
    tt.routes[line] = Route(line, line, kind)
    tt.services["WK"] = ServicePattern("WK", ALL_DAYS, None, None)
    for j in range(n_trips):
        trip_id = f"{line}_T{j}"
        tt.trips[trip_id] = TransitTrip(trip_id, line, "WK")
        sts = []
        for k in range(n_stops):
            dep = dep0_s + j * headway_s + k * (run_s + dwell_s)
            arr = dep if k == 0 else dep - dwell_s
            sts.append(StopTime(trip_id, f"{line}_S{k}", arr, dep, k + 1))
        tt.stop_times[trip_id] = sts
    return tt


def drive_trace(tt: Timetable, trip_id: str, day: dt.date, delay_s: int = 0,
                cadence_s: int = 5, halts=None, brigade: str = "01",
                lead_s: int = 35, tail_s: int = 35):
    """Sample a vehicle driving a trip at constant speed per edge.

    `halts` maps edge index -> (offset_after_departure_s, duration_s); a halt
    freezes the vehicle mid-edge and pushes everything downstream later.
    """
    from modefusion.timeutil import midnight_epoch
    from modefusion.vehicle_flow import VehicleLocation

    midnight = midnight_epoch(day)
    chain = [
        (tt.stops[st.stop_id].lat, tt.stops[st.stop_id].lon,
         midnight + st.arrival_s, midnight + st.departure_s)
        for st in tt.stop_times[trip_id]
    ]
    halts = halts or {}
    line = tt.trips[trip_id].route_id

    bps = [(chain[0][3] + delay_s - lead_s, chain[0][0], chain[0][1])]
    t = chain[0][3] + delay_s
    bps.append((t, chain[0][0], chain[0][1]))
    for k in range(len(chain) - 1):
        lat0, lon0, _, dep0 = chain[k]
        lat1, lon1, arr1, dep1 = chain[k + 1]
        travel = arr1 - dep0
        if k in halts:
            off, dur = halts[k]
            frac = off / travel
            hlat = lat0 + (lat1 - lat0) * frac
            hlon = lon0 + (lon1 - lon0) * frac
            bps.append((t + off, hlat, hlon))
            bps.append((t + off + dur, hlat, hlon))
            t = t + travel + dur
        else:
            t = t + travel
        bps.append((t, lat1, lon1))
        t = max(dep1 + delay_s, t)
        bps.append((t, lat1, lon1))
    bps.append((t + tail_s, chain[-1][0], chain[-1][1]))

    records = []
    first = math.ceil(bps[0][0] / cadence_s) * cadence_s
    j = 0
    for epoch in range(first, int(bps[-1][0]) + 1, cadence_s):
        while j + 1 < len(bps) and bps[j + 1][0] <= epoch:
            j += 1
        t0, la0, lo0 = bps[j]
        if j + 1 < len(bps):
            t1, la1, lo1 = bps[j + 1]
            f = (epoch - t0) / (t1 - t0) if t1 > t0 else 0.0
            la, lo = la0 + (la1 - la0) * f, lo0 + (lo1 - lo0) * f
        else:
            la, lo = la0, lo0
        records.append(VehicleLocation(epoch, line, brigade, la, lo))
    return records
