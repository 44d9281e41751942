"""Synthetic city generator.

Produces a complete, mutually consistent input set for the pipeline: a
Manhattan street grid, a planned GTFS feed, per-day vehicle traces with
injected delays and optional mid-route halts, zones with hourly matrices,
weather and pollution series, spatial layers, and a survey whose labels
follow a configurable ground-truth rule evaluated on the same level-of-
service values the fusion stage will later compute.

Everything derives from one seeded RNG in a fixed order, so a given spec
always yields byte-identical files.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
import os
import random
from dataclasses import dataclass

from .env_features import POLLUTION_PARAMS, WEATHER_PARAMS
from .errors import ConfigError, NoRouteError
from .geo import haversine_m
from .gtfs import (
    ALL_DAYS,
    Route,
    ServicePattern,
    Stop,
    Timetable,
    expand_frequency_service,
    write_gtfs,
)
from .router import GraphEdge, ModeChoiceWindow, StreetGraph, TransitNetwork, \
    plan_connections, route_unimodal
from .timeutil import midnight_epoch, preceding_working_day
from .vehicle_flow import VehicleLocation, locations_to_csv

log = logging.getLogger(__name__)

M_PER_DEG_LAT = 6371000.0 * math.pi / 180.0

SURVEY_ANSWERS = ("age", "carAvailable", "drivingLicence")

_WED = dt.date(2023, 5, 3)
_THU = dt.date(2023, 5, 4)


@dataclass(frozen=True)
class CitySpec:
    nx: int = 6                     # grid intersections west-east
    ny: int = 6
    block_m: float = 500.0
    origin: tuple = (52.20, 21.00)  # south-west corner (lat, lon)
    n_lines: int = 3
    headway_s: int = 600
    service_hours: tuple = (6, 18)
    run_s: int = 50                 # drive time per block
    dwell_s: int = 20
    car_speed_ms: float = 7.0       # urban average, keeps transit competitive
    delay_mean_s: float = 60.0
    delay_sd_s: float = 20.0
    halt_prob: float = 0.15         # chance of one mid-route halt per trip
    halt_range_s: tuple = (40.0, 140.0)
    n_respondents: int = 50
    trips_per_respondent: int = 4
    label_noise: float = 0.0
    zone_nx: int = 2
    zone_ny: int = 2
    trip_dates: tuple = (_WED, _THU)
    trace_dates: tuple = (dt.date(2023, 5, 2), _WED)
    # ground-truth mode rule thresholds
    walk_max_m: float = 1200.0
    bike_max_m: float = 2000.0
    pt_ratio: float = 2.5
    seed: int = 0

    def validate(self) -> None:
        if self.nx < 4 or self.ny < 4:
            raise ConfigError("grid needs at least 4x4 intersections")
        if not 1 <= self.n_lines <= self.nx + self.ny:
            raise ConfigError(f"cannot place {self.n_lines} lines on a "
                              f"{self.nx}x{self.ny} grid")
        if self.headway_s <= 0 or self.run_s <= 0 or self.dwell_s < 0:
            raise ConfigError("timetable parameters must be positive")
        lo, hi = self.depart_range_s()
        if hi <= lo:
            raise ConfigError(
                f"service span {self.service_hours} leaves no room to sample "
                f"trip departures")
        if not 0 <= self.label_noise <= 1:
            raise ConfigError(f"label_noise must be in [0, 1], got {self.label_noise}")
        if not 0 < self.walk_max_m < self.bike_max_m:
            raise ConfigError("walk/bike thresholds must be ordered and positive")
        if self.zone_nx < 1 or self.zone_ny < 1:
            raise ConfigError("need at least one zone cell")
        trace_set = set(self.trace_dates)
        for day in self.trip_dates:
            prev = preceding_working_day(day)
            if prev not in trace_set:
                raise ConfigError(
                    f"trip date {day} needs traces on {prev}, but trace_dates "
                    f"cover {sorted(trace_set)}")

    def depart_range_s(self) -> tuple:
        """Seconds-of-day window trips are sampled from: well inside the
        service span so the planned timetable always offers connections."""
        return (int(self.service_hours[0] * 3600 + 1.5 * 3600),
                int(self.service_hours[1] * 3600 - 3 * 3600))


# --- geometry ----------------------------------------------------------------------

def _node_coords(spec: CitySpec, ix: int, iy: int) -> tuple:
    lat0, lon0 = spec.origin
    m_per_deg_lon = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    return (lat0 + iy * spec.block_m / M_PER_DEG_LAT,
            lon0 + ix * spec.block_m / m_per_deg_lon)


def _jitter(spec: CitySpec, point: tuple, rng: random.Random, max_m: float) -> tuple:
    lat0 = spec.origin[0]
    m_per_deg_lon = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    return (point[0] + rng.uniform(-max_m, max_m) / M_PER_DEG_LAT,
            point[1] + rng.uniform(-max_m, max_m) / m_per_deg_lon)


def build_street_graph(spec: CitySpec) -> StreetGraph:
    nodes = {}
    for ix in range(spec.nx):
        for iy in range(spec.ny):
            nodes[f"n{ix}_{iy}"] = _node_coords(spec, ix, iy)
    modes = frozenset({"walk", "cycle", "car"})
    edges = []
    for ix in range(spec.nx):
        for iy in range(spec.ny):
            here = nodes[f"n{ix}_{iy}"]
            if ix + 1 < spec.nx:
                other = nodes[f"n{ix+1}_{iy}"]
                edges.append(GraphEdge(f"n{ix}_{iy}", f"n{ix+1}_{iy}",
                                       haversine_m(*here, *other), modes,
                                       car_speed_ms=spec.car_speed_ms))
            if iy + 1 < spec.ny:
                other = nodes[f"n{ix}_{iy+1}"]
                edges.append(GraphEdge(f"n{ix}_{iy}", f"n{ix}_{iy+1}",
                                       haversine_m(*here, *other), modes,
                                       car_speed_ms=spec.car_speed_ms))
    return StreetGraph(nodes, edges)


def _line_paths(spec: CitySpec) -> list:
    """Alternate horizontal and vertical lines across interior rows/columns.
    Returns [(line_id, kind, [(ix, iy), ...])]."""
    n_h = (spec.n_lines + 1) // 2
    n_v = spec.n_lines // 2
    rows = [round((j + 1) * spec.ny / (n_h + 1)) for j in range(n_h)]
    cols = [round((j + 1) * spec.nx / (n_v + 1)) for j in range(n_v)]
    rows = [min(max(r, 0), spec.ny - 1) for r in rows]
    cols = [min(max(c, 0), spec.nx - 1) for c in cols]
    out = []
    for j in range(spec.n_lines):
        kind = ("bus", "tram")[j % 2]
        if j % 2 == 0:
            row = rows[j // 2]
            path = [(ix, row) for ix in range(spec.nx)]
        else:
            col = cols[j // 2]
            path = [(col, iy) for iy in range(spec.ny)]
        out.append((f"L{j}", kind, path))
    return out


def build_timetable(spec: CitySpec) -> Timetable:
    tt = Timetable()
    tt.services["WK"] = ServicePattern("WK", ALL_DAYS)
    for line_id, kind, path in _line_paths(spec):
        tt.routes[line_id] = Route(line_id, line_id, kind)
        pattern = []
        for k, (ix, iy) in enumerate(path):
            stop_id = f"{line_id}_{k}"
            lat, lon = _node_coords(spec, ix, iy)
            tt.stops[stop_id] = Stop(stop_id, f"{line_id} stop {k}", lat, lon)
            dep = k * (spec.run_s + spec.dwell_s)
            arr = dep - spec.dwell_s if k else 0
            pattern.append((stop_id, arr, dep))
        headways = {h: spec.headway_s
                    for h in range(spec.service_hours[0], spec.service_hours[1])}
        trips, stop_times = expand_frequency_service(line_id, pattern, headways, "WK")
        for trip in trips:
            tt.trips[trip.id] = trip
            tt.stop_times[trip.id] = stop_times[trip.id]
    tt.validate()
    return tt


# --- zones, matrices, sensors, spatial layers ----------------------------------------

def _zone_grid(spec: CitySpec):
    """Rectangular zone cells covering the street grid with a small margin.
    Returns (geojson mapping, centroids {zone_id: (lat, lon)})."""
    lat_lo, lon_lo = _node_coords(spec, 0, 0)
    lat_hi, lon_hi = _node_coords(spec, spec.nx - 1, spec.ny - 1)
    pad_lat = 2 * spec.block_m / M_PER_DEG_LAT
    pad_lon = 2 * spec.block_m / (M_PER_DEG_LAT * math.cos(math.radians(lat_lo)))
    lat_lo, lat_hi = lat_lo - pad_lat, lat_hi + pad_lat
    lon_lo, lon_hi = lon_lo - pad_lon, lon_hi + pad_lon
    features, centroids = [], {}
    zid = 1
    for iy in range(spec.zone_ny):
        for ix in range(spec.zone_nx):
            la0 = lat_lo + iy * (lat_hi - lat_lo) / spec.zone_ny
            la1 = lat_lo + (iy + 1) * (lat_hi - lat_lo) / spec.zone_ny
            lo0 = lon_lo + ix * (lon_hi - lon_lo) / spec.zone_nx
            lo1 = lon_lo + (ix + 1) * (lon_hi - lon_lo) / spec.zone_nx
            ring = [[lo0, la0], [lo1, la0], [lo1, la1], [lo0, la1], [lo0, la0]]
            features.append({"type": "Feature", "properties": {"id": str(zid)},
                             "geometry": {"type": "Polygon", "coordinates": [ring]}})
            centroids[str(zid)] = ((la0 + la1) / 2, (lo0 + lo1) / 2)
            zid += 1
    return {"type": "FeatureCollection", "features": features}, centroids


def _hour_factor(hour: int) -> float:
    return 1.5 if hour in (7, 8, 15, 16, 17) else 1.1


def build_matrix_rows(spec: CitySpec, centroids: dict, rng: random.Random):
    """(hour, o, d, value) rows for the traffic, free-flow and demand
    matrices, all hours, all zone pairs."""
    tr, ntr, td = [], [], []
    ids = sorted(centroids, key=int)
    for h in range(24):
        for o in ids:
            for d in ids:
                if o == d:
                    free = 120.0
                else:
                    (la, lo), (lb, lob) = centroids[o], centroids[d]
                    manhattan = haversine_m(la, lo, lb, lo) + haversine_m(lb, lo, lb, lob)
                    free = manhattan / 11.1 + 60.0
                ntr.append((h, o, d, free))
                tr.append((h, o, d, free * _hour_factor(h)))
                td.append((h, o, d, float(rng.randint(5, 50))))
    return tr, ntr, td


def _matrix_to_csv(rows, path: str) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "o_zone", "d_zone", "value"])
        for hour, o, d, value in rows:
            w.writerow([hour, o, d, repr(value)])


def build_sensor_rows(spec: CitySpec, rng: random.Random) -> list:
    """Hourly samples for two weather and two pollution stations spanning
    every generated date plus a day of slack either side."""
    days = sorted(set(spec.trip_dates) | set(spec.trace_dates))
    t0 = midnight_epoch(days[0]) - 86400
    t1 = midnight_epoch(days[-1]) + 2 * 86400
    sw = _node_coords(spec, 0, 0)
    ne = _node_coords(spec, spec.nx - 1, spec.ny - 1)
    stations = [("W1", sw, WEATHER_PARAMS), ("W2", ne, WEATHER_PARAMS),
                ("P1", sw, POLLUTION_PARAMS), ("P2", ne, POLLUTION_PARAMS)]
    base = {"Temperature": 12.0, "Rainfall6h": 0.4, "Wind": 4.0, "Cloudiness": 4.0,
            "C6H6": 1.5, "O3": 60.0, "CO": 0.4, "NO2": 25.0, "PM25": 18.0, "PM10": 28.0}
    rows = []
    for sid, (lat, lon), params in stations:
        for param in params:
            t = t0
            while t <= t1:
                hour = (t // 3600) % 24
                diurnal = math.sin((hour - 6) / 24 * 2 * math.pi)
                value = base[param] * (1.0 + 0.3 * diurnal) + rng.uniform(-0.1, 0.1) * base[param]
                if param != "Temperature":
                    value = max(0.0, value)
                rows.append((sid, lat, lon, param, t, round(value, 4)))
                t += 3600
    return rows


def _sensor_csv(rows, path: str) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "lat", "lon", "parameter", "epoch", "value"])
        for sid, lat, lon, param, epoch, value in rows:
            w.writerow([sid, repr(lat), repr(lon), param, epoch, repr(value)])


def build_spatial_layers(spec: CitySpec, street: StreetGraph, tt: Timetable,
                         rng: random.Random) -> dict:
    """GeoJSON documents per layer, keyed by layer name."""
    def point(lat, lon, props=None):
        return {"type": "Feature", "properties": props or {},
                "geometry": {"type": "Point", "coordinates": [lon, lat]}}

    roads = [{"type": "Feature", "properties": {},
              "geometry": {"type": "LineString",
                           "coordinates": [[street.nodes[e.u][1], street.nodes[e.u][0]],
                                           [street.nodes[e.v][1], street.nodes[e.v][0]]]}}
             for e in sorted(street.edges, key=lambda e: (e.u, e.v))]

    addresses, population = [], []
    for nid in sorted(street.nodes):
        for _ in range(rng.randint(2, 6)):
            lat, lon = _jitter(spec, street.nodes[nid], rng, 0.4 * spec.block_m)
            addresses.append(point(lat, lon))
        lat, lon = _jitter(spec, street.nodes[nid], rng, 0.3 * spec.block_m)
        population.append(point(lat, lon, {"population": float(rng.randint(40, 400))}))

    green = []
    for _ in range(max(1, (spec.nx * spec.ny) // 8)):
        ix, iy = rng.randrange(spec.nx - 1), rng.randrange(spec.ny - 1)
        la0, lo0 = _node_coords(spec, ix, iy)
        la1, lo1 = _node_coords(spec, ix + 1, iy + 1)
        f = 0.3  # park fills the middle third of its block
        ring = [[lo0 + f * (lo1 - lo0), la0 + f * (la1 - la0)],
                [lo1 - f * (lo1 - lo0), la0 + f * (la1 - la0)],
                [lo1 - f * (lo1 - lo0), la1 - f * (la1 - la0)],
                [lo0 + f * (lo1 - lo0), la1 - f * (la1 - la0)],
                [lo0 + f * (lo1 - lo0), la0 + f * (la1 - la0)]]
        green.append({"type": "Feature", "properties": {},
                      "geometry": {"type": "Polygon", "coordinates": [ring]}})

    stops = []
    for stop_id in sorted(tt.stops):
        stop = tt.stops[stop_id]
        kind = tt.routes[stop_id.rsplit("_", 1)[0]].vehicle_kind
        stops.append(point(stop.lat, stop.lon, {"kind": kind}))

    return {name: {"type": "FeatureCollection", "features": feats}
            for name, feats in (("roads", roads), ("addresses", addresses),
                                ("population", population), ("green", green),
                                ("stops", stops))}


# --- traces -------------------------------------------------------------------------

def _trip_trace(tt: Timetable, trip_id: str, brigade: str, day: dt.date,
                delay_s: float, halts: dict, cadence_s: int = 5,
                lead_s: int = 40, tail_s: int = 40) -> list:
    """Piecewise-linear drive along the trip's stops, shifted by a constant
    delay. A halt pauses mid-edge; the dwell at the next stop absorbs what
    it can, anything longer carries forward."""
    sts = tt.stop_times[trip_id]
    line = tt.trips[trip_id].route_id
    coords = [(tt.stops[st.stop_id].lat, tt.stops[st.stop_id].lon) for st in sts]
    mid = midnight_epoch(day)

    bps = []  # (epoch, lat, lon) breakpoints
    dep0 = mid + sts[0].departure_s + delay_s
    bps.append((dep0 - lead_s, *coords[0]))
    bps.append((dep0, *coords[0]))
    cur = dep0
    for k in range(len(sts) - 1):
        edge_t = sts[k + 1].arrival_s - sts[k].departure_s
        if k in halts:
            frac, dur = halts[k]
            lat = coords[k][0] + (coords[k + 1][0] - coords[k][0]) * frac
            lon = coords[k][1] + (coords[k + 1][1] - coords[k][1]) * frac
            t_halt = cur + edge_t * frac
            bps.append((t_halt, lat, lon))
            bps.append((t_halt + dur, lat, lon))
            arrive = t_halt + dur + edge_t * (1 - frac)
        else:
            arrive = cur + edge_t
        bps.append((arrive, *coords[k + 1]))
        if k < len(sts) - 2:
            cur = max(arrive, mid + sts[k + 1].departure_s + delay_s)
            bps.append((cur, *coords[k + 1]))
    bps.append((bps[-1][0] + tail_s, *coords[-1]))

    locs = []
    t = math.ceil(bps[0][0] / cadence_s) * cadence_s
    seg = 0
    while t <= bps[-1][0]:
        while seg + 1 < len(bps) - 1 and bps[seg + 1][0] <= t:
            seg += 1
        t0, la0, lo0 = bps[seg]
        t1, la1, lo1 = bps[seg + 1]
        f = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
        f = min(max(f, 0.0), 1.0)
        locs.append(VehicleLocation(int(t), line, brigade,
                                    la0 + (la1 - la0) * f, lo0 + (lo1 - lo0) * f))
        t += cadence_s
    return locs


def build_traces(spec: CitySpec, tt: Timetable, rng: random.Random):
    """Per trace date: one vehicle per planned trip with an injected delay
    and, with halt_prob, a single mid-route halt.
    Returns ({date: [VehicleLocation]}, truth mapping)."""
    truth = {"delays": {}, "halts": {}}
    by_date = {}
    for day in spec.trace_dates:
        iso = day.isoformat()
        truth["delays"][iso] = {}
        truth["halts"][iso] = {}
        locs = []
        for trip_id in sorted(tt.trips):
            line = tt.trips[trip_id].route_id
            delay = max(-120.0, rng.gauss(spec.delay_mean_s, spec.delay_sd_s))
            delay = round(delay, 1)
            halts = {}
            if rng.random() < spec.halt_prob and len(tt.stop_times[trip_id]) > 2:
                edge = rng.randrange(len(tt.stop_times[trip_id]) - 1)
                halts[edge] = (rng.uniform(0.25, 0.7),
                               rng.uniform(*spec.halt_range_s))
            brigade = trip_id[len(line) + 1:]
            locs.extend(_trip_trace(tt, trip_id, brigade, day, delay, halts))
            truth["delays"][iso][trip_id] = delay
            truth["halts"][iso][trip_id] = [
                [e, round(h[1], 3)] for e, h in sorted(halts.items())]
        by_date[day] = locs
    return by_date, truth


# --- survey -------------------------------------------------------------------------

def _rule_label(spec: CitySpec, walk_m, car_s, transit_s) -> str:
    if walk_m is not None and walk_m <= spec.walk_max_m:
        return "walk"
    if walk_m is not None and walk_m <= spec.bike_max_m:
        return "bike"
    if transit_s is not None and car_s is not None \
            and transit_s <= spec.pt_ratio * car_s:
        return "pt"
    return "car"


def _sample_endpoints(spec: CitySpec, street: StreetGraph, tt: Timetable,
                      target: str, rng: random.Random):
    """Geometry heuristics that steer the LOS rule toward the target class.
    The label still comes from the rule itself."""
    nodes = sorted(street.nodes)
    stops = sorted(tt.stops)

    def near_node():
        return _jitter(spec, street.nodes[rng.choice(nodes)], rng, 150.0)

    if target == "walk":
        nid = rng.choice(nodes)
        o = _jitter(spec, street.nodes[nid], rng, 120.0)
        d = _jitter(spec, street.nodes[nid], rng, 0.6 * spec.walk_max_m / 2)
        return o, d
    if target == "bike":
        ix, iy = rng.randrange(spec.nx - 3), rng.randrange(spec.ny)
        o = _jitter(spec, _node_coords(spec, ix, iy), rng, 120.0)
        d = _jitter(spec, _node_coords(spec, ix + 3, iy), rng, 120.0)
        return o, d
    if target == "pt":
        line_id, _, path = rng.choice(_line_paths(spec))
        # span at least 4 blocks so walking exceeds the cycling threshold
        jump = min(4, len(path) - 1)
        a = rng.randrange(len(path) - jump)
        b = rng.randrange(a + jump, len(path))
        o = _jitter(spec, (tt.stops[f"{line_id}_{a}"].lat,
                           tt.stops[f"{line_id}_{a}"].lon), rng, 150.0)
        d = _jitter(spec, (tt.stops[f"{line_id}_{b}"].lat,
                           tt.stops[f"{line_id}_{b}"].lon), rng, 150.0)
        return o, d
    # car: a long diagonal, endpoints kept away from stops when possible
    for _ in range(40):
        o, d = near_node(), near_node()
        if haversine_m(*o, *d) < 5 * spec.block_m:
            continue
        min_stop = min(min(haversine_m(*o, tt.stops[s].lat, tt.stops[s].lon)
                           for s in stops),
                       min(haversine_m(*d, tt.stops[s].lat, tt.stops[s].lon)
                           for s in stops))
        if min_stop > 1.2 * spec.block_m:
            return o, d
    return near_node(), near_node()


def build_survey(spec: CitySpec, street: StreetGraph, tt: Timetable,
                 rng: random.Random):
    """Respondent rows plus the ground-truth labels actually applied
    (after noise). Returns (header, rows, truth labels, class counts)."""
    network = TransitNetwork(tt, street)
    window = ModeChoiceWindow(300, 600)
    targets = ("walk", "bike", "pt", "car")
    labels_truth = {}
    counts = {}
    rows = []
    for r in range(spec.n_respondents):
        rid = f"r{r:03d}"
        home = _jitter(spec, street.nodes[sorted(street.nodes)[
            rng.randrange(len(street.nodes))]], rng, 300.0)
        answers = [str(rng.randint(18, 79)),
                   rng.choice(["true", "false"]),
                   rng.choice(["true", "false"])]
        cells = [rid, repr(home[0]), repr(home[1])] + answers
        for k in range(spec.trips_per_respondent):
            target = targets[(r + k) % len(targets)]
            o, d = _sample_endpoints(spec, street, tt, target, rng)
            # last trip of the block lands on the later date: that day
            # becomes the chronological holdout
            day = spec.trip_dates[-1] if k == spec.trips_per_respondent - 1 \
                else spec.trip_dates[(r + k) % max(1, len(spec.trip_dates) - 1)]
            t_dep = midnight_epoch(day) + rng.randint(*spec.depart_range_s())

            walk_m = car_s = transit_s = None
            try:
                walk_m = route_unimodal(street, o, d, "walk").distance_m
            except NoRouteError:
                pass
            try:
                car_s = route_unimodal(street, o, d, "car").duration_s
            except NoRouteError:
                pass
            conns = plan_connections(network, o, d, t_dep, window)
            if conns:
                transit_s = min(c.total_duration_s for c in conns)

            label = _rule_label(spec, walk_m, car_s, transit_s)
            if spec.label_noise > 0 and rng.random() < spec.label_noise:
                label = rng.choice([m for m in targets if m != label])
            labels_truth[f"{rid}:{k + 1}"] = label
            counts[label] = counts.get(label, 0) + 1
            cells += [repr(o[0]), repr(o[1]), repr(d[0]), repr(d[1]),
                      str(t_dep), "", label]
        rows.append(cells)

    header = ["respondent_id", "home_lat", "home_lon", *SURVEY_ANSWERS]
    for k in range(1, spec.trips_per_respondent + 1):
        header += [f"trip{k}_{f}" for f in
                   ("o_lat", "o_lon", "d_lat", "d_lon", "depart", "arrive", "mode")]
    return header, rows, labels_truth, counts


# --- top-level generator --------------------------------------------------------------

def _write_json(path: str, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def generate(spec: CitySpec, out_dir: str) -> dict:
    """Write the full fixture set under out_dir. Returns summary stats."""
    spec.validate()
    rng = random.Random(spec.seed)
    os.makedirs(out_dir, exist_ok=True)

    street = build_street_graph(spec)
    tt = build_timetable(spec)

    gtfs_dir = os.path.join(out_dir, "gtfs")
    os.makedirs(gtfs_dir, exist_ok=True)
    write_gtfs(tt, gtfs_dir)
    street.to_csv(os.path.join(out_dir, "street_nodes.csv"),
                  os.path.join(out_dir, "street_edges.csv"))

    zones_doc, centroids = _zone_grid(spec)
    _write_json(os.path.join(out_dir, "zones.geojson"), zones_doc)
    tr_rows, ntr_rows, td_rows = build_matrix_rows(spec, centroids, rng)
    mat_dir = os.path.join(out_dir, "matrices")
    os.makedirs(mat_dir, exist_ok=True)
    _matrix_to_csv(tr_rows, os.path.join(mat_dir, "ttbc_traffic.csv"))
    _matrix_to_csv(ntr_rows, os.path.join(mat_dir, "ttbc_freeflow.csv"))
    _matrix_to_csv(td_rows, os.path.join(mat_dir, "td_car.csv"))

    _sensor_csv(build_sensor_rows(spec, rng), os.path.join(out_dir, "sensors.csv"))

    spatial_dir = os.path.join(out_dir, "spatial")
    os.makedirs(spatial_dir, exist_ok=True)
    for name, doc in build_spatial_layers(spec, street, tt, rng).items():
        _write_json(os.path.join(spatial_dir, f"{name}.geojson"), doc)

    traces_dir = os.path.join(out_dir, "traces")
    os.makedirs(traces_dir, exist_ok=True)
    by_date, truth = build_traces(spec, tt, rng)
    n_trace_rows = 0
    for day, locs in sorted(by_date.items()):
        locations_to_csv(os.path.join(traces_dir, f"{day.isoformat()}.csv"), locs)
        n_trace_rows += len(locs)

    header, rows, labels, counts = build_survey(spec, street, tt, rng)
    import csv
    with open(os.path.join(out_dir, "survey.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)

    truth["labels"] = labels
    truth["class_counts"] = counts
    truth["rule"] = {"walk_max_m": spec.walk_max_m, "bike_max_m": spec.bike_max_m,
                     "pt_ratio": spec.pt_ratio, "label_noise": spec.label_noise}
    _write_json(os.path.join(out_dir, "truth.json"), truth)

    config = {
        "seed": spec.seed,
        "paths": {
            "gtfs": "gtfs",
            "street_nodes": "street_nodes.csv",
            "street_edges": "street_edges.csv",
            "zones": "zones.geojson",
            "ttbc_traffic": "matrices/ttbc_traffic.csv",
            "ttbc_freeflow": "matrices/ttbc_freeflow.csv",
            "td_car": "matrices/td_car.csv",
            "sensors": "sensors.csv",
            "spatial": "spatial",
            "survey": "survey.csv",
            "traces": "traces",
            "segments": "segments",
            "real_gtfs": "real_gtfs",
            "out": "out",
        },
        "window_before_s": 300,
        "window_after_s": 600,
        "built_env_radius_m": 500.0,
        "max_connections": 5,
        "pricing": None,
        "survey_columns": list(SURVEY_ANSWERS),
        "scenarios": ["S_ONLY", "S_P_LOS", "S_P_LOS_TR", "S_R_LOS",
                      "S_R_LOS_TR", "S_BE", "S_ENV", "S_ALL"],
        "methods": ["naive_bayes", "decision_tree", "random_forest", "knn"],
        "k_folds": 10,
        "alpha": 0.2,
        "importance_repeats": 3,
        "grids": None,
    }
    _write_json(os.path.join(out_dir, "config.json"), config)

    stats = {
        "stops": len(tt.stops),
        "trips": len(tt.trips),
        "trace_rows": n_trace_rows,
        "respondents": spec.n_respondents,
        "survey_trips": spec.n_respondents * spec.trips_per_respondent,
        "class_counts": counts,
    }
    log.info("synthetic city written to %s: %s", out_dir, stats)
    return stats
