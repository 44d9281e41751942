"""Street routing and timetable journey planning.

Unimodal estimates (walk / cycle / car free-flow) come from a Dijkstra over
the street graph. Transit connections are enumerated with round-based
earliest-arrival search (one round per vehicle boarded) restricted to the
mode-choice window around the reported departure, then Pareto-filtered on
(arrival, transfers).

The window rule: a connection's first departure is the first vehicle's
departure minus the access walk duration (the traveller leaves as late as
possible, no initial wait), and that instant must lie in [t-delta_s,
t+delta_f]. Catching a later vehicle by waiting at the first stop is a
different connection and must satisfy the rule itself.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import heapq
import json
import logging
import math
import os
from dataclasses import dataclass, field

from .errors import IoError, NoRouteError
from .geo import haversine_m
from .gtfs import Timetable
from .timeutil import epoch_date, midnight_epoch

log = logging.getLogger(__name__)

DEFAULT_SPEEDS = {"walk": 1.25, "cycle": 4.0, "car": 11.1}

BBOX_MARGIN_M = 2000.0


@dataclass(frozen=True)
class GraphEdge:
    u: str
    v: str
    length_m: float
    modes: frozenset
    elevation_gain_m: float = 0.0
    car_speed_ms: float | None = None


@dataclass(frozen=True)
class RouteEstimate:
    duration_s: float
    distance_m: float
    elevation_gain_m: float
    access_walk_m: float = 0.0


class StreetGraph:
    """Undirected street graph with per-edge mode permissions."""

    def __init__(self, nodes: dict, edges: list):
        self.nodes = nodes  # id -> (lat, lon)
        self.edges = edges
        self.adj: dict = {n: [] for n in nodes}
        for e in edges:
            if e.length_m <= 0:
                raise ValueError(f"edge {e.u}-{e.v} has non-positive length")
            self.adj[e.u].append((e.v, e))
            self.adj[e.v].append((e.u, e))
        lats = [p[0] for p in nodes.values()]
        lons = [p[1] for p in nodes.values()]
        self.bbox = (min(lats), min(lons), max(lats), max(lons)) if nodes else None

    @classmethod
    def from_csv(cls, nodes_path: str, edges_path: str) -> "StreetGraph":
        try:
            nodes = {}
            with open(nodes_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    nodes[row["node_id"]] = (float(row["lat"]), float(row["lon"]))
            edges = []
            with open(edges_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    modes = frozenset(row["modes"].split("|"))
                    car_speed = float(row["car_speed_ms"]) if row.get("car_speed_ms") else None
                    elev = float(row["elevation_gain_m"]) if row.get("elevation_gain_m") else 0.0
                    edges.append(GraphEdge(row["u"], row["v"], float(row["length_m"]), modes, elev, car_speed))
        except OSError as exc:
            raise IoError(str(exc)) from exc
        return cls(nodes, edges)

    def to_csv(self, nodes_path: str, edges_path: str) -> None:
        try:
            with open(nodes_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["node_id", "lat", "lon"])
                for nid in sorted(self.nodes):
                    lat, lon = self.nodes[nid]
                    w.writerow([nid, repr(lat), repr(lon)])
            with open(edges_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["u", "v", "length_m", "modes", "elevation_gain_m", "car_speed_ms"])
                for e in sorted(self.edges, key=lambda e: (e.u, e.v)):
                    w.writerow([e.u, e.v, repr(e.length_m), "|".join(sorted(e.modes)),
                                repr(e.elevation_gain_m),
                                "" if e.car_speed_ms is None else repr(e.car_speed_ms)])
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def from_geojson(cls, path: str) -> "StreetGraph":
        """Line layer import: every vertex becomes a node, consecutive
        vertices an edge; `modes` property defaults to all three."""
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise IoError(str(exc)) from exc
        nodes: dict = {}
        edges = []

        def node_for(lon, lat):
            key = f"{lat:.7f},{lon:.7f}"
            nodes[key] = (lat, lon)
            return key

        for feat in doc.get("features", []):
            geom = feat.get("geometry") or {}
            if geom.get("type") != "LineString":
                continue
            props = feat.get("properties") or {}
            modes = frozenset((props.get("modes") or "walk|cycle|car").split("|"))
            coords = geom["coordinates"]
            for a, b in zip(coords, coords[1:]):
                na, nb = node_for(*a), node_for(*b)
                length = haversine_m(nodes[na][0], nodes[na][1], nodes[nb][0], nodes[nb][1])
                if length > 0:
                    edges.append(GraphEdge(na, nb, length, modes))
        return cls(nodes, edges)

    def in_bbox(self, lat: float, lon: float, margin_m: float = BBOX_MARGIN_M) -> bool:
        if self.bbox is None:
            return False
        dlat = math.degrees(margin_m / 6_371_000.0)
        dlon = dlat / max(0.1, math.cos(math.radians((self.bbox[0] + self.bbox[2]) / 2)))
        return (self.bbox[0] - dlat <= lat <= self.bbox[2] + dlat
                and self.bbox[1] - dlon <= lon <= self.bbox[3] + dlon)

    def nearest_node(self, lat: float, lon: float, mode: str | None = None) -> str:
        best, best_d = None, float("inf")
        for nid in sorted(self.nodes):
            if mode is not None and not any(mode in e.modes for _, e in self.adj[nid]):
                continue
            d = haversine_m(lat, lon, *self.nodes[nid])
            if d < best_d:
                best, best_d = nid, d
        if best is None:
            raise NoRouteError(f"no node permits mode {mode}")
        return best

    def _edge_duration(self, edge: GraphEdge, mode: str, speeds: dict) -> float:
        if mode == "car" and edge.car_speed_ms:
            return edge.length_m / edge.car_speed_ms
        return edge.length_m / speeds[mode]

    def shortest_path(self, src: str, dst: str, mode: str, speeds: dict) -> tuple:
        """Min-duration path; returns (duration_s, distance_m, elevation_m)."""
        dist = {src: 0.0}
        meta = {src: (0.0, 0.0)}
        pq = [(0.0, src)]
        done = set()
        while pq:
            d, u = heapq.heappop(pq)
            if u in done:
                continue
            done.add(u)
            if u == dst:
                return d, meta[u][0], meta[u][1]
            for v, e in self.adj[u]:
                if mode not in e.modes or v in done:
                    continue
                nd = d + self._edge_duration(e, mode, speeds)
                if nd < dist.get(v, float("inf")):
                    dist[v] = nd
                    meta[v] = (meta[u][0] + e.length_m, meta[u][1] + e.elevation_gain_m)
                    heapq.heappush(pq, (nd, v))
        raise NoRouteError(f"{src} -> {dst} unreachable by {mode}")

    def walk_distances_from(self, src: str, cutoff_m: float | None = None) -> dict:
        """Distance-minimizing walk metric to every reachable node."""
        dist = {src: 0.0}
        pq = [(0.0, src)]
        done = set()
        while pq:
            d, u = heapq.heappop(pq)
            if u in done:
                continue
            done.add(u)
            if cutoff_m is not None and d > cutoff_m:
                continue
            for v, e in self.adj[u]:
                if "walk" not in e.modes or v in done:
                    continue
                nd = d + e.length_m
                if nd < dist.get(v, float("inf")):
                    dist[v] = nd
                    heapq.heappush(pq, (nd, v))
        return dist


def route_unimodal(graph: StreetGraph, o: tuple, d: tuple, mode: str, speeds: dict | None = None,
                   max_snap_m: float = 1000.0) -> RouteEstimate:
    """Shortest-duration route for walk / cycle / car.

    For walk and cycle the connectors from the raw points to the snapped
    nodes are covered at the mode speed and counted in distance and
    duration. For car the connectors are walking to and from the parked
    vehicle: reported as access_walk_m, excluded from drive duration.
    A point further than max_snap_m from any node permitting the mode is
    unroutable.
    """
    if mode not in DEFAULT_SPEEDS:
        raise ValueError(f"unknown mode {mode}")
    speeds = dict(DEFAULT_SPEEDS, **(speeds or {}))
    if o == d:
        return RouteEstimate(0.0, 0.0, 0.0, 0.0)
    if not (graph.in_bbox(*o) and graph.in_bbox(*d)):
        raise NoRouteError("point outside street graph coverage")
    src = graph.nearest_node(o[0], o[1], mode)
    dst = graph.nearest_node(d[0], d[1], mode)
    snap_o = haversine_m(o[0], o[1], *graph.nodes[src])
    snap_d = haversine_m(d[0], d[1], *graph.nodes[dst])
    if snap_o > max_snap_m or snap_d > max_snap_m:
        raise NoRouteError(f"no {mode} street within {max_snap_m:.0f} m")
    access = snap_o + snap_d
    if src == dst:
        duration, distance, elev = 0.0, 0.0, 0.0
    else:
        duration, distance, elev = graph.shortest_path(src, dst, mode, speeds)
    if mode == "car":
        return RouteEstimate(duration, distance, elev, access)
    return RouteEstimate(duration + access / speeds[mode], distance + access, elev, access)


# --- transit ---------------------------------------------------------------

@dataclass(frozen=True)
class ModeChoiceWindow:
    delta_s: int = 300
    delta_f: int = 600

    def __post_init__(self):
        if self.delta_s < 0 or self.delta_f < 0 or self.delta_s + self.delta_f <= 0:
            raise ValueError("window must be nonnegative with positive extent")

    def bounds(self, t: float) -> tuple:
        return t - self.delta_s, t + self.delta_f


@dataclass(frozen=True)
class Leg:
    mode: str                 # walk or a vehicle kind
    depart: float
    arrive: float
    distance_m: float
    line_id: str | None = None
    board_stop: str | None = None
    alight_stop: str | None = None
    via_stops: tuple = ()     # traversed stop ids including endpoints


@dataclass(frozen=True)
class Connection:
    legs: tuple
    depart_epoch: float
    arrive_epoch: float
    total_duration_s: float
    total_distance_m: float
    walk_distance_m: float
    wait_time_s: float
    transfers: int
    mode_share: dict = field(hash=False)


class _Pattern:
    """Trips of one route sharing an exact stop sequence."""

    __slots__ = ("route_id", "stop_ids", "trips", "kind", "leg_dist")

    def __init__(self, route_id, stop_ids, kind, leg_dist):
        self.route_id = route_id
        self.stop_ids = stop_ids
        self.kind = kind
        self.leg_dist = leg_dist  # cumulative metres along the stop chain
        self.trips = []           # (trip_id, service_id, deps tuple, arrs tuple)


class TransitNetwork:
    """Immutable query structure over one timetable (plus optional street
    graph for access / transfer walking; great-circle otherwise)."""

    def __init__(self, timetable: Timetable, street_graph: StreetGraph | None = None, *,
                 walk_speed: float = 1.25, max_access_walk_m: float = 1500.0,
                 transfer_walk_max_m: float = 500.0, transfer_slack_s: float = 0.0,
                 max_transfers: int = 7):
        self.tt = timetable
        self.graph = street_graph
        self.walk_speed = walk_speed
        self.max_access_walk_m = max_access_walk_m
        self.transfer_slack_s = transfer_slack_s
        self.max_transfers = max_transfers
        self.stop_ids = sorted(timetable.stops)
        self.coords = {s: (timetable.stops[s].lat, timetable.stops[s].lon) for s in self.stop_ids}

        self.patterns: list = []
        by_key: dict = {}
        for trip_id in sorted(timetable.stop_times):
            sts = timetable.stop_times[trip_id]
            if len(sts) < 2:
                continue
            trip = timetable.trips[trip_id]
            stop_seq = tuple(st.stop_id for st in sts)
            key = (trip.route_id, stop_seq)
            pat = by_key.get(key)
            if pat is None:
                kind = timetable.routes[trip.route_id].vehicle_kind
                cum = [0.0]
                for a, b in zip(stop_seq, stop_seq[1:]):
                    cum.append(cum[-1] + haversine_m(*self.coords[a], *self.coords[b]))
                pat = _Pattern(trip.route_id, stop_seq, kind, tuple(cum))
                by_key[key] = pat
                self.patterns.append(pat)
            pat.trips.append((trip_id, trip.service_id,
                              tuple(st.departure_s for st in sts),
                              tuple(st.arrival_s for st in sts)))
        self._fifo = True
        for pat in self.patterns:
            pat.trips.sort(key=lambda t: (t[2][0], t[0]))
            for a, b in zip(pat.trips, pat.trips[1:]):
                if any(x > y for x, y in zip(a[2], b[2])):
                    self._fifo = False
        if not self._fifo:
            log.info("overtaking detected; boarding search will enumerate all candidate trips")

        self.stops_at: dict = {s: [] for s in self.stop_ids}
        for pi, pat in enumerate(self.patterns):
            for pos, s in enumerate(pat.stop_ids):
                self.stops_at[s].append((pi, pos))

        self._stop_node = {}
        if self.graph is not None:
            for s in self.stop_ids:
                node = self.graph.nearest_node(*self.coords[s], "walk")
                self._stop_node[s] = (node, haversine_m(*self.coords[s], *self.graph.nodes[node]))

        self.transfers: dict = {s: [] for s in self.stop_ids}
        for s in self.stop_ids:
            for w, dist_m in self._walk_table(self.coords[s], transfer_walk_max_m, from_stop=s).items():
                if w != s:
                    self.transfers[s].append((w, dist_m))

        self._day_cache: dict = {}

    def _walk_table(self, point: tuple, cutoff_m: float, from_stop: str | None = None) -> dict:
        """Walk distance from a point (or a stop) to every stop within cutoff."""
        out = {}
        if self.graph is None:
            for s in self.stop_ids:
                d = haversine_m(point[0], point[1], *self.coords[s])
                if d <= cutoff_m:
                    out[s] = d
            return out
        if from_stop is not None:
            node, off = self._stop_node[from_stop]
        else:
            node = self.graph.nearest_node(point[0], point[1], "walk")
            off = haversine_m(point[0], point[1], *self.graph.nodes[node])
        dists = self.graph.walk_distances_from(node, cutoff_m)
        for s in self.stop_ids:
            snode, soff = self._stop_node[s]
            base = dists.get(snode)
            if base is None:
                continue
            d = off + base + soff
            if d <= cutoff_m:
                out[s] = d
        return out

    def access_table(self, lat: float, lon: float) -> dict:
        """stop_id -> walk metres from the point, within the access bound."""
        return self._walk_table((lat, lon), self.max_access_walk_m)

    def _events_for_day(self, day: dt.date):
        """Per pattern: absolute-epoch departure/arrival arrays for trips
        active on `day`, sorted by first departure."""
        cached = self._day_cache.get(day)
        if cached is not None:
            return cached
        m = midnight_epoch(day)
        per_pattern = []
        for pat in self.patterns:
            rows = []
            for trip_id, service_id, deps, arrs in pat.trips:
                svc = self.tt.services.get(service_id)
                if svc is not None and not svc.active_on(day):
                    continue
                rows.append((trip_id, tuple(m + d for d in deps), tuple(m + a for a in arrs)))
            per_pattern.append(rows)
        self._day_cache[day] = per_pattern
        return per_pattern

    def _candidate_days(self, lb: float, ub: float) -> list:
        d0 = epoch_date(lb) - dt.timedelta(days=1)
        days = [d0]
        while days[-1] < epoch_date(ub):
            days.append(days[-1] + dt.timedelta(days=1))
        return days


def plan_connections(network: TransitNetwork, o: tuple, d: tuple, depart_epoch: float,
                     window: ModeChoiceWindow, max_results: int = 5) -> list:
    """Pareto set of transit connections for the mode-choice window.

    Every returned connection has at least one vehicle leg; the pure-walk
    alternative is handled by route_unimodal. Empty list when nothing is
    feasible.
    """
    lb, ub = window.bounds(depart_epoch)
    access = network.access_table(o[0], o[1])
    egress = network.access_table(d[0], d[1])
    if not access or not egress:
        return []
    speed = network.walk_speed

    days = network._candidate_days(lb, ub)
    # pattern events for all candidate service days merged, kept sorted
    events = []  # per pattern index: list of (trip_key, deps, arrs)
    for pi in range(len(network.patterns)):
        events.append([])
    for day in days:
        per = network._events_for_day(day)
        for pi, rows in enumerate(per):
            events[pi].extend(rows)
    dep_at = {}  # (pattern, pos) -> sorted [(dep_abs, row_idx)]
    for pi, rows in enumerate(events):
        if not rows:
            continue
        rows.sort(key=lambda r: r[1][0])
        for pos in range(len(network.patterns[pi].stop_ids)):
            dep_at[(pi, pos)] = sorted((rows[ri][1][pos], ri) for ri in range(len(rows)))

    best = {}      # stop -> best arrival over all rounds (strict pruning)
    rounds = [{}]  # rounds[k][stop] = label dict, k = vehicles used

    def ride(pi, ri, pos, labels, from_stop, walk_m, board_dep):
        pat = network.patterns[pi]
        trip_id, _deps, arrs = events[pi][ri]
        for j in range(pos + 1, len(pat.stop_ids)):
            s = pat.stop_ids[j]
            arr = arrs[j]
            if arr < best.get(s, float("inf")):
                best[s] = arr
                labels[s] = {
                    "arr": arr, "pattern": pi, "trip": trip_id,
                    "board_pos": pos, "alight_pos": j, "board_dep": board_dep,
                    "from_stop": from_stop, "walk_m": walk_m,
                }

    # round 1: feasible first boardings
    labels1: dict = {}
    for s in sorted(access):
        a_time = access[s] / speed
        for pi, pos in network.stops_at[s]:
            lst = dep_at.get((pi, pos))
            if not lst:
                continue
            i = bisect.bisect_left(lst, (lb + a_time, -1))
            candidates = []
            while i < len(lst) and lst[i][0] <= ub + a_time:
                candidates.append(lst[i])
                i += 1
            if not candidates:
                continue
            if network._fifo:
                candidates = candidates[:1]
            for dep_abs, ri in candidates:
                ride(pi, ri, pos, labels1, None, access[s], dep_abs)
    rounds.append(labels1)
    marked = sorted(labels1)

    k = 1
    while marked and k < network.max_transfers + 1:
        k += 1
        labels: dict = {}
        for u in marked:
            arr_u = rounds[k - 1][u]["arr"]
            foot = [(u, 0.0)] + network.transfers[u]
            for w, walk_m in foot:
                ready = arr_u + walk_m / speed + network.transfer_slack_s
                for pi, pos in network.stops_at[w]:
                    lst = dep_at.get((pi, pos))
                    if not lst:
                        continue
                    i = bisect.bisect_left(lst, (ready, -1))
                    if i >= len(lst):
                        continue
                    cands = [lst[i]] if network._fifo else lst[i:]
                    for dep_abs, ri in cands:
                        ride(pi, ri, pos, labels, u, walk_m, dep_abs)
        rounds.append(labels)
        marked = sorted(labels)

    # destination arrivals per round, then Pareto scan over transfers
    results = []
    best_so_far = float("inf")
    for k in range(1, len(rounds)):
        cand = None
        for s in sorted(rounds[k]):
            if s not in egress:
                continue
            dest_arr = rounds[k][s]["arr"] + egress[s] / speed
            if cand is None or dest_arr < cand[0]:
                cand = (dest_arr, s)
        if cand is None:
            continue
        if cand[0] < best_so_far:
            best_so_far = cand[0]
            results.append(_build_connection(network, rounds, k, cand[1], egress[cand[1]], speed))
    results.sort(key=lambda c: (c.arrive_epoch, c.transfers))
    return results[:max_results]


def _build_connection(network: TransitNetwork, rounds, k, final_stop, egress_m, speed) -> Connection:
    chain = []
    stop = final_stop
    for kk in range(k, 0, -1):
        lab = rounds[kk][stop]
        chain.append(lab)
        stop = lab["from_stop"]
    chain.reverse()

    legs = []
    wait = 0.0
    walk_total = 0.0
    first = chain[0]
    t0 = first["board_dep"] - first["walk_m"] / speed
    if first["walk_m"] > 0:
        pat = network.patterns[first["pattern"]]
        legs.append(Leg("walk", t0, first["board_dep"], first["walk_m"],
                        alight_stop=pat.stop_ids[first["board_pos"]]))
        walk_total += first["walk_m"]

    prev_arr = None
    prev_stop = None
    for idx, lab in enumerate(chain):
        pat = network.patterns[lab["pattern"]]
        board = pat.stop_ids[lab["board_pos"]]
        alight = pat.stop_ids[lab["alight_pos"]]
        if idx > 0:
            walk_m = lab["walk_m"]
            walk_t = walk_m / speed
            if walk_m > 0:
                legs.append(Leg("walk", prev_arr, prev_arr + walk_t, walk_m,
                                board_stop=prev_stop, alight_stop=board))
                walk_total += walk_m
            wait += lab["board_dep"] - (prev_arr + walk_t)
        dist = pat.leg_dist[lab["alight_pos"]] - pat.leg_dist[lab["board_pos"]]
        legs.append(Leg(pat.kind, lab["board_dep"], lab["arr"], dist, line_id=pat.route_id,
                        board_stop=board, alight_stop=alight,
                        via_stops=pat.stop_ids[lab["board_pos"]:lab["alight_pos"] + 1]))
        prev_arr = lab["arr"]
        prev_stop = alight

    arrive = prev_arr
    if egress_m > 0:
        legs.append(Leg("walk", prev_arr, prev_arr + egress_m / speed, egress_m, board_stop=prev_stop))
        walk_total += egress_m
        arrive = prev_arr + egress_m / speed

    in_vehicle = {}
    total_veh = 0.0
    veh_legs = 0
    dist_total = 0.0
    for leg in legs:
        dist_total += leg.distance_m
        if leg.mode != "walk":
            veh_legs += 1
            dur = leg.arrive - leg.depart
            in_vehicle[leg.mode] = in_vehicle.get(leg.mode, 0.0) + dur
            total_veh += dur
    share = {m: (v / total_veh if total_veh > 0 else 0.0) for m, v in sorted(in_vehicle.items())}
    return Connection(
        legs=tuple(legs),
        depart_epoch=t0,
        arrive_epoch=arrive,
        total_duration_s=arrive - t0,
        total_distance_m=dist_total,
        walk_distance_m=walk_total,
        wait_time_s=wait,
        transfers=veh_legs - 1,
        mode_share=share,
    )


# --- LOS aggregation -------------------------------------------------------

LOS_SENTINEL = -1.0

_QUANTITIES = ("Duration", "Distance", "Speed", "WalkDistance", "WaitTime", "Transfers")
_SHARE_KINDS = (("bus", "Bus"), ("tram", "Tram"), ("metro", "Subway"), ("rail", "Rail"))

DEFAULT_PRICING = {1: 1.0, 2: 2.0, 3: 3.0, 4: 4.0}

# fastest-connection duration tiers, minutes
_TIER_BOUNDS = (20.0, 75.0, 90.0)


def cost_tier(duration_s: float) -> int:
    minutes = duration_s / 60.0
    if minutes < _TIER_BOUNDS[0]:
        return 1
    if minutes <= _TIER_BOUNDS[1]:
        return 2
    if minutes <= _TIER_BOUNDS[2]:
        return 3
    return 4


def aggregate_pt_los(connections: list, direct_walk_distance_m: float,
                     pricing: dict | None = None, real: bool = False) -> dict:
    """min/avg/max statistics over a connection set, plus vehicle-kind
    shares and the fare tier of the fastest connection.

    Empty set: every numeric field -1, minCost 0, hasTransit 0.
    """
    suffix = "_TRANSIT_REAL" if real else "_TRANSIT"
    pricing = pricing or DEFAULT_PRICING
    out: dict = {}
    if not connections:
        for q in _QUANTITIES:
            for stat in ("min", "avg", "max"):
                out[f"{stat}{q}{suffix}"] = LOS_SENTINEL
        for _, label in _SHARE_KINDS:
            out[f"min{label}Share{suffix}"] = LOS_SENTINEL
            out[f"max{label}Share{suffix}"] = LOS_SENTINEL
        out[f"minCost{suffix}"] = 0.0
        out[f"hasTransit{suffix}"] = 0
        return out

    values = {q: [] for q in _QUANTITIES}
    for c in connections:
        values["Duration"].append(c.total_duration_s)
        values["Distance"].append(c.total_distance_m)
        values["Speed"].append(c.total_distance_m / c.total_duration_s if c.total_duration_s > 0 else 0.0)
        values["WalkDistance"].append(c.walk_distance_m)
        values["WaitTime"].append(c.wait_time_s)
        values["Transfers"].append(float(c.transfers))
    for q in _QUANTITIES:
        vs = values[q]
        out[f"min{q}{suffix}"] = min(vs)
        out[f"avg{q}{suffix}"] = sum(vs) / len(vs)
        out[f"max{q}{suffix}"] = max(vs)
    for kind, label in _SHARE_KINDS:
        shares = [c.mode_share.get(kind, 0.0) for c in connections]
        out[f"min{label}Share{suffix}"] = min(shares)
        out[f"max{label}Share{suffix}"] = max(shares)

    if any(c.walk_distance_m < direct_walk_distance_m for c in connections):
        fastest = min(connections, key=lambda c: c.total_duration_s)
        out[f"minCost{suffix}"] = float(pricing[cost_tier(fastest.total_duration_s)])
    else:
        out[f"minCost{suffix}"] = 0.0
    out[f"hasTransit{suffix}"] = 1
    return out
