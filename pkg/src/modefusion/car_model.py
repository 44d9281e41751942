"""Zone geometry, travel-time matrices, and car-side trip features.

The city area is a set of polygonal zones. Hourly zone-to-zone matrices
(travel times between city bins under traffic / free flow, trip arrivals
by car / transit) drive two features: trip duration scaled into traffic
conditions, and parking difficulty at the destination.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

from .errors import ConfigError, DegenerateRatioError, IoError, OutOfAreaError, UnknownZoneError
from .geo import point_in_ring

log = logging.getLogger(__name__)

PARKING_METHODS = ("own_zone", "neighborhood", "rank")
MATRIX_KINDS = ("TTBC_traffic", "TTBC_freeflow", "TD_car", "TD_pt")


def _id_key(zone_id: str):
    # numeric-aware ordering so zone "9" sorts before "10"
    return (0, int(zone_id), "") if zone_id.isdigit() else (1, 0, zone_id)


@dataclass(frozen=True)
class Zone:
    id: str
    ring: tuple  # ((lat, lon), ...) closed implicitly

    def bbox(self):
        lats = [p[0] for p in self.ring]
        lons = [p[1] for p in self.ring]
        return min(lats), min(lons), max(lats), max(lons)


def _segments_overlap(p1, p2, q1, q2) -> float:
    """Length (in coordinate units) of the collinear overlap of two segments."""
    dx, dy = p2[0] - p1[0], p2[1] - p1[1]
    norm2 = dx * dx + dy * dy
    if norm2 == 0.0:
        return 0.0
    tol = 1e-9 * norm2
    for q in (q1, q2):
        cross = dx * (q[1] - p1[1]) - dy * (q[0] - p1[0])
        if abs(cross) > tol:
            return 0.0
    t1 = ((q1[0] - p1[0]) * dx + (q1[1] - p1[1]) * dy) / norm2
    t2 = ((q2[0] - p1[0]) * dx + (q2[1] - p1[1]) * dy) / norm2
    lo, hi = max(0.0, min(t1, t2)), min(1.0, max(t1, t2))
    return max(0.0, hi - lo) * norm2 ** 0.5


class ZoneSet:
    """Polygonal city zones with precomputed boundary adjacency."""

    def __init__(self, zones):
        self.zones: dict = {}
        for z in zones:
            if z.id in self.zones:
                raise ConfigError(f"duplicate zone id {z.id}")
            self.zones[z.id] = z
        self.adjacency: dict = {zid: [] for zid in self.zones}
        # corner touches produce overlaps at float-noise scale (~1e-15 deg);
        # anything under ~0.1 mm is not a shared boundary
        min_overlap_deg = 1e-9
        ids = sorted(self.zones, key=_id_key)
        for i, a in enumerate(ids):
            ra = self.zones[a].ring
            ea = list(zip(ra, ra[1:] + ra[:1]))
            for b in ids[i + 1:]:
                rb = self.zones[b].ring
                eb = list(zip(rb, rb[1:] + rb[:1]))
                if any(_segments_overlap(p1, p2, q1, q2) > min_overlap_deg
                       for p1, p2 in ea for q1, q2 in eb):
                    self.adjacency[a].append(b)
                    self.adjacency[b].append(a)
        for zid in self.adjacency:
            self.adjacency[zid] = tuple(sorted(self.adjacency[zid], key=_id_key))

    def __len__(self):
        return len(self.zones)

    @classmethod
    def from_geojson(cls, source) -> "ZoneSet":
        """Accepts a FeatureCollection mapping or a path to one. Coordinates
        are GeoJSON order (lon, lat); rings are stored as (lat, lon)."""
        if isinstance(source, str):
            try:
                with open(source) as fh:
                    source = json.load(fh)
            except OSError as exc:
                raise IoError(str(exc)) from exc
            except ValueError as exc:
                raise ConfigError(f"invalid GeoJSON: {exc}") from exc
        zones = []
        for feat in source.get("features", []):
            geom = feat.get("geometry") or {}
            if geom.get("type") != "Polygon":
                continue
            props = feat.get("properties") or {}
            zid = props.get("id", feat.get("id"))
            if zid is None:
                raise ConfigError("zone feature without id property")
            exterior = geom["coordinates"][0]
            ring = [(float(lat), float(lon)) for lon, lat in exterior]
            if len(ring) > 1 and ring[0] == ring[-1]:
                ring = ring[:-1]
            if len(ring) < 3:
                raise ConfigError(f"zone {zid}: degenerate polygon")
            zones.append(Zone(str(zid), tuple(ring)))
        if not zones:
            raise ConfigError("no polygon zones in input")
        return cls(zones)


def zone_of(point, zones: ZoneSet) -> str:
    """Containing zone id; boundary points go to the lowest id."""
    lat, lon = point
    hits = []
    for zid in zones.zones:
        z = zones.zones[zid]
        lat0, lon0, lat1, lon1 = z.bbox()
        if not (lat0 <= lat <= lat1 and lon0 <= lon <= lon1):
            continue
        if point_in_ring(lat, lon, z.ring):
            hits.append(zid)
    if not hits:
        raise OutOfAreaError(f"point ({lat}, {lon}) outside all zones")
    return min(hits, key=_id_key)


class ZoneMatrix:
    """Hourly zone-to-zone values in long form (hour, origin, destination)."""

    def __init__(self, kind: str, entries=None):
        if kind not in MATRIX_KINDS:
            raise ConfigError(f"unknown matrix kind {kind!r}")
        self.kind = kind
        self._data: dict = {}
        self.hours: set = set()
        if entries:
            for (hour, o, d), v in entries.items():
                self.set(hour, o, d, v)

    def set(self, hour: int, o: str, d: str, value: float) -> None:
        if not 0 <= hour <= 23:
            raise ConfigError(f"{self.kind}: hour {hour} out of range")
        if value < 0:
            raise ConfigError(f"{self.kind}: negative value at ({hour},{o},{d})")
        self._data[(hour, o, d)] = value
        self.hours.add(hour)

    def covers_hour(self, hour: int) -> bool:
        return hour in self.hours

    def value(self, o: str, d: str, hour: int):
        return self._data.get((hour, o, d))

    def arrivals_to(self, d: str, hour: int) -> float:
        return sum(v for (h, _o, dd), v in self._data.items() if h == hour and dd == d)

    @classmethod
    def from_csv(cls, path: str, kind: str) -> "ZoneMatrix":
        m = cls(kind)
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                required = {"hour", "o_zone", "d_zone", "value"}
                if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                    raise ConfigError(f"{path}: expected columns {sorted(required)}")
                for row in reader:
                    m.set(int(row["hour"]), row["o_zone"], row["d_zone"], float(row["value"]))
        except OSError as exc:
            raise IoError(str(exc)) from exc
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return m


def duration_in_traffic(free_flow_s: float, o_zone: str, d_zone: str, hour: int,
                        m_tr: ZoneMatrix, m_ntr: ZoneMatrix) -> float:
    """Scale a free-flow car duration into traffic conditions.

    Hours without congestion matrices pass the duration through unchanged.
    """
    if not (m_tr.covers_hour(hour) and m_ntr.covers_hour(hour)):
        return free_flow_s
    tr = m_tr.value(o_zone, d_zone, hour)
    ntr = m_ntr.value(o_zone, d_zone, hour)
    if tr is None or ntr is None:
        raise UnknownZoneError(f"({o_zone}, {d_zone}) missing at hour {hour}")
    if ntr == 0:
        raise DegenerateRatioError(f"free-flow time 0 for ({o_zone}, {d_zone}) at hour {hour}")
    if tr == ntr:
        # equal matrices mean no congestion; return the input bit-for-bit
        # rather than routing it through two float roundings
        return free_flow_s
    return free_flow_s * tr / ntr


def parking_difficulty(d_zone: str, hour: int, td_car: ZoneMatrix, zones: ZoneSet,
                       method: str = "own_zone") -> float:
    """Arrival pressure at the destination zone.

    own_zone: total car arrivals into the zone this hour. neighborhood: adds
    arrivals into boundary-adjacent zones. rank: fraction of other zones with
    strictly fewer arrivals, in [0, 1].
    """
    if method not in PARKING_METHODS:
        raise ConfigError(f"unknown parking method {method!r}")
    if d_zone not in zones.zones:
        raise UnknownZoneError(d_zone)
    own = td_car.arrivals_to(d_zone, hour)
    if method == "own_zone":
        return own
    if method == "neighborhood":
        return own + sum(td_car.arrivals_to(n, hour) for n in zones.adjacency[d_zone])
    n = len(zones)
    if n <= 1:
        return 0.0
    smaller = sum(1 for zid in zones.zones
                  if zid != d_zone and td_car.arrivals_to(zid, hour) < own)
    return smaller / (n - 1)
