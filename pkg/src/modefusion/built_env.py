"""Built and natural environment descriptors around a point.

Densities are computed inside a disc (default 500 m) using a local
equirectangular projection centered on the query point: road length is
clipped to the disc, point layers are counted (population points weighted),
and green polygons are intersected with a 64-gon approximation of the disc.
Stop distances are great-circle, one feature per vehicle kind.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import ConfigError, IoError
from .geo import (
    LocalProjection,
    circle_ring,
    clip_polygon,
    haversine_m,
    ring_area,
    segment_length_in_circle,
)
from .gtfs import VEHICLE_KINDS

log = logging.getLogger(__name__)

DEFAULT_RADIUS_M = 500.0
STOP_DISTANCE_CUTOFF_M = 20_000.0
DISTANCE_SENTINEL = -1.0
DISC_SEGMENTS = 64

LAYER_FILES = {
    "roads": "roads.geojson",
    "addresses": "addresses.geojson",
    "population": "population.geojson",
    "green": "green.geojson",
    "stops": "stops.geojson",
}


@dataclass
class SpatialDb:
    roads: list = field(default_factory=list)        # [((lat, lon), ...)] polylines
    addresses: list = field(default_factory=list)    # [(lat, lon)]
    population: list = field(default_factory=list)   # [(lat, lon, persons)]
    green: list = field(default_factory=list)        # [((lat, lon), ...)] rings
    stops: dict = field(default_factory=dict)        # kind -> [(lat, lon)]

    @classmethod
    def load(cls, directory: str) -> "SpatialDb":
        import os

        db = cls()
        for layer, fname in LAYER_FILES.items():
            path = os.path.join(directory, fname)
            if not os.path.exists(path):
                continue
            try:
                with open(path) as fh:
                    doc = json.load(fh)
            except OSError as exc:
                raise IoError(str(exc)) from exc
            except ValueError as exc:
                raise ConfigError(f"{path}: invalid GeoJSON: {exc}") from exc
            db._add_layer(layer, doc, path)
        return db

    def _add_layer(self, layer: str, doc: dict, path: str) -> None:
        for feat in doc.get("features", []):
            geom = feat.get("geometry") or {}
            gtype, coords = geom.get("type"), geom.get("coordinates")
            props = feat.get("properties") or {}
            if layer == "roads":
                if gtype != "LineString":
                    raise ConfigError(f"{path}: roads must be LineString, got {gtype}")
                self.roads.append(tuple((lat, lon) for lon, lat in coords))
            elif layer == "addresses":
                self.addresses.append((coords[1], coords[0]))
            elif layer == "population":
                self.population.append(
                    (coords[1], coords[0], float(props.get("population", 1.0))))
            elif layer == "green":
                if gtype != "Polygon":
                    raise ConfigError(f"{path}: green must be Polygon, got {gtype}")
                ring = [(lat, lon) for lon, lat in coords[0]]
                if len(ring) > 1 and ring[0] == ring[-1]:
                    ring = ring[:-1]
                self.green.append(tuple(ring))
            elif layer == "stops":
                kind = props.get("kind")
                if kind not in VEHICLE_KINDS:
                    raise ConfigError(f"{path}: stop kind {kind!r} unknown")
                self.stops.setdefault(kind, []).append((coords[1], coords[0]))

    def validate(self) -> None:
        def ok(lat, lon):
            return -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0

        for line in self.roads:
            for lat, lon in line:
                if not ok(lat, lon):
                    raise ConfigError(f"road vertex out of range: ({lat}, {lon})")
        for lat, lon in self.addresses:
            if not ok(lat, lon):
                raise ConfigError(f"address out of range: ({lat}, {lon})")
        for lat, lon, persons in self.population:
            if not ok(lat, lon) or persons < 0:
                raise ConfigError(f"population point invalid: ({lat}, {lon}, {persons})")
        for ring in self.green:
            for lat, lon in ring:
                if not ok(lat, lon):
                    raise ConfigError(f"green vertex out of range: ({lat}, {lon})")
        for kind in self.stops:
            for lat, lon in self.stops[kind]:
                if not ok(lat, lon):
                    raise ConfigError(f"{kind} stop out of range: ({lat}, {lon})")


def compute_built_env(db: SpatialDb, point, radius_m: float = DEFAULT_RADIUS_M) -> dict:
    if radius_m <= 0:
        raise ConfigError(f"radius must be positive, got {radius_m}")
    lat, lon = point
    proj = LocalProjection(lat, lon)
    disc_area_km2 = 3.141592653589793 * (radius_m / 1000.0) ** 2

    road_m = 0.0
    for line in db.roads:
        xy = [proj.to_xy(a, b) for a, b in line]
        for (ax, ay), (bx, by) in zip(xy, xy[1:]):
            road_m += segment_length_in_circle(ax, ay, bx, by, 0.0, 0.0, radius_m)

    n_addr = sum(1 for a, b in db.addresses
                 if haversine_m(lat, lon, a, b) <= radius_m)
    persons = sum(p for a, b, p in db.population
                  if haversine_m(lat, lon, a, b) <= radius_m)

    # the polygon disc both clips the green layer and serves as the share
    # denominator, so full containment yields exactly 1.0
    disc = circle_ring(0.0, 0.0, radius_m, DISC_SEGMENTS)
    disc_poly_area = ring_area(disc)
    green_area = 0.0
    for ring in db.green:
        xy = [proj.to_xy(a, b) for a, b in ring]
        clipped = clip_polygon(xy, disc)
        if len(clipped) >= 3:
            green_area += ring_area(clipped)

    # clipping a polygon that fully contains the disc reproduces the disc
    # ring through intersection arithmetic, off by ~1e-16 rel; 9 decimals is
    # sub-square-meter here and makes containment give exactly 1.0
    share = min(1.0, round(green_area / disc_poly_area, 9))
    out = {
        "RoadDensity": road_m / disc_area_km2,
        "AddressDensity": n_addr / disc_area_km2,
        "PopulationDensity": persons / disc_area_km2,
        "GreenShare": share,
    }
    for kind in VEHICLE_KINDS:
        best = None
        for a, b in db.stops.get(kind, []):
            d = haversine_m(lat, lon, a, b)
            if best is None or d < best:
                best = d
        name = f"{kind.capitalize()}Distance_URBAN"
        out[name] = best if best is not None and best <= STOP_DISTANCE_CUTOFF_M \
            else DISTANCE_SENTINEL
    return out
