"""Weather and air-quality aggregation around a point in time.

Each parameter is observed by one or more stations as a timestamped series.
A query averages the samples inside a trailing window, taking them from the
station nearest the query point that actually has data in that window; a
parameter with no data anywhere yields a sentinel and a cleared flag.
"""

from __future__ import annotations

import csv
import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .errors import ConfigError, IoError
from .geo import haversine_m

log = logging.getLogger(__name__)

WEATHER_PARAMS = ("Temperature", "Rainfall6h", "Wind", "Cloudiness")
POLLUTION_PARAMS = ("C6H6", "O3", "CO", "NO2", "PM25", "PM10")
ALL_PARAMS = WEATHER_PARAMS + POLLUTION_PARAMS

ENV_SENTINEL = -9999.0
DEFAULT_WINDOWS = {"2h": 7200, "24h": 86400}


@dataclass
class SensorSeries:
    station_id: str
    lat: float
    lon: float
    parameter: str
    samples: list = field(default_factory=list)  # (epoch, value), sorted

    def window_mean(self, t_lo: int, t_hi: int):
        """Mean over samples with epoch in [t_lo, t_hi], None when empty."""
        epochs = [e for e, _ in self.samples]
        lo = bisect_left(epochs, t_lo)
        hi = bisect_right(epochs, t_hi)
        if hi <= lo:
            return None
        vals = [v for _, v in self.samples[lo:hi]]
        return sum(vals) / len(vals)


class SensorStore:
    def __init__(self):
        self._by_param: dict = {p: [] for p in ALL_PARAMS}

    def add_series(self, series: SensorSeries) -> None:
        if series.parameter not in ALL_PARAMS:
            raise ConfigError(f"unknown parameter {series.parameter!r}")
        series.samples.sort()
        for (e0, _), (e1, _) in zip(series.samples, series.samples[1:]):
            if e1 <= e0:
                raise ConfigError(
                    f"{series.station_id}/{series.parameter}: duplicate epoch {e1}")
        if series.parameter in POLLUTION_PARAMS:
            for _, v in series.samples:
                if v < 0:
                    raise ConfigError(
                        f"{series.station_id}/{series.parameter}: negative concentration")
        self._by_param[series.parameter].append(series)
        self._by_param[series.parameter].sort(key=lambda s: s.station_id)

    def series_for(self, parameter: str):
        return self._by_param.get(parameter, [])

    @classmethod
    def from_csv(cls, path: str) -> "SensorStore":
        store = cls()
        grouped: dict = {}
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                required = {"station_id", "lat", "lon", "parameter", "epoch", "value"}
                if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                    raise ConfigError(f"{path}: expected columns {sorted(required)}")
                for row in reader:
                    key = (row["station_id"], row["parameter"])
                    entry = grouped.setdefault(
                        key, (float(row["lat"]), float(row["lon"]), []))
                    entry[2].append((int(row["epoch"]), float(row["value"])))
        except OSError as exc:
            raise IoError(str(exc)) from exc
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for (sid, param), (lat, lon, samples) in sorted(grouped.items()):
            store.add_series(SensorSeries(sid, lat, lon, param, samples))
        return store


def aggregate_env(store: SensorStore, location, t: int,
                  windows=None) -> dict:
    """`avg<Param>_<window>` means over [t-w, t] plus `has<Param>` flags.

    Station choice happens per window: the nearest station with at least one
    in-window sample wins, ties broken by station id.
    """
    windows = DEFAULT_WINDOWS if windows is None else windows
    lat, lon = location
    out = {}
    for param in ALL_PARAMS:
        ranked = sorted(
            store.series_for(param),
            key=lambda s: (haversine_m(lat, lon, s.lat, s.lon), s.station_id),
        )
        found_all = True
        for label in windows:
            w = windows[label]
            mean = None
            for series in ranked:
                mean = series.window_mean(t - w, t)
                if mean is not None:
                    break
            if mean is None:
                found_all = False
                out[f"avg{param}_{label}"] = ENV_SENTINEL
            else:
                out[f"avg{param}_{label}"] = mean
        out[f"has{param}"] = 1 if found_all else 0
    return out
