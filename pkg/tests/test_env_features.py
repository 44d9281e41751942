import random

import pytest

from modefusion.env_features import (
    ALL_PARAMS,
    DEFAULT_WINDOWS,
    ENV_SENTINEL,
    SensorSeries,
    SensorStore,
    aggregate_env,
)
from modefusion.errors import ConfigError
from modefusion.geo import haversine_m

T0 = 1_683_103_200  # 2023-05-03 08:40 UTC, arbitrary query epoch
HERE = (52.23, 21.01)


def store_with(*series):
    store = SensorStore()
    for s in series:
        store.add_series(s)
    return store


def test_constant_series_both_windows():
    samples = [(T0 - k * 3600, 5.0) for k in range(25)]
    store = store_with(SensorSeries("W1", 52.23, 21.01, "Temperature", samples))
    got = aggregate_env(store, HERE, T0)
    assert got["avgTemperature_2h"] == 5.0
    assert got["avgTemperature_24h"] == 5.0
    assert got["hasTemperature"] == 1


def test_hourly_ramp_means():
    # values 0..23 hourly, newest (23) at T0: 24h mean 11.5; the inclusive
    # 2h window holds the samples at T0-7200, T0-3600, T0 -> mean 22.0
    samples = [(T0 - (23 - k) * 3600, float(k)) for k in range(24)]
    store = store_with(SensorSeries("W1", 52.23, 21.01, "Temperature", samples))
    got = aggregate_env(store, HERE, T0)
    assert got["avgTemperature_24h"] == pytest.approx(11.5)
    assert got["avgTemperature_2h"] == pytest.approx(22.0)


def test_single_sample_equals_value():
    store = store_with(SensorSeries("W1", 52.23, 21.01, "Wind", [(T0 - 100, 3.25)]))
    got = aggregate_env(store, HERE, T0)
    assert got["avgWind_2h"] == 3.25
    assert got["avgWind_24h"] == 3.25


def test_window_endpoints_inclusive():
    w = DEFAULT_WINDOWS["2h"]
    store = store_with(SensorSeries("W1", 52.23, 21.01, "O3", [(T0 - w, 10.0), (T0, 30.0)]))
    got = aggregate_env(store, HERE, T0)
    assert got["avgO3_2h"] == 20.0
    # one second outside
    store = store_with(SensorSeries("W1", 52.23, 21.01, "O3", [(T0 - w - 1, 10.0), (T0, 30.0)]))
    assert aggregate_env(store, HERE, T0)["avgO3_2h"] == 30.0


def test_nearest_station_wins():
    near = SensorSeries("A", 52.231, 21.01, "PM25", [(T0 - 60, 11.0)])
    far = SensorSeries("B", 52.4, 21.2, "PM25", [(T0 - 60, 99.0)])
    got = aggregate_env(store_with(far, near), HERE, T0)
    assert got["avgPM25_2h"] == 11.0


def test_fallback_to_station_with_data():
    # nearest has only stale samples: 2h falls back, 24h still uses it
    near = SensorSeries("A", 52.231, 21.01, "PM10", [(T0 - 20 * 3600, 40.0)])
    far = SensorSeries("B", 52.4, 21.2, "PM10", [(T0 - 600, 70.0)])
    got = aggregate_env(store_with(near, far), HERE, T0)
    assert got["avgPM10_2h"] == 70.0
    assert got["avgPM10_24h"] == 40.0
    assert got["hasPM10"] == 1


def test_tie_broken_by_station_id():
    a = SensorSeries("A", 52.3, 21.01, "CO", [(T0 - 60, 1.0)])
    b = SensorSeries("B", 52.3, 21.01, "CO", [(T0 - 60, 2.0)])
    got = aggregate_env(store_with(b, a), HERE, T0)
    assert got["avgCO_2h"] == 1.0


def test_no_data_sentinels():
    got = aggregate_env(SensorStore(), HERE, T0)
    for p in ALL_PARAMS:
        assert got[f"avg{p}_2h"] == ENV_SENTINEL
        assert got[f"avg{p}_24h"] == ENV_SENTINEL
        assert got[f"has{p}"] == 0


def test_shift_invariance():
    rng = random.Random(21)
    series = []
    for sid in ("A", "B"):
        samples = sorted((T0 - rng.randrange(0, 90000), rng.uniform(-5, 30))
                         for _ in range(40))
        series.append(("Temperature", sid, samples))
    offset = 86_400 * 7 + 5_400

    def build(shift):
        st = SensorStore()
        for param, sid, samples in series:
            st.add_series(SensorSeries(sid, 52.2 + (sid == "B") * 0.1, 21.0, param,
                                       [(e + shift, v) for e, v in samples]))
        return st

    base = aggregate_env(build(0), HERE, T0)
    moved = aggregate_env(build(offset), HERE, T0 + offset)
    assert base == moved


def test_fallback_never_skips_station_with_data():
    rng = random.Random(99)
    for _ in range(30):
        stations = []
        for i in range(5):
            sid = f"S{i}"
            lat, lon = 52.2 + rng.uniform(0, 0.3), 21.0 + rng.uniform(0, 0.3)
            n = rng.randrange(0, 6)
            samples = sorted({T0 - rng.randrange(0, 200_000) for _ in range(n)})
            stations.append((sid, lat, lon, [(e, rng.uniform(0, 50)) for e in samples]))
        store = SensorStore()
        for sid, lat, lon, samples in stations:
            if samples:
                store.add_series(SensorSeries(sid, lat, lon, "NO2", list(samples)))
        got = aggregate_env(store, HERE, T0)
        for label, w in DEFAULT_WINDOWS.items():
            ranked = sorted(
                (s for s in stations if any(T0 - w <= e <= T0 for e, _ in s[3])),
                key=lambda s: (haversine_m(*HERE, s[1], s[2]), s[0]),
            )
            if not ranked:
                assert got[f"avgNO2_{label}"] == ENV_SENTINEL
            else:
                vals = [v for e, v in ranked[0][3] if T0 - w <= e <= T0]
                assert got[f"avgNO2_{label}"] == pytest.approx(sum(vals) / len(vals))


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "sensors.csv"
    p.write_text(
        "station_id,lat,lon,parameter,epoch,value\n"
        f"W1,52.23,21.01,Temperature,{T0 - 60},4.5\n"
        f"W1,52.23,21.01,Temperature,{T0 - 30},5.5\n"
        f"P1,52.25,21.05,PM25,{T0 - 45},17.0\n"
    )
    store = SensorStore.from_csv(str(p))
    got = aggregate_env(store, HERE, T0)
    assert got["avgTemperature_2h"] == 5.0
    assert got["avgPM25_2h"] == 17.0


def test_rejects_bad_series(tmp_path):
    with pytest.raises(ConfigError):
        store_with(SensorSeries("X", 52.0, 21.0, "Humidity", [(T0, 1.0)]))
    with pytest.raises(ConfigError):
        store_with(SensorSeries("X", 52.0, 21.0, "PM25", [(T0, -1.0)]))
    with pytest.raises(ConfigError):
        store_with(SensorSeries("X", 52.0, 21.0, "PM25", [(T0, 1.0), (T0, 2.0)]))
    p = tmp_path / "bad.csv"
    p.write_text("station_id,lat,parameter,epoch,value\nW1,52.23,Temperature,1,4.5\n")
    with pytest.raises(ConfigError):
        SensorStore.from_csv(str(p))
