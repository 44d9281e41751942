"""End-to-end checks of the command-line pipeline on small synthetic cities."""

import csv
import datetime as dt
import json
import os
import statistics

import pytest

from modefusion import synth
from modefusion.cli import ingest_trace_file, main
from modefusion.config import load_config
from modefusion.errors import ConfigError
from modefusion.gtfs import parse_gtfs
from modefusion.vehicle_flow import SegmentStore

SMALL = dict(nx=6, ny=6, n_lines=2, headway_s=1200, n_respondents=12, seed=5)


def small_spec(**overrides):
    return synth.CitySpec(**{**SMALL, **overrides})


def tree_bytes(root):
    out = {}
    for dirpath, _dirs, files in os.walk(root):
        for fname in files:
            path = os.path.join(dirpath, fname)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def rewrite_config(src, dst, **changes):
    with open(src) as fh:
        doc = json.load(fh)
    doc.update(changes)
    with open(dst, "w") as fh:
        json.dump(doc, fh, indent=2)
    return dst


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    """One small city driven through every stage once."""
    root = str(tmp_path_factory.mktemp("city"))
    synth.generate(small_spec(), root)
    traces = [os.path.join(root, "traces", f"{d}.csv")
              for d in ("2023-05-02", "2023-05-03")]
    assert main(["ingest-traces", "--traces", *traces,
                 "--gtfs", os.path.join(root, "gtfs"),
                 "--out", os.path.join(root, "segments")]) == 0
    for day in ("2023-05-02", "2023-05-03"):
        assert main(["build-real-gtfs",
                     "--segments", os.path.join(root, "segments"),
                     "--gtfs", os.path.join(root, "gtfs"),
                     "--date", day,
                     "--out", os.path.join(root, "real_gtfs", day)]) == 0
    assert main(["fuse", "--config", os.path.join(root, "config.json")]) == 0
    return root


# --- synth ---------------------------------------------------------------------------

def test_synth_seed_fixed_byte_identical(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    synth.generate(small_spec(), a)
    synth.generate(small_spec(), b)
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert sorted(ta) == sorted(tb)
    assert all(ta[name] == tb[name] for name in ta)


def test_synth_seed_changes_output(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    synth.generate(small_spec(), a)
    synth.generate(small_spec(seed=6), b)
    assert tree_bytes(a)["survey.csv"] != tree_bytes(b)["survey.csv"]


def test_synth_inconsistent_spec_rejected():
    with pytest.raises(ConfigError):
        small_spec(label_noise=1.5).validate()
    with pytest.raises(ConfigError):
        # Wednesday trips need Tuesday traces
        small_spec(trace_dates=(dt.date(2023, 5, 3),)).validate()
    with pytest.raises(ConfigError):
        small_spec(service_hours=(8, 10)).validate()


def test_synth_cli_flags(tmp_path):
    out = str(tmp_path / "city")
    assert main(["synth", "--out", out, "--seed", "3",
                 "--respondents", "6", "--label-noise", "0.1"]) == 0
    with open(os.path.join(out, "truth.json")) as fh:
        truth = json.load(fh)
    assert len(truth["labels"]) == 6 * 4
    assert truth["rule"]["label_noise"] == 0.1


def test_synth_cli_bad_flag_value(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x"),
                 "--label-noise", "1.5"]) == 2


def test_survey_departures_inside_service_span(city):
    spec = small_spec()
    lo, hi = spec.depart_range_s()
    with open(os.path.join(city, "survey.csv")) as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in range(1, spec.trips_per_respondent + 1):
            second_of_day = int(row[f"trip{k}_depart"]) % 86400
            assert lo <= second_of_day <= hi


# --- ingest-traces -------------------------------------------------------------------

def test_ingest_empty_trace_file(city, tmp_path, capsys):
    empty = tmp_path / "2023-05-02.csv"
    empty.write_text("epoch,line,brigade,lat,lon\n")
    rc = main(["ingest-traces", "--traces", str(empty),
               "--gtfs", os.path.join(city, "gtfs"),
               "--out", str(tmp_path / "segs")])
    assert rc == 0
    assert "matched=0" in capsys.readouterr().out


def test_ingest_corrupt_row_counted_not_fatal(city, tmp_path, capsys):
    src = os.path.join(city, "traces", "2023-05-02.csv")
    dst = tmp_path / "2023-05-02.csv"
    with open(src) as fh:
        content = fh.read()
    dst.write_text(content + "not,a,valid,row\n1699999999,L0,h07_00,bad,worse\n")
    rc = main(["ingest-traces", "--traces", str(dst),
               "--gtfs", os.path.join(city, "gtfs"),
               "--out", str(tmp_path / "segs")])
    assert rc == 0
    assert "skipped_rows=2" in capsys.readouterr().out


def test_ingest_unknown_line_counts_unmatched(city, tmp_path, capsys):
    rows = ["epoch,line,brigade,lat,lon"]
    rows += [f"{1683000000 + 5 * i},ZZ,b1,52.2,21.0" for i in range(4)]
    trace = tmp_path / "2023-05-02.csv"
    trace.write_text("\n".join(rows) + "\n")
    rc = main(["ingest-traces", "--traces", str(trace),
               "--gtfs", os.path.join(city, "gtfs"),
               "--out", str(tmp_path / "segs")])
    assert rc == 0
    assert "unmatched=4" in capsys.readouterr().out


def test_ingest_bad_filename_needs_date(city, tmp_path):
    trace = tmp_path / "mystery.csv"
    trace.write_text("epoch,line,brigade,lat,lon\n")
    args = ["--gtfs", os.path.join(city, "gtfs"), "--out", str(tmp_path / "s")]
    assert main(["ingest-traces", "--traces", str(trace), *args]) == 2
    assert main(["ingest-traces", "--traces", str(trace),
                 "--date", "2023-05-02", *args]) == 0


def test_delay_mean_recovered_from_pipeline(tmp_path):
    """Generator-vs-pipeline closure: injected delay distribution with mean
    120 s comes back with mean within [115, 125] s."""
    root = str(tmp_path / "city")
    spec = small_spec(seed=9, delay_mean_s=120.0, delay_sd_s=10.0, halt_prob=0.0)
    synth.generate(spec, root)
    timetable = parse_gtfs(os.path.join(root, "gtfs"))
    store = SegmentStore()
    day = dt.date(2023, 5, 2)
    ingest_trace_file(os.path.join(root, "traces", "2023-05-02.csv"),
                      timetable, day, store)
    delays = []
    for seg in store.segments_on(day):
        delays += [seg.delay_from_s, seg.delay_to_s]
    assert delays
    assert 115.0 <= statistics.mean(delays) <= 125.0


# --- build-real-gtfs -----------------------------------------------------------------

def test_real_gtfs_output_reparses(city):
    planned = parse_gtfs(os.path.join(city, "gtfs"))
    real = parse_gtfs(os.path.join(city, "real_gtfs", "2023-05-02"))
    assert real.trips
    assert set(real.trips) <= set(planned.trips)
    day = dt.date(2023, 5, 2)
    truth = json.load(open(os.path.join(city, "truth.json")))["delays"]["2023-05-02"]
    # spot-check one trip: observed stop times sit close to planned + delay
    trip_id = sorted(real.trips)[0]
    injected = truth[trip_id]
    planned_sts = planned.stop_times[trip_id]
    real_sts = real.stop_times[trip_id]
    for p, r in zip(planned_sts[:-1], real_sts[:-1]):  # terminal is unobserved
        assert abs((r.departure_s - p.departure_s) - injected) <= 5.0


def test_real_gtfs_missing_date_partition(city, tmp_path):
    rc = main(["build-real-gtfs",
               "--segments", os.path.join(city, "segments"),
               "--gtfs", os.path.join(city, "gtfs"),
               "--date", "2023-05-09",
               "--out", str(tmp_path / "real")])
    assert rc == 2


# --- fuse ----------------------------------------------------------------------------

def test_fuse_rerun_byte_identical(city, tmp_path):
    cfg_path = rewrite_config(
        os.path.join(city, "config.json"), os.path.join(city, "config_det.json"))
    with open(cfg_path) as fh:
        doc = json.load(fh)
    doc["paths"]["out"] = str(tmp_path / "out")
    with open(cfg_path, "w") as fh:
        json.dump(doc, fh)

    assert main(["fuse", "--config", cfg_path]) == 0
    first = tree_bytes(str(tmp_path / "out"))
    assert main(["fuse", "--config", cfg_path]) == 0
    second = tree_bytes(str(tmp_path / "out"))
    assert first == second
    assert "instances.csv" in first and "manifest.json" in first


def test_fuse_instances_nondecreasing_departure(city):
    with open(os.path.join(city, "out", "instances.csv")) as fh:
        departures = [int(row["t_depart"]) for row in csv.DictReader(fh)]
    assert departures == sorted(departures)


def test_manifest_hash_tracks_any_config_field(city, tmp_path):
    base = os.path.join(city, "config.json")

    def run(name, **changes):
        cfg = rewrite_config(base, os.path.join(city, name), **changes)
        with open(cfg) as fh:
            doc = json.load(fh)
        doc["paths"]["out"] = str(tmp_path / name)
        with open(cfg, "w") as fh:
            json.dump(doc, fh)
        assert main(["fuse", "--config", cfg]) == 0
        with open(os.path.join(str(tmp_path / name), "manifest.json")) as fh:
            return json.load(fh)

    m_base = run("c0.json")
    m_window = run("c1.json", window_before_s=240)
    m_seed = run("c2.json", seed=99)

    # a fusion-stage field moves both hashes
    assert m_window["run_config_hash"] != m_base["run_config_hash"]
    assert m_window["config_hash"] != m_base["config_hash"]
    # a run-level field that fusion ignores still moves the run hash
    assert m_seed["run_config_hash"] != m_base["run_config_hash"]
    assert m_seed["config_hash"] == m_base["config_hash"]


def test_fuse_missing_input_path(city, tmp_path):
    cfg = rewrite_config(os.path.join(city, "config.json"),
                         os.path.join(city, "config_missing.json"))
    with open(cfg) as fh:
        doc = json.load(fh)
    doc["paths"]["survey"] = "no_such_file.csv"
    with open(cfg, "w") as fh:
        json.dump(doc, fh)
    assert main(["fuse", "--config", cfg]) == 2


# --- evaluate ------------------------------------------------------------------------

def test_evaluate_row_count_and_report(city, tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = rewrite_config(
        os.path.join(city, "config.json"),
        os.path.join(city, "config_eval.json"),
        scenarios=["S_ONLY", "S_P_LOS"],
        methods=["naive_bayes", "knn"],
        grids={"naive_bayes": [{"var_smoothing": 1e-9}, {"var_smoothing": 1e-6}],
               "knn": [{"k": 3}]},
        k_folds=10)
    with open(cfg) as fh:
        doc = json.load(fh)
    doc["paths"]["out"] = out
    with open(cfg, "w") as fh:
        json.dump(doc, fh)

    rc = main(["evaluate", "--config", cfg,
               "--instances", os.path.join(city, "out", "instances.csv")])
    assert rc == 0
    with open(os.path.join(out, "results.csv")) as fh:
        rows = list(csv.DictReader(fh))
    # per scenario: (2 NB + 1 kNN) grid entries x 10 folds
    assert len(rows) == 2 * 3 * 10
    for row in rows:
        assert row["scenario"] in ("S_ONLY", "S_P_LOS")
        assert 0 <= int(row["fold"]) < 10
    with open(os.path.join(out, "report.json")) as fh:
        report = json.load(fh)
    assert sorted(report["scenarios"]) == ["S_ONLY", "S_P_LOS"]
    assert report["scenarios"]["S_P_LOS"]["n_holdout"] >= 1


def test_evaluate_unknown_scenario_exits_2(city):
    cfg = rewrite_config(os.path.join(city, "config.json"),
                         os.path.join(city, "config_bogus.json"),
                         scenarios=["S_BOGUS"])
    assert main(["evaluate", "--config", cfg,
                 "--instances", os.path.join(city, "out", "instances.csv")]) == 2


def test_noise_free_rule_learnable(tmp_path):
    """Noise-free ground truth: a plain tree on the full feature union
    recovers the labelling rule to at least 95% holdout accuracy. Needs a
    respondent count that outnumbers the spurious-split temptations of a
    wide feature table, hence its own city."""
    root = str(tmp_path / "city")
    synth.generate(small_spec(n_respondents=40), root)
    assert main(["fuse", "--config", os.path.join(root, "config.json")]) == 0
    cfg = rewrite_config(
        os.path.join(root, "config.json"),
        os.path.join(root, "config_rule.json"),
        scenarios=["S_ALL"],
        methods=["decision_tree"],
        grids={"decision_tree": [{"max_depth": None, "min_samples_leaf": 1}]})
    assert main(["evaluate", "--config", cfg]) == 0
    with open(os.path.join(root, "out", "report.json")) as fh:
        report = json.load(fh)
    assert report["scenarios"]["S_ALL"]["final"]["accuracy"] >= 0.95


# --- report --------------------------------------------------------------------------

def test_report_text_and_figures(city, tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = rewrite_config(
        os.path.join(city, "config.json"),
        os.path.join(city, "config_rep.json"),
        scenarios=["S_ONLY"], methods=["naive_bayes"],
        grids={"naive_bayes": [{"var_smoothing": 1e-9}]}, k_folds=3)
    with open(cfg) as fh:
        doc = json.load(fh)
    doc["paths"]["out"] = out
    with open(cfg, "w") as fh:
        json.dump(doc, fh)
    assert main(["evaluate", "--config", cfg,
                 "--instances", os.path.join(city, "out", "instances.csv")]) == 0
    capsys.readouterr()

    figures = str(tmp_path / "figs")
    rc = main(["report", "--report", os.path.join(out, "report.json"),
               "--figures", figures])
    assert rc == 0
    text = capsys.readouterr().out
    assert "S_ONLY" in text and "holdout" in text
    assert os.path.exists(os.path.join(figures, "scenario_scores.png"))


def test_report_missing_file_exits_2(tmp_path):
    assert main(["report", "--report", str(tmp_path / "nope.json")]) == 2


# --- config loader -------------------------------------------------------------------

def test_config_requires_seed(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"alpha": 0.2}))
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_config_rejects_bad_alpha_and_unknown_field(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 1, "alpha": 1.5}))
    with pytest.raises(ConfigError):
        load_config(str(p))
    p.write_text(json.dumps({"seed": 1, "frobnicate": True}))
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_config_paths_resolve_relative_to_file(tmp_path):
    sub = tmp_path / "nested"
    sub.mkdir()
    p = sub / "c.json"
    p.write_text(json.dumps({"seed": 1, "paths": {"survey": "data/survey.csv"}}))
    cfg = load_config(str(p))
    assert cfg.survey == str(sub / "data" / "survey.csv")
    assert cfg.seed == 1
