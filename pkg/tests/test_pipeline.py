import json

import jsonschema
import numpy as np
import pytest

from weatherwatt.config import ExperimentConfig, load_config
from weatherwatt.errors import IngestError
from weatherwatt.ingest import TimeSeriesFrame, split_chronological
from weatherwatt.pipeline import (
    ForecastReport,
    LagScanResult,
    emit_plot_series,
    gap_breaks,
    load_frame,
    lag_scan,
    nested_feature_sets,
    read_series_csv,
    report_schema,
    run_experiment,
    train_target,
    write_lag_scans,
    write_table_csvs,
)

DEFAULT_ORDER = ("dew_point_temperature", "wind_chill", "atmospheric_pressure",
               "relative_humidity", "rainfall")


def make_frame(features: dict, targets: dict, step=600):
    cols = tuple(features) + tuple(targets)
    values = np.column_stack([*features.values(), *targets.values()])
    roles = {**{c: "feature" for c in features}, **{c: "target" for c in targets}}
    return TimeSeriesFrame(np.arange(values.shape[0]) * step, cols, values, roles)


def signal_frame(seed=0, n=400):
    rng = np.random.default_rng(seed)
    feats = {f"f{i}": rng.normal(size=n) for i in range(5)}
    y = 1.0 + 4.0 * feats["f1"] - 3.0 * feats["f3"] + 0.05 * rng.normal(size=n)
    return make_frame(feats, {"y": y})


def config_for(frame, **kw):
    return ExperimentConfig(frame=None, weather="unused", power="unused",
                            roles=dict(frame.roles), **kw)


def test_lag_scan_finds_delay():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300)
    y = np.concatenate([rng.normal(size=3), x[:-3]])  # y[i + 3] = x[i]
    scan = lag_scan(make_frame({"x": x}, {"y": y}), "x", "y", 6)
    assert scan.best_lag == 3
    assert scan.best_r == pytest.approx(1.0, abs=1e-12)
    assert [k for k, _ in scan.lags] == list(range(7))
    assert scan.median_step_seconds == 600


def test_lag_scan_white_noise():
    rng = np.random.default_rng(4)
    scan = lag_scan(make_frame({"x": rng.normal(size=5000)}, {"y": rng.normal(size=5000)}), "x", "y", 10)
    assert max(abs(r) for _, r in scan.lags) < 0.1


def test_lag_scan_zero_and_errors():
    x = np.arange(10.0)
    scan = lag_scan(make_frame({"x": x}, {"y": 2 * x}), "x", "y", 0)
    assert scan.lags == ((0, 1.0),) and scan.best_lag == 0
    with pytest.raises(IngestError):
        lag_scan(make_frame({"x": x}, {"y": x}), "x", "y", 9)
    with pytest.raises(ValueError):
        lag_scan(make_frame({"x": x}, {"y": x}), "x", "y", -1)


def test_lag_scan_ties_go_to_shortest():
    scan = LagScanResult("x", "y", ((0, 0.5), (1, -0.5), (2, 0.3)))
    assert scan.best_lag == 0
    assert LagScanResult.from_dict(scan.to_dict()) == scan


def test_nested_feature_sets_follow_order():
    sets = nested_feature_sets(sorted(DEFAULT_ORDER), DEFAULT_ORDER)
    assert sets[0] == ("dew_point_temperature", "wind_chill")
    assert [len(s) for s in sets] == [2, 3, 4, 5]
    for a, b in zip(sets, sets[1:]):
        assert b[:-1] == a
    assert nested_feature_sets(["z", "wind_chill"], DEFAULT_ORDER) == [("wind_chill", "z")]
    assert nested_feature_sets(["only"], DEFAULT_ORDER) == [("only",)]


def test_selects_exactly_the_signal_features():
    frame = signal_frame()
    report = run_experiment(config_for(frame), frame=frame)
    r = report.result("y")
    assert set(r.model.feature_names) == {"f1", "f3"}
    assert r.r2_test > 0.99
    assert r.model.coefficient("f1") == pytest.approx(4.0, abs=0.05)


def test_multi_feature_cod_at_least_best_single():
    frame = signal_frame(1)
    r = run_experiment(config_for(frame), frame=frame).result("y")
    best_single = r.screening.best.single_var_cod
    assert r.r2_train >= best_single - 1e-12
    for a, b in zip(r.nested, r.nested[1:]):
        assert b.r2_train >= a.r2_train - 1e-12


def test_run_is_deterministic_and_job_count_free(golden_dir):
    cfg = load_config(golden_dir / "exp.cfg")
    one = run_experiment(cfg).to_json()
    assert run_experiment(cfg).to_json() == one
    assert run_experiment(cfg, jobs=4).to_json() == one


def test_golden_dataset_shape(golden_dir):
    report = run_experiment(load_config(golden_dir / "exp.cfg"))
    assert report.targets == ["active_power", "reactive_power"]
    active = report.result("active_power")
    assert active.screening.best.feature_name == "wind_chill"
    assert "wind_chill" in active.model.feature_names
    reactive = report.result("reactive_power")
    wc = next(s for s in reactive.lag_scans if s.feature == "wind_chill")
    assert wc.best_lag == 2  # the generator delays reactive power by two rows
    assert report.data["rows"] >= 0.95 * 2000


def test_report_validates_and_round_trips(golden_dir):
    report = run_experiment(load_config(golden_dir / "exp.cfg"))
    text = report.to_json()
    jsonschema.validate(json.loads(text), report_schema())
    back = ForecastReport.from_json(text)
    assert back.to_json() == text


def test_schema_rejects_broken_report(golden_dir):
    d = json.loads(run_experiment(load_config(golden_dir / "exp.cfg")).to_json())
    d["targets"][0]["r2_train"] = 1.5
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(d, report_schema())


def test_no_test_rows_reach_training(golden_dir):
    cfg = load_config(golden_dir / "exp.cfg")
    frame = load_frame(cfg)
    train, test = split_chronological(frame, cfg.train_fraction)
    report = run_experiment(cfg, frame=frame)
    for t in report.targets:
        direct = train_target(train, t, cfg.sl).final_model
        assert report.result(t).model == direct
        assert report.result(t).timestamps == tuple(test.timestamps.tolist())


def test_gap_breaks():
    assert gap_breaks([0, 600, 1200, 3000, 3600]) == [3]
    assert gap_breaks([0, 600, 1200]) == []


def test_emit_plot_series(golden_dir, tmp_path):
    report = run_experiment(load_config(golden_dir / "exp.cfg"))
    out = tmp_path / "plots"
    paths = emit_plot_series(report, out)
    assert sorted(p.name for p in paths) == [
        "active_power_series.csv", "active_power_series.gp",
        "reactive_power_series.csv", "reactive_power_series.gp",
    ]
    r = report.result("active_power")
    rows = read_series_csv(out / "active_power_series.csv")
    assert len(rows) == report.data["test_rows"]
    assert rows == r.series()
    blanks = (out / "active_power_series.csv").read_text().count("\n\n")
    assert blanks == len(gap_breaks(r.timestamps))
    gp = (out / "active_power_series.gp").read_text()
    assert '"active_power_series.csv"' in gp


def test_table_and_lag_csvs(golden_dir, tmp_path):
    report = run_experiment(load_config(golden_dir / "exp.cfg"))
    single, multi = write_table_csvs(report, tmp_path)
    head = single.read_text().splitlines()
    assert head[0].split(",")[0] == "target" and len(head) == 3
    assert len(multi.read_text().splitlines()) == 1 + sum(len(r.nested) for r in report.results)
    lag = write_lag_scans(report, tmp_path / "lag_scan.csv").read_text().splitlines()
    assert lag[0] == "target,feature,lag_steps,pearson_r,is_best,median_step_seconds"
    assert len(lag) == 1 + 2 * 5 * 13


def test_tables_text_mentions_every_target(golden_dir):
    text = run_experiment(load_config(golden_dir / "exp.cfg")).tables_text()
    assert "active_power" in text and "reactive_power" in text
    assert "DPT-WC" in text and "DPT-WC-AP-RH-RF" in text


def test_missing_target_is_rejected():
    frame = signal_frame()
    cfg = config_for(frame)
    frame2 = make_frame({"f0": frame.column("f0"), "f1": frame.column("f1")}, {"other": frame.column("y")})
    with pytest.raises(IngestError):
        run_experiment(cfg, frame=frame2)
