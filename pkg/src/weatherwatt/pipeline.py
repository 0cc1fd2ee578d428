"""End-to-end forecasting experiment.

ingest -> split -> screen -> eliminate -> fit -> forecast -> score, run per
target. Everything that touches model fitting or selection sees the training
rows only.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from weatherwatt.config import ExperimentConfig
from weatherwatt.errors import DegenerateTarget, IngestError
from weatherwatt.ingest import (
    TimeSeriesFrame,
    format_timestamp,
    load_streams,
    parse_csv,
    parse_timestamp,
    split_chronological,
)
from weatherwatt.ols import DesignMatrix, FittedModel, fit, predict, r_squared
from weatherwatt.selection import (
    EliminationTrace,
    ScreeningReport,
    backward_eliminate,
    format_table,
    pearson_r,
    screen_single,
    screening_table,
)

log = logging.getLogger(__name__)

REPORT_FORMAT = "weatherwatt.forecast-report/1"


def report_schema() -> dict:
    """JSON Schema describing ``ForecastReport.to_json`` output."""
    text = resources.files("weatherwatt").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class LagScanResult:
    feature: str
    target: str
    lags: tuple[tuple[int, float], ...]
    median_step_seconds: float | None = None

    @property
    def best_lag(self) -> int:
        # ties go to the shortest lag
        best_k, best_r = self.lags[0]
        for k, r in self.lags[1:]:
            if abs(r) > abs(best_r):
                best_k, best_r = k, r
        return best_k

    @property
    def best_r(self) -> float:
        return dict(self.lags)[self.best_lag]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "target": self.target,
            "lags": [{"lag_steps": k, "pearson_r": r} for k, r in self.lags],
            "best_lag": self.best_lag,
            "median_step_seconds": self.median_step_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LagScanResult:
        return cls(
            d["feature"], d["target"],
            tuple((int(e["lag_steps"]), float(e["pearson_r"])) for e in d["lags"]),
            d.get("median_step_seconds"),
        )


def lag_scan(frame: TimeSeriesFrame, feature: str, target: str, lag_max: int) -> LagScanResult:
    """Correlate ``feature[i]`` with ``target[i + k]`` for k = 0 .. lag_max.

    Lags are row steps; ``median_step_seconds`` converts them to time.
    """
    if lag_max < 0:
        raise ValueError("lag_max must be non-negative")
    n = frame.n
    if n < lag_max + 2:
        raise IngestError(f"lag scan up to {lag_max} needs {lag_max + 2} rows, frame has {n}")
    x = frame.column(feature)
    y = frame.column(target)
    lags = tuple((k, pearson_r(x[: n - k], y[k:])) for k in range(lag_max + 1))
    return LagScanResult(feature, target, lags, frame.median_step_seconds())


def nested_feature_sets(features: Sequence[str], nesting: Sequence[str]) -> list[tuple[str, ...]]:
    """Growing feature sets: the first two of the nesting order, then one more each step.

    Features missing from ``nesting`` are appended in the given order.
    """
    order = [f for f in nesting if f in features] + [f for f in features if f not in nesting]
    if not order:
        return []
    first = min(2, len(order))
    return [tuple(order[:k]) for k in range(first, len(order) + 1)]


@dataclass(frozen=True)
class NestedFit:
    features: tuple[str, ...]
    r2_train: float
    r2_test: float

    @property
    def label(self) -> str:
        return "-".join(_abbrev(f) for f in self.features)

    def to_dict(self) -> dict:
        return {"features": list(self.features), "label": self.label,
                "r2_train": self.r2_train, "r2_test": self.r2_test}


_ABBREVIATIONS = {
    "atmospheric_pressure": "AP",
    "dew_point_temperature": "DPT",
    "rainfall": "RF",
    "relative_humidity": "RH",
    "wind_chill": "WC",
}


def _abbrev(name: str) -> str:
    if name in _ABBREVIATIONS:
        return _ABBREVIATIONS[name]
    parts = [p for p in name.split("_") if p]
    if len(parts) == 1:
        return parts[0][:2].upper()
    return "".join(p[0] for p in parts).upper()


@dataclass(frozen=True)
class TargetResult:
    target: str
    screening: ScreeningReport
    trace: EliminationTrace
    model: FittedModel
    r2_train: float
    r2_test: float
    timestamps: tuple[int, ...]
    actual: tuple[float, ...]
    predicted: tuple[float, ...]
    nested: tuple[NestedFit, ...] = ()
    lag_scans: tuple[LagScanResult, ...] = ()

    def series(self) -> list[tuple[str, float, float]]:
        return [(format_timestamp(t), a, p)
                for t, a, p in zip(self.timestamps, self.actual, self.predicted)]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "selected_features": list(self.model.feature_names),
            "model": self.model.to_dict(),
            "trace": self.trace.to_dict(),
            "r2_train": self.r2_train,
            "r2_test": self.r2_test,
            "screening": self.screening.to_dict(),
            "nested": [nf.to_dict() for nf in self.nested],
            "lag_scans": [ls.to_dict() for ls in self.lag_scans],
            "series": [
                {"timestamp": ts, "actual": a, "predicted": p} for ts, a, p in self.series()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> TargetResult:
        series = d["series"]
        return cls(
            target=d["target"],
            screening=ScreeningReport.from_dict(d["screening"]),
            trace=EliminationTrace.from_dict(d["trace"]),
            model=FittedModel.from_dict(d["model"]),
            r2_train=float(d["r2_train"]),
            r2_test=float(d["r2_test"]),
            timestamps=tuple(parse_timestamp(s["timestamp"]) for s in series),
            actual=tuple(float(s["actual"]) for s in series),
            predicted=tuple(float(s["predicted"]) for s in series),
            nested=tuple(
                NestedFit(tuple(nf["features"]), float(nf["r2_train"]), float(nf["r2_test"]))
                for nf in d.get("nested", ())
            ),
            lag_scans=tuple(LagScanResult.from_dict(ls) for ls in d.get("lag_scans", ())),
        )


@dataclass(frozen=True)
class ForecastReport:
    settings: dict
    data: dict
    results: tuple[TargetResult, ...]
    warnings: tuple[str, ...] = field(default=())

    def result(self, target: str) -> TargetResult:
        for r in self.results:
            if r.target == target:
                return r
        raise KeyError(target)

    @property
    def targets(self) -> list[str]:
        return [r.target for r in self.results]

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "settings": self.settings,
            "data": self.data,
            "targets": [r.to_dict() for r in self.results],
            "single_variable_table": self.single_variable_rows(),
            "multi_variable_table": self.multi_variable_rows(),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ForecastReport:
        if d.get("format") != REPORT_FORMAT:
            raise ValueError(f"not a forecast report (format {d.get('format')!r})")
        return cls(
            settings=d["settings"], data=d["data"],
            results=tuple(TargetResult.from_dict(t) for t in d["targets"]),
            warnings=tuple(d.get("warnings", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> ForecastReport:
        return cls.from_dict(json.loads(text))

    def single_variable_rows(self) -> list[dict]:
        return [
            {"target": r.target,
             "cod": {e.feature_name: e.single_var_cod for e in r.screening.entries}}
            for r in self.results
        ]

    def multi_variable_rows(self) -> list[dict]:
        return [
            {"target": r.target, "sets": [nf.to_dict() for nf in r.nested]}
            for r in self.results
        ]

    def tables_text(self) -> str:
        """Human-readable tables: single-feature CoD, nested-set CoD, per-target fits."""
        features = self.data.get("features") or None
        out = ["Coefficient of determination, single feature (training split)\n",
               screening_table([r.screening for r in self.results], features), "\n"]
        for split in ("r2_train", "r2_test"):
            labels: list[str] = []
            for r in self.results:
                for nf in r.nested:
                    if nf.label not in labels:
                        labels.append(nf.label)
            rows = []
            for r in self.results:
                by_label = {nf.label: getattr(nf, split) for nf in r.nested}
                rows.append((r.target, [
                    f"{by_label[lab]:.3f}" if lab in by_label else "n/a" for lab in labels
                ]))
            which = "training" if split == "r2_train" else "test"
            out.append(f"Coefficient of determination, nested feature sets ({which} split)\n")
            out.append(format_table("R-squared", labels, rows))
            out.append("\n")
        rows = [
            (r.target, [", ".join(r.model.feature_names) or "(intercept only)",
                        f"{r.r2_train:.4f}", f"{r.r2_test:.4f}", str(len(r.actual))])
            for r in self.results
        ]
        out.append("Forecast models after backward elimination\n")
        out.append(format_table("target", ["features", "R2 train", "R2 test", "test rows"], rows))
        for w in self.warnings:
            out.append(f"warning: {w}\n")
        return "".join(out)


def load_frame(config: ExperimentConfig) -> TimeSeriesFrame:
    if config.frame is not None:
        frame = parse_csv(config.frame, config.roles)
    else:
        frame = load_streams(
            config.weather, config.power, config.roles,
            shift_minutes=config.shift_minutes, shift_mode=config.shift_mode,
            max_shift_minutes=config.max_shift_minutes,
        )
    if frame.n == 0:
        raise IngestError("aligned frame is empty")
    frame.require_roles()
    return frame


def train_target(train: TimeSeriesFrame, target: str, sl: float) -> EliminationTrace:
    """Backward elimination over every feature column, on training rows only."""
    features = train.features
    design = DesignMatrix.from_features(features, train.matrix(features))
    return backward_eliminate(design, train.column(target), sl)


def _nested_fits(train, test, target, nesting) -> tuple[NestedFit, ...]:
    out = []
    y_train = train.column(target)
    y_test = test.column(target)
    for names in nested_feature_sets(train.features, nesting):
        model = fit(DesignMatrix.from_features(names, train.matrix(names)), y_train)
        r2_test = r_squared(y_test, predict(model, test.matrix(names)))
        out.append(NestedFit(names, model.r2_train, r2_test))
    return tuple(out)


def _lag_scans(train, target, lag_max, warnings) -> tuple[LagScanResult, ...]:
    if train.n < lag_max + 2:
        warnings.append(f"{target}: too few training rows for a lag scan up to {lag_max}")
        return ()
    scans = []
    for name in train.features:
        try:
            scans.append(lag_scan(train, name, target, lag_max))
        except DegenerateTarget:
            warnings.append(f"{target}: lag scan of {name} hit a constant window")
    return tuple(scans)


def run_target(
    train: TimeSeriesFrame, test: TimeSeriesFrame, target: str, config: ExperimentConfig
) -> tuple[TargetResult, list[str]]:
    warnings: list[str] = []
    screening = screen_single(train, target)
    trace = train_target(train, target, config.sl)
    warnings.extend(f"{target}: {w}" for w in trace.warnings)
    model = trace.final_model
    y_test = test.column(target)
    y_hat = predict(model, test.matrix(model.feature_names))
    r2_test = r_squared(y_test, y_hat)
    result = TargetResult(
        target=target,
        screening=screening,
        trace=trace,
        model=model,
        r2_train=model.r2_train,
        r2_test=r2_test,
        timestamps=tuple(test.timestamps.tolist()),
        actual=tuple(y_test.tolist()),
        predicted=tuple(float(v) for v in y_hat),
        nested=_nested_fits(train, test, target, config.nesting),
        lag_scans=_lag_scans(train, target, config.lag_max, warnings),
    )
    return result, warnings


def run_experiment(
    config: ExperimentConfig, jobs: int = 1, frame: TimeSeriesFrame | None = None
) -> ForecastReport:
    """Run every target; output is identical whatever ``jobs`` is."""
    config.validate()
    if frame is None:
        frame = load_frame(config)
    train, test = split_chronological(frame, config.train_fraction)
    targets = config.target_list
    missing = [t for t in targets if t not in frame.columns]
    if missing:
        raise IngestError(f"targets {missing} are not in the aligned data")

    def one(target):
        return run_target(train, test, target, config)

    if jobs > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, targets))
    else:
        outcomes = [one(t) for t in targets]

    warnings = list(frame.warnings)
    for _, w in outcomes:
        warnings.extend(w)
    settings = {
        "shift_minutes": config.shift_minutes,
        "shift_mode": config.shift_mode,
        "sl": config.sl,
        "train_fraction": config.train_fraction,
        "lag_max": config.lag_max,
        "targets": list(targets),
        "nesting": list(config.nesting),
    }
    data = {
        "features": frame.features,
        "rows": frame.n,
        "train_rows": train.n,
        "test_rows": test.n,
        "dropped_rows": frame.dropped,
        "duplicate_timestamps": frame.duplicates,
        "first_timestamp": format_timestamp(frame.timestamps[0]),
        "last_timestamp": format_timestamp(frame.timestamps[-1]),
        "median_step_seconds": frame.median_step_seconds(),
    }
    return ForecastReport(settings, data, tuple(r for r, _ in outcomes), tuple(warnings))


def gap_breaks(timestamps: Sequence[int]) -> list[int]:
    """Row indices that start a new segment after a gap of > 1.5 median steps."""
    ts = np.asarray(timestamps, dtype=np.int64)
    if ts.size < 3:
        return []
    steps = np.diff(ts)
    limit = 1.5 * float(np.median(steps))
    return [int(i) + 1 for i in np.nonzero(steps > limit)[0]]


GNUPLOT_TEMPLATE = """\
# actual vs forecast for {target}; blank lines in the data mark gaps
set datafile separator ","
set xdata time
set timefmt "%Y-%m-%dT%H:%M:%SZ"
set format x "%m-%d\\n%H:%M"
set xlabel "time (UTC)"
set ylabel "{target}"
set title "{target}: test R^2 = {r2:.3f}"
set key top left
set grid
set terminal pngcairo size 1200,500
set output "{png}"
plot "{csv}" using 1:2 skip 1 with lines lw 2 lc rgb "black" title "actual", \\
     "{csv}" using 1:3 skip 1 with lines lw 1 lc rgb "red" title "predicted"
"""


def emit_plot_series(report: ForecastReport, out_dir) -> list[Path]:
    """Write ``<target>_series.csv`` and ``<target>_series.gp`` per target.

    CSV rows are the test set in time order with columns
    timestamp,actual,predicted. A blank line separates segments split by a
    data gap so gnuplot does not draw across it.
    """
    if not report.results:
        raise ValueError("report has no targets")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IngestError(f"cannot create {out}: {exc}") from None
    paths: list[Path] = []
    for r in report.results:
        csv_path = out / f"{r.target}_series.csv"
        gp_path = out / f"{r.target}_series.gp"
        breaks = set(gap_breaks(r.timestamps))
        try:
            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["timestamp", "actual", "predicted"])
                for i, (ts, a, p) in enumerate(r.series()):
                    if i in breaks:
                        fh.write("\n")
                    w.writerow([ts, repr(a), repr(p)])
            gp_path.write_text(
                GNUPLOT_TEMPLATE.format(
                    target=r.target, r2=r.r2_test, csv=csv_path.name,
                    png=f"{r.target}_series.png",
                ),
                encoding="utf-8",
            )
        except OSError as exc:
            raise IngestError(f"cannot write plot series to {out}: {exc}") from None
        paths.extend([csv_path, gp_path])
    return paths


def read_series_csv(path) -> list[tuple[str, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows[0] != ["timestamp", "actual", "predicted"]:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return [(ts, float(a), float(p)) for ts, a, p in rows[1:]]


def write_lag_scans(report: ForecastReport, path) -> Path:
    """All lag scans in one CSV, with the median row spacing for unit conversion."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "feature", "lag_steps", "pearson_r", "is_best",
                    "median_step_seconds"])
        for r in report.results:
            for scan in r.lag_scans:
                best = scan.best_lag
                for k, rv in scan.lags:
                    w.writerow([r.target, scan.feature, k, repr(rv), int(k == best),
                                scan.median_step_seconds])
    return path


def write_table_csvs(report: ForecastReport, out_dir) -> list[Path]:
    """Delimited versions of the single- and nested-feature CoD tables."""
    out = Path(out_dir)
    single = out / "single_variable_cod.csv"
    features = report.data.get("features") or sorted(
        {e.feature_name for r in report.results for e in r.screening.entries}
    )
    with open(single, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", *features])
        for r in report.results:
            cods = {e.feature_name: e.single_var_cod for e in r.screening.entries}
            w.writerow([r.target, *("" if cods.get(f) is None else repr(cods[f]) for f in features)])
    multi = out / "multi_variable_cod.csv"
    with open(multi, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "feature_set", "r2_train", "r2_test"])
        for r in report.results:
            for nf in r.nested:
                w.writerow([r.target, "+".join(nf.features), repr(nf.r2_train), repr(nf.r2_test)])
    return [single, multi]
