"""Command-line front end.

Exit codes: 0 success, 1 user or configuration error, 2 numerical failure.
Settings resolve as flags > ``--config`` file > built-in defaults. Outputs go
to ``--out`` (or ``$WEATHERWATT_OUT``), never next to the inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from weatherwatt import __version__
from weatherwatt.config import (
    ExperimentConfig,
    config_from_kv,
    format_roles,
    read_kv,
    read_roles,
)
from weatherwatt.errors import (
    ConfigError,
    EliminationAborted,
    InputError,
    NumericalError,
    WeatherWattError,
)

log = logging.getLogger("weatherwatt")

OUT_ENV = "WEATHERWATT_OUT"
EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical failure here
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _unit_interval(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {v}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _data_args(p: argparse.ArgumentParser, experiment: bool = True) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--config", type=Path, help="experiment config file (key = value)")
    g.add_argument("--weather", type=Path, help="weather sensor CSV")
    g.add_argument("--power", type=Path, help="power sensor CSV")
    g.add_argument("--frame", type=Path, help="already aligned CSV (skips the join)")
    g.add_argument("--roles", type=Path, help="column role file (name = feature|target)")
    g.add_argument("--shift-minutes", type=float,
                   help="signed correction for power timestamps (default 5)")
    g.add_argument("--shift-mode", choices=("unmatched", "all"),
                   help="shift only power rows without a weather partner, or all rows")
    g.add_argument("--max-shift-minutes", type=float, help="largest allowed |shift| (default 60)")
    if experiment:
        g.add_argument("--target", action="append", dest="targets",
                       help="target column (repeatable; default all targets)")
        g.add_argument("--sl", type=_unit_interval, help="significance level to stay (default 0.05)")
        g.add_argument("--split", type=_unit_interval, dest="train_fraction",
                       help="training fraction (default 0.8)")
        g.add_argument("--lag-max", type=_nonneg_int, help="largest lag in rows (default 12)")


def _out_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help=f"output directory (fallback ${OUT_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="weatherwatt",
        description="Forecast data-center power draw from weather sensors with linear regression.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate seeded synthetic weather and power CSVs")
    p.add_argument("--seed", type=int, help="random seed (default 42)")
    p.add_argument("--n", type=_positive_int, help="rows to generate (default 2000)")
    p.add_argument("--spec", type=Path, help="generator spec file (key = value)")
    _out_arg(p)

    p = sub.add_parser("ingest", parents=[common], help="parse, shift-correct and join the sensor streams")
    _data_args(p, experiment=False)
    _out_arg(p)

    p = sub.add_parser("screen", parents=[common], help="rank features by single-variable CoD per target")
    _data_args(p)
    _out_arg(p)

    p = sub.add_parser("train", parents=[common], help="backward elimination and final fit on the training split")
    _data_args(p)
    _out_arg(p)

    p = sub.add_parser("forecast", parents=[common], help="full experiment: report JSON, tables, plot series")
    _data_args(p)
    p.add_argument("--jobs", type=_positive_int, default=1, help="targets processed in parallel")
    _out_arg(p)

    p = sub.add_parser("report", parents=[common], help="tables and figures from a forecast report JSON")
    p.add_argument("report", type=Path, help="report.json written by 'forecast'")
    p.add_argument("--no-figures", action="store_true", help="skip the matplotlib PNGs")
    _out_arg(p)
    return parser


def _out_dir(args) -> Path:
    out = args.out or (Path(os.environ[OUT_ENV]) if os.environ.get(OUT_ENV) else None)
    if out is None:
        raise ConfigError(f"no output directory: pass --out or set {OUT_ENV}")
    return out


def _prepare_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def resolve_config(args) -> ExperimentConfig:
    """Merge defaults, the config file and command-line flags, then validate."""
    kwargs: dict = {}
    if args.config is not None:
        kwargs.update(config_from_kv(read_kv(args.config), args.config.parent))
    flags = {
        "weather": args.weather,
        "power": args.power,
        "frame": args.frame,
        "roles": read_roles(args.roles) if args.roles is not None else None,
        "shift_minutes": args.shift_minutes,
        "shift_mode": args.shift_mode,
        "max_shift_minutes": args.max_shift_minutes,
    }
    for key in ("sl", "train_fraction", "lag_max"):
        flags[key] = getattr(args, key, None)
    if getattr(args, "targets", None):
        flags["targets"] = tuple(args.targets)
    kwargs.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig(**kwargs).validate()


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def cmd_synth(args) -> list[Path]:
    from weatherwatt.synth import default_spec, format_spec, generate, load_spec

    spec = load_spec(args.spec) if args.spec else default_spec()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n is not None:
        overrides["n"] = args.n
    if overrides:
        from dataclasses import replace

        spec = replace(spec, **overrides)
    spec.validate()
    out = _prepare_out(_out_dir(args))
    weather, power = generate(spec)
    (out / "weather.csv").write_bytes(weather)
    (out / "power.csv").write_bytes(power)
    paths = [out / "weather.csv", out / "power.csv"]
    paths.append(_write(out / "roles.cfg", format_roles(spec.roles)))
    paths.append(_write(out / "generator.cfg", format_spec(spec)))
    paths.append(_write(out / "exp.cfg", (
        "# experiment over the generated streams\n"
        "weather = weather.csv\n"
        "power = power.csv\n"
        "roles = roles.cfg\n"
        f"# generated power rows run {spec.desync_minutes} min late; undo that\n"
        f"shift_minutes = {-spec.desync_minutes}\n"
    )))
    return paths


def cmd_ingest(args) -> list[Path]:
    from weatherwatt.pipeline import load_frame

    cfg = resolve_config(args)
    out = _out_dir(args)
    frame = load_frame(cfg)
    _prepare_out(out)
    summary = {
        "rows": frame.n,
        "columns": list(frame.columns),
        "roles": dict(frame.roles),
        "dropped_rows": frame.dropped,
        "duplicate_timestamps": frame.duplicates,
        "median_step_seconds": frame.median_step_seconds(),
        "warnings": list(frame.warnings),
    }
    return [
        frame.to_csv(out / "aligned.csv"),
        _write(out / "roles.cfg", format_roles(frame.roles)),
        _write(out / "ingest.json", json.dumps(summary, indent=2) + "\n"),
    ]


def cmd_screen(args) -> list[Path]:
    from weatherwatt.ingest import split_chronological
    from weatherwatt.pipeline import load_frame
    from weatherwatt.selection import screen_single, screening_table

    cfg = resolve_config(args)
    out = _out_dir(args)
    frame = load_frame(cfg)
    train, _ = split_chronological(frame, cfg.train_fraction)
    reports = [screen_single(train, t) for t in cfg.target_list]
    _prepare_out(out)
    return [
        _write(out / "screening.json",
               json.dumps([r.to_dict() for r in reports], indent=2) + "\n"),
        _write(out / "screening.txt", screening_table(reports, frame.features)),
    ]


def cmd_train(args) -> list[Path]:
    from weatherwatt.ingest import split_chronological
    from weatherwatt.pipeline import load_frame, train_target

    cfg = resolve_config(args)
    out = _out_dir(args)
    frame = load_frame(cfg)
    train, _ = split_chronological(frame, cfg.train_fraction)
    traces = {t: train_target(train, t, cfg.sl) for t in cfg.target_list}
    _prepare_out(out)
    paths = []
    for target, trace in traces.items():
        paths.append(_write(out / f"{target}_model.json", trace.final_model.to_json() + "\n"))
        paths.append(_write(out / f"{target}_trace.json",
                            json.dumps(trace.to_dict(), indent=2) + "\n"))
        paths.append(_write(out / f"{target}_trace.txt", trace.to_text()))
    return paths


def cmd_forecast(args) -> list[Path]:
    from weatherwatt.pipeline import emit_plot_series, run_experiment, write_lag_scans

    cfg = resolve_config(args)
    out = _out_dir(args)
    report = run_experiment(cfg, jobs=args.jobs)
    _prepare_out(out)
    paths = [
        _write(out / "report.json", report.to_json()),
        _write(out / "tables.txt", report.tables_text()),
        write_lag_scans(report, out / "lag_scan.csv"),
    ]
    paths.extend(emit_plot_series(report, out))
    return paths


def cmd_report(args) -> list[Path]:
    from weatherwatt.pipeline import ForecastReport, write_table_csvs

    try:
        text = args.report.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.report}: {exc}") from None
    try:
        report = ForecastReport.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{args.report}: not a valid forecast report: {exc}") from None
    out = _prepare_out(_out_dir(args))
    tables = report.tables_text()
    paths = [_write(out / "tables.txt", tables)]
    paths.extend(write_table_csvs(report, out))
    if not args.no_figures:
        from weatherwatt.plotting import render_report_figures

        paths.extend(render_report_figures(report, out))
    sys.stdout.write(tables)
    return paths


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "screen": cmd_screen,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USER
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        paths = COMMANDS[args.command](args)
    except EliminationAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        for r in exc.trace.rounds:
            print(f"  completed round: removed {r.removed_feature}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, WeatherWattError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
