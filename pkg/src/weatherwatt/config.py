"""Plain-text ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored. Later duplicates of a
key override earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from weatherwatt.errors import ConfigError
from weatherwatt.ingest import DEFAULT_MAX_SHIFT_MINUTES, ROLES

DEFAULT_NESTING = (
    "dew_point_temperature",
    "wind_chill",
    "atmospheric_pressure",
    "relative_humidity",
    "rainfall",
)


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_kv(text, str(path))


def parse_roles(text: str, source: str = "<roles>") -> dict[str, str]:
    roles = parse_kv(text, source)
    for name, role in roles.items():
        if role not in ROLES:
            raise ConfigError(f"{source}: role of {name!r} must be feature or target, got {role!r}")
    if not any(r == "feature" for r in roles.values()):
        raise ConfigError(f"{source}: no feature columns")
    if not any(r == "target" for r in roles.values()):
        raise ConfigError(f"{source}: no target columns")
    return roles


def read_roles(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_roles(text, str(path))


def format_roles(roles: Mapping[str, str]) -> str:
    return "".join(f"{name} = {role}\n" for name, role in roles.items())


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    weather: Path | None = None
    power: Path | None = None
    frame: Path | None = None
    roles: Mapping[str, str] = field(default_factory=dict)
    shift_minutes: float = 5.0
    shift_mode: str = "unmatched"
    max_shift_minutes: float = DEFAULT_MAX_SHIFT_MINUTES
    sl: float = 0.05
    train_fraction: float = 0.8
    lag_max: int = 12
    targets: tuple[str, ...] = ()
    nesting: tuple[str, ...] = DEFAULT_NESTING

    def validate(self) -> ExperimentConfig:
        if not 0.0 < self.sl < 1.0:
            raise ConfigError(f"sl must be in (0, 1), got {self.sl}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train fraction must be in (0, 1), got {self.train_fraction}")
        if self.lag_max < 0:
            raise ConfigError(f"lag_max must be non-negative, got {self.lag_max}")
        if self.max_shift_minutes < 0:
            raise ConfigError("max_shift_minutes must be non-negative")
        if abs(self.shift_minutes) > self.max_shift_minutes:
            raise ConfigError(
                f"shift of {self.shift_minutes} min exceeds the "
                f"{self.max_shift_minutes} min maximum"
            )
        if self.shift_mode not in ("unmatched", "all"):
            raise ConfigError(f"shift_mode must be 'unmatched' or 'all', got {self.shift_mode!r}")
        if self.frame is None and (self.weather is None or self.power is None):
            raise ConfigError("need either a frame file or both weather and power files")
        if not self.roles:
            raise ConfigError("no column roles given")
        for t in self.targets:
            if self.roles.get(t) != "target":
                raise ConfigError(f"{t!r} is not tagged as a target column")
        return self

    @property
    def target_list(self) -> tuple[str, ...]:
        if self.targets:
            return self.targets
        return tuple(c for c, r in self.roles.items() if r == "target")

    def updated(self, **overrides) -> ExperimentConfig:
        """Copy with the non-None overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def _number(key: str, value: str, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: not a valid {kind.__name__}: {value!r}") from None


def config_from_kv(kv: Mapping[str, str], base_dir: Path | None = None) -> dict:
    """Translate raw key/value pairs into ExperimentConfig keyword arguments.

    Relative paths resolve against ``base_dir`` (the config file's folder).
    """
    base = Path(base_dir) if base_dir is not None else Path(".")
    out: dict = {}
    for key, value in kv.items():
        k = key.replace("-", "_")
        if k == "split":
            k = "train_fraction"
        if k not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r}")
        if k in ("weather", "power", "frame"):
            out[k] = base / value
        elif k == "roles":
            out[k] = read_roles(base / value)
        elif k in ("shift_minutes", "max_shift_minutes", "sl", "train_fraction"):
            out[k] = _number(key, value)
        elif k == "lag_max":
            out[k] = _number(key, value, int)
        elif k in ("targets", "nesting"):
            out[k] = _split_list(value)
        else:
            out[k] = value
    return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig(**config_from_kv(read_kv(path), path.parent))
