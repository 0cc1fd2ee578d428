"""Seeded synthetic weather and power telemetry.

Random numbers come from the PCG64 (XSL-RR 128/64) bit generator seeded with
``numpy.random.PCG64(seed)``. Each raw 64-bit output ``w`` becomes the uniform
``(w >> 11) * 2**-53``; standard normals are produced in pairs by Box-Muller,
``r = sqrt(-2 ln(1 - u1))``, ``z0 = r cos(2 pi u2)``, ``z1 = r sin(2 pi u2)``.
Draws are consumed in a fixed order:

1. feature noise, ``(n + max_lag) x n_features`` normals, row-major;
2. target noise, ``n x n_targets`` normals, row-major;
3. ``n`` gap uniforms, then ``n`` uniforms choosing the stream that loses the row;
4. ``n`` desync uniforms.

Feature ``f`` at time ``t`` is ``base + amplitude * sin(2 pi (h(t) - phase) / 24)
+ noise * z`` with ``h(t)`` the UTC hour of day. Target ``g`` at row ``i`` is
``bias + sum_f w_f * f[i - lag] + noise * z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from weatherwatt.config import parse_kv, read_kv
from weatherwatt.errors import ConfigError
from weatherwatt.ingest import format_timestamp, parse_timestamp

DEFAULT_START = "2017-03-01T00:00:00Z"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    base: float = 0.0
    amplitude: float = 0.0
    noise: float = 1.0
    phase: float = 0.0  # hour of the diurnal peak minus 6

    def population_variance(self) -> float:
        """Variance of the feature over whole days: amplitude^2 / 2 + noise^2."""
        return 0.5 * self.amplitude**2 + self.noise**2


@dataclass(frozen=True)
class TargetSpec:
    name: str
    weights: Mapping[str, float]
    bias: float = 0.0
    noise: float = 1.0
    lag: int = 0


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int
    n: int
    features: tuple[FeatureSpec, ...]
    targets: tuple[TargetSpec, ...]
    period_minutes: int = 10
    start: str = DEFAULT_START
    gap_probability: float = 0.0
    desync_probability: float = 0.0
    desync_minutes: int = 5

    def validate(self) -> GeneratorSpec:
        if self.n < 1:
            raise ConfigError(f"n must be positive, got {self.n}")
        if self.period_minutes <= 0:
            raise ConfigError("period must be positive")
        if not 0.0 <= self.gap_probability < 1.0:
            raise ConfigError(f"gap probability must be in [0, 1), got {self.gap_probability}")
        if not 0.0 <= self.desync_probability <= 1.0:
            raise ConfigError(
                f"desync probability must be in [0, 1], got {self.desync_probability}"
            )
        if not self.features or not self.targets:
            raise ConfigError("need at least one feature and one target")
        names = [f.name for f in self.features] + [t.name for t in self.targets]
        if len(set(names)) != len(names) or "timestamp" in names:
            raise ConfigError("column names must be unique and not 'timestamp'")
        feature_names = {f.name for f in self.features}
        for t in self.targets:
            if t.lag < 0:
                raise ConfigError(f"{t.name}: lag must be non-negative")
            unknown = set(t.weights) - feature_names
            if unknown:
                raise ConfigError(f"{t.name}: weights for unknown features {sorted(unknown)}")
        for f in self.features:
            if f.noise < 0:
                raise ConfigError(f"{f.name}: noise must be non-negative")
        parse_timestamp(self.start)
        return self

    @property
    def roles(self) -> dict[str, str]:
        out = {f.name: "feature" for f in self.features}
        out.update({t.name: "target" for t in self.targets})
        return out


def calibrated_weight(cod: float, feature_variance: float, noise_std: float) -> float:
    """Weight giving a single-feature target the requested population CoD.

    With ``y = w x + e``, CoD = w^2 var(x) / (w^2 var(x) + var(e)).
    """
    if not 0.0 < cod < 1.0:
        raise ValueError("cod must be in (0, 1)")
    return math.sqrt(cod * noise_std**2 / ((1.0 - cod) * feature_variance))


def population_cod(spec: GeneratorSpec, target: str, feature: str) -> float:
    """Analytic squared correlation between one feature and a target.

    Assumes features are uncorrelated apart from their shared diurnal sine and
    that sampling covers whole days.
    """
    tspec = next(t for t in spec.targets if t.name == target)
    fmap = {f.name: f for f in spec.features}
    x = fmap[feature]

    lag_hours = tspec.lag * spec.period_minutes / 60.0

    def cov(a: FeatureSpec, b: FeatureSpec, shift: float = 0.0) -> float:
        # covariance of a at time t with b at time t - shift hours
        c = 0.5 * a.amplitude * b.amplitude * math.cos(
            2 * math.pi * (b.phase - a.phase + shift) / 24
        )
        if a.name == b.name and shift == 0.0:
            c += a.noise**2
        return c

    names = list(tspec.weights)
    w = np.array([tspec.weights[nm] for nm in names])
    cmat = np.array([[cov(fmap[a], fmap[b]) for b in names] for a in names])
    var_y = float(w @ cmat @ w) + tspec.noise**2
    cov_xy = sum(tspec.weights[nm] * cov(x, fmap[nm], lag_hours) for nm in names)
    return cov_xy**2 / (x.population_variance() * var_y)


class _Stream:
    """Uniform and normal draws from a PCG64 raw stream."""

    def __init__(self, seed: int):
        self._bg = np.random.PCG64(seed)

    def uniform(self, count: int) -> np.ndarray:
        if count == 0:
            return np.empty(0)
        raw = np.asarray(self._bg.random_raw(count), dtype=np.uint64)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, count: int) -> np.ndarray:
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        z = np.column_stack([r * np.cos(ang), r * np.sin(ang)]).ravel()
        return z[:count]


def _csv_bytes(columns, stamps, values) -> bytes:
    lines = [",".join(["timestamp", *columns])]
    for ts, row in zip(stamps, values):
        lines.append(",".join([format_timestamp(ts), *(repr(float(v)) for v in row)]))
    return ("\n".join(lines) + "\n").encode("utf-8")


def generate(spec: GeneratorSpec) -> tuple[bytes, bytes]:
    """Weather and power CSV bytes for ``spec``; the output depends on ``spec`` alone."""
    spec.validate()
    rng = _Stream(spec.seed)
    n = spec.n
    max_lag = max(t.lag for t in spec.targets)
    k = len(spec.features)
    step = spec.period_minutes * 60
    start = parse_timestamp(spec.start)

    # internal rows -max_lag .. n-1 so lagged targets have history
    times = start + step * np.arange(-max_lag, n, dtype=np.int64)
    hours = (times % 86400) / 3600.0
    feat_noise = rng.normal((n + max_lag) * k).reshape(n + max_lag, k)
    feats = np.empty((n + max_lag, k))
    for j, f in enumerate(spec.features):
        diurnal = f.amplitude * np.sin(2 * np.pi * (hours - f.phase) / 24.0)
        feats[:, j] = f.base + diurnal + f.noise * feat_noise[:, j]

    targ_noise = rng.normal(n * len(spec.targets)).reshape(n, len(spec.targets))
    fidx = {f.name: j for j, f in enumerate(spec.features)}
    targs = np.empty((n, len(spec.targets)))
    for j, t in enumerate(spec.targets):
        y = np.full(n, t.bias, dtype=np.float64)
        for name, w in t.weights.items():
            rows = np.arange(n) + max_lag - t.lag
            y = y + w * feats[rows, fidx[name]]
        targs[:, j] = y + t.noise * targ_noise[:, j]

    gap_u = rng.uniform(n)
    side_u = rng.uniform(n)
    desync_u = rng.uniform(n)

    stamps = times[max_lag:]
    gap = gap_u < spec.gap_probability
    keep_weather = ~(gap & (side_u < 0.5))
    keep_power = ~(gap & (side_u >= 0.5))
    power_stamps = np.where(
        desync_u < spec.desync_probability, stamps + spec.desync_minutes * 60, stamps
    )

    weather = _csv_bytes(
        [f.name for f in spec.features], stamps[keep_weather].tolist(), feats[max_lag:][keep_weather]
    )
    power = _csv_bytes(
        [t.name for t in spec.targets], power_stamps[keep_power].tolist(), targs[keep_power]
    )
    return weather, power


def default_spec(seed: int = 42, n: int = 2000) -> GeneratorSpec:
    """Five weather features and two power targets with the usual sensor column names.

    Active power depends on wind chill alone with weight chosen for a
    population single-feature CoD of 0.519; reactive power mixes wind chill and
    dew point and responds two rows late.
    """
    wind_chill = FeatureSpec("wind_chill", base=12.0, amplitude=5.0, noise=2.0, phase=9.0)
    features = (
        FeatureSpec("atmospheric_pressure", base=1013.0, amplitude=0.0, noise=3.0),
        FeatureSpec("dew_point_temperature", base=8.0, amplitude=3.0, noise=1.5, phase=9.0),
        FeatureSpec("rainfall", base=0.3, amplitude=0.0, noise=0.2),
        FeatureSpec("relative_humidity", base=65.0, amplitude=12.0, noise=6.0, phase=21.0),
        wind_chill,
    )
    active_noise = 4.0
    targets = (
        TargetSpec(
            "active_power",
            {"wind_chill": calibrated_weight(0.519, wind_chill.population_variance(), active_noise)},
            bias=30.0, noise=active_noise,
        ),
        TargetSpec(
            "reactive_power",
            {"wind_chill": 0.6, "dew_point_temperature": 0.5},
            bias=10.0, noise=2.0, lag=2,
        ),
    )
    return GeneratorSpec(
        seed=seed, n=n, features=features, targets=targets,
        gap_probability=0.02, desync_probability=0.05,
    )


_FEATURE_KEYS = {"base", "amplitude", "noise", "phase"}
_TARGET_KEYS = {"bias", "noise", "lag"}


def _parse_params(text: str, where: str) -> dict[str, str]:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"{where}: expected name=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _float(where: str, v: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{where}: not a number: {v!r}") from None


def _int(where: str, v: str) -> int:
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{where}: not an integer: {v!r}") from None


def spec_from_kv(kv: Mapping[str, str]) -> GeneratorSpec:
    """Build a spec from ``key = value`` pairs.

    Scalar keys: seed, n, period_minutes, start, gap_probability,
    desync_probability, desync_minutes. Columns are declared as
    ``feature.NAME = base=.., amplitude=.., noise=.., phase=..`` and
    ``target.NAME = bias=.., noise=.., lag=.., FEATURE=WEIGHT, ...``.
    """
    scalars: dict = {}
    features: list[FeatureSpec] = []
    targets: list[TargetSpec] = []
    for key, value in kv.items():
        if key.startswith("feature."):
            name = key[len("feature."):]
            params = _parse_params(value, key)
            bad = set(params) - _FEATURE_KEYS
            if bad:
                raise ConfigError(f"{key}: unknown parameters {sorted(bad)}")
            features.append(FeatureSpec(name, **{k: _float(key, v) for k, v in params.items()}))
        elif key.startswith("target."):
            name = key[len("target."):]
            params = _parse_params(value, key)
            kwargs = {}
            weights = {}
            for k, v in params.items():
                if k == "lag":
                    kwargs[k] = _int(key, v)
                elif k in _TARGET_KEYS:
                    kwargs[k] = _float(key, v)
                else:
                    weights[k] = _float(key, v)
            targets.append(TargetSpec(name, weights, **kwargs))
        elif key in ("seed", "n", "period_minutes", "desync_minutes"):
            scalars[key] = _int(key, value)
        elif key in ("gap_probability", "desync_probability"):
            scalars[key] = _float(key, value)
        elif key == "start":
            scalars[key] = value
        else:
            raise ConfigError(f"unknown generator key {key!r}")
    if "seed" not in scalars or "n" not in scalars:
        raise ConfigError("generator spec needs seed and n")
    if not features and not targets:
        base = default_spec(scalars["seed"], scalars["n"])
        features, targets = list(base.features), list(base.targets)
    return GeneratorSpec(features=tuple(features), targets=tuple(targets), **scalars).validate()


def parse_spec(text: str) -> GeneratorSpec:
    return spec_from_kv(parse_kv(text, "<generator spec>"))


def load_spec(path) -> GeneratorSpec:
    return spec_from_kv(read_kv(path))


def format_spec(spec: GeneratorSpec) -> str:
    """Inverse of ``parse_spec``; floats written with round-trip precision."""
    lines = [
        f"seed = {spec.seed}",
        f"n = {spec.n}",
        f"period_minutes = {spec.period_minutes}",
        f"start = {spec.start}",
        f"gap_probability = {spec.gap_probability!r}",
        f"desync_probability = {spec.desync_probability!r}",
        f"desync_minutes = {spec.desync_minutes}",
    ]
    for f in spec.features:
        lines.append(
            f"feature.{f.name} = base={f.base!r}, amplitude={f.amplitude!r}, "
            f"noise={f.noise!r}, phase={f.phase!r}"
        )
    for t in spec.targets:
        weights = ", ".join(f"{k}={float(v)!r}" for k, v in t.weights.items())
        lines.append(
            f"target.{t.name} = bias={t.bias!r}, noise={t.noise!r}, lag={t.lag}, {weights}"
        )
    return "\n".join(lines) + "\n"
