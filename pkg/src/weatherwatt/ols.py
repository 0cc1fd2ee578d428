"""Multivariable linear regression fitted with the normal equation.

The hypothesis is ``h(x) = theta_0 + theta_1 x_1 + ... + theta_m x_m``, the
cost is ``J = 1/(2n) * sum (h(x_i) - y_i)^2`` and the minimiser comes from
``theta = (X^T X)^-1 X^T y`` with a leading column of ones in ``X``.
Per-coefficient p-values are two-sided t-tests on ``n - m - 1`` degrees of
freedom.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from weatherwatt.errors import DegenerateTarget
from weatherwatt.matrix import Matrix, normal_equation
from weatherwatt.tdist import t_two_sided_p


@dataclass(frozen=True)
class DesignMatrix:
    """Feature matrix with the bias column of ones prepended."""

    feature_names: tuple[str, ...]
    x: Matrix

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.x.cols != len(self.feature_names) + 1:
            raise ValueError(
                f"design has {self.x.cols} columns for {len(self.feature_names)} features"
            )
        if self.x.rows and not np.all(self.x.to_numpy()[:, 0] == 1.0):
            raise ValueError("first design column must be all ones")
        if self.n < self.m + 2:
            raise ValueError(
                f"need at least {self.m + 2} rows for {self.m} features, got {self.n}"
            )

    @classmethod
    def from_features(cls, names: Sequence[str], features) -> DesignMatrix:
        """Build from an ``n x m`` array of raw feature values."""
        f = np.asarray(features, dtype=np.float64)
        if f.ndim == 1:
            f = f.reshape(-1, 1) if len(names) == 1 else f.reshape(-1, len(names))
        if f.shape[1] != len(names):
            raise ValueError(f"{len(names)} names for {f.shape[1]} feature columns")
        x = np.hstack([np.ones((f.shape[0], 1)), f])
        return cls(tuple(names), Matrix(x))

    @property
    def n(self) -> int:
        return self.x.rows

    @property
    def m(self) -> int:
        return len(self.feature_names)

    @property
    def features(self) -> np.ndarray:
        return self.x.to_numpy()[:, 1:]

    def subset(self, names: Sequence[str]) -> DesignMatrix:
        idx = [self.feature_names.index(nm) for nm in names]
        return DesignMatrix.from_features(list(names), self.features[:, idx])


@dataclass(frozen=True)
class FittedModel:
    feature_names: tuple[str, ...]
    theta: tuple[float, ...]
    std_errors: tuple[float, ...]
    t_stats: tuple[float, ...]
    p_values: tuple[float, ...]
    df: int
    r2_train: float
    train_cost: float
    residual_variance: float = field(default=0.0)

    @property
    def intercept(self) -> float:
        return self.theta[0]

    def coefficient(self, name: str) -> float:
        return self.theta[1 + self.feature_names.index(name)]

    def feature_p_values(self) -> dict[str, float]:
        """p-values of the non-intercept coefficients."""
        return dict(zip(self.feature_names, self.p_values[1:]))

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "theta": list(self.theta),
            "std_errors": list(self.std_errors),
            # exact fits give infinite t; JSON has no literal for that
            "t_stats": [v if math.isfinite(v) else None for v in self.t_stats],
            "p_values": list(self.p_values),
            "df": self.df,
            "r2_train": self.r2_train,
            "train_cost": self.train_cost,
            "residual_variance": self.residual_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FittedModel:
        return cls(
            feature_names=tuple(d["feature_names"]),
            theta=tuple(float(v) for v in d["theta"]),
            std_errors=tuple(float(v) for v in d["std_errors"]),
            t_stats=tuple(
                float(v) if v is not None else math.copysign(math.inf, th)
                for v, th in zip(d["t_stats"], d["theta"])
            ),
            p_values=tuple(float(v) for v in d["p_values"]),
            df=int(d["df"]),
            r2_train=float(d["r2_train"]),
            train_cost=float(d["train_cost"]),
            residual_variance=float(d.get("residual_variance", 0.0)),
        )

    def to_json(self) -> str:
        # float repr is the shortest literal that round-trips exactly
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> FittedModel:
        return cls.from_dict(json.loads(text))


def _as_vector(y) -> np.ndarray:
    v = np.asarray(y, dtype=np.float64)
    if v.ndim == 2 and v.shape[1] == 1:
        v = v[:, 0]
    if v.ndim != 1:
        raise ValueError("target must be a vector")
    return v


def cost(theta, design: DesignMatrix, y) -> float:
    """Mean squared error cost with the 1/2 factor: sum(r^2) / (2n)."""
    th = _as_vector(theta)
    yv = _as_vector(y)
    if th.size != design.x.cols:
        raise ValueError(f"theta has {th.size} entries, design has {design.x.cols} columns")
    if yv.size != design.n:
        raise ValueError(f"y has {yv.size} entries, design has {design.n} rows")
    r = design.x.to_numpy() @ th - yv
    return float(r @ r) / (2.0 * design.n)


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot.

    Can be negative for out-of-sample predictions worse than the mean.
    """
    yt = _as_vector(y_true)
    yp = _as_vector(y_pred)
    if yt.size != yp.size:
        raise ValueError(f"length mismatch: {yt.size} vs {yp.size}")
    if yt.size < 2:
        raise ValueError("need at least two observations")
    ss_tot = float(np.sum((yt - yt.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateTarget("target is constant; CoD is undefined")
    ss_res = float(np.sum((yt - yp) ** 2))
    return 1.0 - ss_res / ss_tot


def fit(design: DesignMatrix, y) -> FittedModel:
    """Least-squares fit through the normal equation, with coefficient inference.

    A constant target yields r2_train = 1 only when the residuals vanish;
    otherwise DegenerateTarget is raised.
    """
    yv = _as_vector(y)
    if yv.size != design.n:
        raise ValueError(f"y has {yv.size} entries, design has {design.n} rows")
    x = design.x
    theta_m, xtx_inv = normal_equation(x, Matrix.column(yv))
    theta = theta_m.to_numpy()[:, 0]

    fitted = x.to_numpy() @ theta
    resid = yv - fitted
    ss_res = float(resid @ resid)
    n, m = design.n, design.m
    df = n - m - 1
    sigma2 = ss_res / df

    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    if ss_tot == 0.0:
        if ss_res != 0.0:
            raise DegenerateTarget("target is constant but residuals are non-zero")
        r2 = 1.0
    else:
        # an intercept model cannot do worse than the mean; clamp roundoff
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))

    diag = np.diag(xtx_inv.to_numpy())
    se = np.sqrt(np.maximum(sigma2 * diag, 0.0))
    t_stats, p_values = [], []
    for coef, s in zip(theta, se):
        if s > 0.0:
            t = float(coef / s)
        else:
            # Exact fit: any non-zero coefficient is infinitely significant.
            t = 0.0 if coef == 0.0 else math.copysign(math.inf, coef)
        t_stats.append(float(t))
        p_values.append(float(t_two_sided_p(t, df)))

    return FittedModel(
        feature_names=design.feature_names,
        theta=tuple(float(v) for v in theta),
        std_errors=tuple(float(v) for v in se),
        t_stats=tuple(t_stats),
        p_values=tuple(p_values),
        df=df,
        r2_train=float(r2),
        train_cost=ss_res / (2.0 * n),
        residual_variance=float(sigma2),
    )


def predict(model: FittedModel, features) -> np.ndarray:
    """Evaluate the hypothesis on an ``n' x m`` matrix of raw features."""
    f = np.asarray(features, dtype=np.float64)
    m = len(model.feature_names)
    if f.ndim == 1:
        f = f.reshape(-1, m) if m else f.reshape(-1, 0)
    if f.ndim != 2 or f.shape[1] != m:
        raise ValueError(f"model expects {m} features, got shape {f.shape}")
    theta = np.asarray(model.theta)
    return theta[0] + f @ theta[1:]
