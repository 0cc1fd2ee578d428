"""Student-t cumulative distribution via the regularized incomplete beta."""

from __future__ import annotations

import math

from weatherwatt.errors import ConvergenceError

CF_TOL = 1e-12
CF_MAX_ITER = 300
_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge in {CF_MAX_ITER} "
        f"iterations (a={a}, b={b}, x={x})"
    )


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # The continued fraction converges fast only on this side of the mean.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_tail(t: float, df: float) -> float:
    """P(T <= -|t|), the one-sided lower tail of the absolute value."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    # I_{df/(df+t^2)}(df/2, 1/2) equals P(|T| > |t|).
    x = df / (df + t2)
    if x >= 1.0:
        return 0.5
    return 0.5 * betainc(0.5 * df, 0.5, x)


def t_cdf(t: float, df: float) -> float:
    """Cumulative distribution function of Student's t with ``df`` degrees of freedom."""
    if math.isnan(t):
        raise ValueError("t is NaN")
    tail = t_tail(t, df)
    return tail if t < 0 else 1.0 - tail


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value 2 * (1 - T_df(|t|)), clamped into [0, 1]."""
    return min(1.0, max(0.0, 2.0 * t_tail(t, df)))
