import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import t_cdf_quadrature
from weatherwatt.errors import ConvergenceError
from weatherwatt.tdist import betainc, t_cdf, t_two_sided_p
import weatherwatt.tdist as tdist


@pytest.mark.parametrize("df", [1, 2, 5, 30, 1000])
def test_zero_is_median(df):
    assert t_cdf(0.0, df) == 0.5


def test_textbook_quantile():
    assert abs(t_cdf(2.228, 10) - 0.975) < 1e-4
    assert abs(t_cdf(2.228, 10) - t_cdf_quadrature(2.228, 10)) < 1e-10


def test_cauchy_closed_form():
    # df = 1 is the Cauchy distribution: F(t) = 1/2 + atan(t)/pi
    for t in (-50.0, -3.0, -0.2, 0.7, 4.0, 1e3):
        assert abs(t_cdf(t, 1) - (0.5 + math.atan(t) / math.pi)) < 1e-13


def test_df2_closed_form():
    for t in (-5.0, -1.0, 0.3, 2.5, 10.0):
        want = 0.5 + t / (2 * math.sqrt(2 + t * t))
        assert abs(t_cdf(t, 2) - want) < 1e-13


@given(st.floats(-40, 40), st.integers(1, 200))
def test_symmetry(t, df):
    assert abs(t_cdf(-t, df) - (1.0 - t_cdf(t, df))) < 1e-12


@given(st.floats(-20, 20), st.floats(-20, 20), st.integers(1, 60))
def test_monotone(a, b, df):
    lo, hi = sorted((a, b))
    assert t_cdf(lo, df) <= t_cdf(hi, df)


@given(st.floats(-1e6, 1e6), st.integers(1, 500))
def test_range(t, df):
    assert 0.0 <= t_cdf(t, df) <= 1.0
    assert 0.0 <= t_two_sided_p(t, df) <= 1.0


def test_infinite_t():
    assert t_cdf(math.inf, 5) == 1.0
    assert t_cdf(-math.inf, 5) == 0.0
    assert t_two_sided_p(math.inf, 5) == 0.0


def test_betainc_endpoints_and_symmetry():
    assert betainc(2.0, 3.0, 0.0) == 0.0
    assert betainc(2.0, 3.0, 1.0) == 1.0
    for x in (0.1, 0.4, 0.8):
        assert abs(betainc(2.5, 1.5, x) + betainc(1.5, 2.5, 1 - x) - 1.0) < 1e-13
    # I_x(1, 1) = x
    assert abs(betainc(1.0, 1.0, 0.37) - 0.37) < 1e-14


def test_bad_arguments():
    with pytest.raises(ValueError):
        t_cdf(1.0, 0)
    with pytest.raises(ValueError):
        betainc(-1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        betainc(1.0, 1.0, 1.5)


def test_non_convergence_is_reported(monkeypatch):
    monkeypatch.setattr(tdist, "CF_MAX_ITER", 1)
    with pytest.raises(ConvergenceError):
        t_cdf(1.5, 7)
