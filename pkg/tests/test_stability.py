import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chemoagg.errors import ValidationError
from chemoagg.model import ModelParams
from chemoagg.stability import (
    DispersionQuery,
    classify,
    critical_line,
    critical_stiffness,
    growth_rate,
    most_unstable_mode,
)

K1 = 2 * math.pi / 10


def test_growth_rate_examples():
    mu = growth_rate(DispersionQuery(K1, math.inf, 0.5, 0.1))
    k2 = K1 * K1
    assert mu == pytest.approx(-k2 * (1 - 5 / (1 + k2)), rel=1e-14)
    assert mu == pytest.approx(1.0204, abs=1e-4)
    assert growth_rate(DispersionQuery(K1, 1.0, 0.0, 0.1)) == pytest.approx(-k2, rel=1e-15)


def test_critical_stiffness_examples():
    assert critical_stiffness(K1, math.inf) == pytest.approx(1.394784, abs=1e-6)
    assert critical_stiffness(K1, 1.0) == pytest.approx(2.789568, abs=1e-6)
    for k in (0.1, 1.0, 7.0):
        assert critical_stiffness(k, 3.0, D_S=0.0) == pytest.approx(4.0 / 3.0)
    with pytest.raises(ValidationError):
        critical_stiffness(K1, 0.0)


@given(st.floats(1e-2, 20), st.floats(1e-3, 1e4), st.floats(0, 10))
def test_marginal_at_critical(k, alpha, D_S):
    cod = critical_stiffness(k, alpha, D_S)
    mu = growth_rate(DispersionQuery(k, alpha, 0.5, 0.5 / cod, D_S))
    assert abs(mu) < 1e-12 * max(1.0, k * k)


@given(st.floats(1e-2, 20), st.floats(1e-3, 1e4), st.floats(0, 10), st.floats(0.1, 50), st.floats(1.01, 3))
def test_monotone_in_stiffness(k, alpha, D_S, cod, f):
    lo = growth_rate(DispersionQuery(k, alpha, 0.5, 0.5 / cod, D_S))
    hi = growth_rate(DispersionQuery(k, alpha, 0.5, 0.5 / (f * cod), D_S))
    assert hi > lo


@given(st.floats(1e-2, 20), st.floats(1e-3, 1e3), st.floats(1.01, 10))
def test_critical_decreasing_in_alpha(k, alpha, f):
    assert critical_stiffness(k, f * alpha) < critical_stiffness(k, alpha)


def test_mode_scan_matches_exhaustive_oracle():
    p = ModelParams(lambda0=1.0, tau=100.0, delta=0.1)
    scan = most_unstable_mode(p)
    rates = [-(2 * math.pi * n / 10) ** 2 * (1 - (100 / 101) * 5 / (1 + (2 * math.pi * n / 10) ** 2))
             for n in range(1, 51)]
    assert scan.n == int(np.argmax(rates)) + 1
    assert scan.mu == pytest.approx(max(rates), rel=1e-13)
    assert not scan.all_stable


def test_mode_scan_stable_below_threshold():
    p = ModelParams(lambda0=1.0, tau=1.0, delta=0.5 / 2.5)
    assert most_unstable_mode(p).all_stable


def test_large_domain_approaches_continuum_max():
    p = ModelParams(lambda0=1.0, tau=100.0, delta=0.1, L=400.0)
    scan = most_unstable_mode(p, n_max=2000)
    ks = np.linspace(1e-3, 5, 200001)
    cont = max(growth_rate(DispersionQuery(k, 100.0, 0.5, 0.1)) for k in ks[::50])
    assert scan.mu == pytest.approx(cont, rel=1e-3)


def test_classify_examples():
    assert classify(0.005) == "stable"
    assert classify(0.05) == "intermediate"
    assert classify(0.5) == "unstable"
    assert classify(0.01) == "intermediate" and classify(0.1) == "unstable"
    with pytest.raises(ValidationError):
        classify(-1.0)


def test_critical_line_lowest_mode():
    line = critical_line([1.0, math.inf])
    assert line[0][1] == pytest.approx(2.789568, abs=1e-6)
    assert line[1][1] == pytest.approx(1.394784, abs=1e-6)
