import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chemoagg.errors import InvalidDimensional, NonPositiveConcentration, ValidationError
from chemoagg.grid import Grid1D, ScalarField
from chemoagg.model import (
    DimensionalParams,
    ModelParams,
    diffusion_length,
    log_sensing,
    modulation,
    modulation_slope_at_zero,
    nondimensionalize,
    redimensionalize,
    require_valid,
    validate,
)

P = ModelParams(lambda0=10.0, tau=0.1, delta=0.1)


def test_derived_groups_exact():
    p = ModelParams.from_alpha(10.0, 1.0, delta=0.1)
    assert p.alpha == pytest.approx(1.0, rel=1e-15)
    assert p.epsilon == 0.1
    q = ModelParams.from_tau_tilde(10.0, 1.0, delta=0.01)
    assert q.tau == 10.0 and q.tau_tilde == 1.0
    assert P.stiffness == pytest.approx(5.0)


def test_modulation_examples():
    assert modulation(0.0, P) == 1.0
    assert modulation(1e12, P) == pytest.approx(0.5, abs=1e-12)
    assert modulation(-1e12, P) == pytest.approx(1.5, abs=1e-12)
    # independent scalar evaluation: 1 - chi / sqrt(2) at y = delta
    assert modulation(0.1, P) == pytest.approx(1.0 - 0.5 / math.sqrt(2.0), abs=1e-15)
    assert modulation(0.1, P) == pytest.approx(0.646447, abs=1e-6)


def test_modulation_array_and_scalar():
    y = np.array([-0.2, 0.0, 0.2])
    out = modulation(y, P)
    assert isinstance(out, np.ndarray) and out.shape == (3,)
    assert isinstance(modulation(0.3, P), float)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=50),
       st.floats(1e-3, 2.0), st.floats(0.0, 0.99))
def test_modulation_symmetry_and_bounds(ys, delta, chi):
    p = ModelParams(lambda0=1.0, tau=1.0, delta=delta, chi=chi)
    y = np.array(ys)
    a, b = modulation(y, p), modulation(-y, p)
    assert np.all(np.abs(a + b - 2.0) < 1e-12)
    assert np.all(a >= 1.0 - chi - 1e-15) and np.all(a <= 1.0 + chi + 1e-15)


@given(st.floats(1e-3, 2.0), st.floats(0.01, 0.99))
def test_modulation_decreasing_and_slope(delta, chi):
    p = ModelParams(lambda0=1.0, tau=1.0, delta=delta, chi=chi)
    y = np.linspace(-5 * delta, 5 * delta, 401)
    assert np.all(np.diff(modulation(y, p)) < 0)
    h = 1e-6 * delta
    fd = (modulation(h, p) - modulation(-h, p)) / (2 * h)
    assert fd == pytest.approx(modulation_slope_at_zero(p), rel=1e-6)


def test_log_sensing_examples():
    g = Grid1D(4, 4.0)
    assert np.all(log_sensing(ScalarField.constant(g, 1.0)).values == 0.0)
    assert np.allclose(log_sensing(ScalarField.constant(g, math.e)).values, 1.0, atol=1e-15)
    g3 = Grid1D(4, 4.0)
    m = log_sensing(ScalarField(g3, [1.0, 2.0, 4.0, 8.0])).values
    assert np.allclose(m[:3], [0.0, 0.693147, 1.386294], atol=1e-6)
    with pytest.raises(NonPositiveConcentration):
        log_sensing(ScalarField(g3, [1.0, 0.0, 1.0, 1.0]))


def test_validate_examples():
    assert validate(P) == []
    v = validate(P.with_(chi=1.2))
    assert any("chi must lie in" in s for s in v)
    v = validate(P.with_(tau=0.0))
    assert any("tau must be positive" in s for s in v)
    assert validate(P.with_(chi=0.0)) == []  # null-chemotaxis control
    assert validate(P.with_(delta=float("nan")))
    with pytest.raises(ValidationError):
        require_valid(P.with_(lambda0=-1.0))


def test_nondimensionalize_unit_inputs():
    d = DimensionalParams(V0=1, lambda0_dim=10, tau_dim=1, D_S_dim=1, a=1, b=1, rho0=1, L_dim=10, t0=1)
    assert diffusion_length(d) == 1.0
    p = nondimensionalize(d)
    assert (p.lambda0, p.tau, p.sigma, p.D_S, p.L) == (10.0, 1.0, 1.0, 1.0, 10.0)


def test_nondimensionalize_length_scale():
    d = DimensionalParams(V0=1, lambda0_dim=10, tau_dim=1, D_S_dim=4, a=1, b=1, rho0=1, L_dim=20, t0=2)
    assert diffusion_length(d) == 2.0
    assert nondimensionalize(d).L == 10.0
    # run length 20 um on a 100 um diffusion length gives epsilon = 0.2
    d2 = DimensionalParams(V0=20, lambda0_dim=1, tau_dim=1, D_S_dim=1e4, a=1, b=1, rho0=1, L_dim=1000, t0=5)
    assert nondimensionalize(d2).epsilon == pytest.approx(0.2)


def test_nondimensionalize_rejects_nonpositive():
    d = DimensionalParams(V0=0, lambda0_dim=10, tau_dim=1, D_S_dim=1, a=1, b=1, rho0=1, L_dim=10, t0=1)
    with pytest.raises(InvalidDimensional):
        nondimensionalize(d)


pos = st.floats(1e-2, 1e2)


@given(pos, pos, pos, pos, pos, pos, pos, pos, pos)
def test_dimensional_round_trip(V0, lam, tau, D, a, b, rho0, L, t0):
    d = DimensionalParams(V0=V0, lambda0_dim=lam, tau_dim=tau, D_S_dim=D, a=a, b=b, rho0=rho0, L_dim=L, t0=t0)
    back = redimensionalize(nondimensionalize(d), V0=V0, a=a, b=b, rho0=rho0)
    for k, v in d.as_dict().items():
        assert getattr(back, k) == pytest.approx(v, rel=1e-12)
