import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from chemoagg.errors import CflViolation, NonPositiveConcentration, ValidationError
from chemoagg.field import (
    QuasiStaticSolver,
    explicit_dt_bound,
    face_log_gradient,
    gradient_log,
    solve_chemo_quasistatic,
    solve_cyclic_tridiagonal,
    step_chemo_explicit,
)
from chemoagg.grid import Grid1D, ScalarField
from chemoagg.model import ModelParams

P = ModelParams(lambda0=10.0, tau=0.1, delta=0.1)
G = Grid1D(50, 10.0)


def symbol(k, dx):
    # eigenvalue of the 3-point Laplacian on exp(ikx)
    return (2.0 - 2.0 * np.cos(k * dx)) / dx**2


def dense(lower, diag, upper):
    n = diag.size
    A = np.diag(diag)
    for i in range(n):
        A[i, (i - 1) % n] += lower[i]
        A[i, (i + 1) % n] += upper[i]
    return A


@given(st.integers(3, 40), st.integers(0, 2**31 - 1))
def test_cyclic_solver_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.uniform(-1, 1, n)
    upper = rng.uniform(-1, 1, n)
    diag = 3.0 + np.abs(lower) + np.abs(upper) + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    x = solve_cyclic_tridiagonal(lower, diag, upper, rhs)
    ref = scipy.linalg.solve(dense(lower, diag, upper), rhs)
    assert np.max(np.abs(x - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_cyclic_solver_too_small():
    with pytest.raises(ValidationError):
        solve_cyclic_tridiagonal([1, 1], [3, 3], [1, 1], [1, 1])


def test_explicit_uniform_fixed_point():
    S = ScalarField.constant(G, 1.0)
    out = step_chemo_explicit(S, ScalarField.constant(G, 1.0), 1e-3, P)
    assert np.all(out.values == 1.0)


def test_explicit_one_step_from_zero():
    out = step_chemo_explicit(ScalarField.constant(G, 0.0), ScalarField.constant(G, 1.0), 1e-3, P)
    assert np.allclose(out.values, 1e-3, rtol=0, atol=1e-18)


def test_explicit_fourier_amplification():
    dt = 1e-3
    k = 2 * np.pi / G.L
    S = ScalarField.from_function(G, lambda x: 1 + 0.01 * np.cos(k * x))
    out = step_chemo_explicit(S, ScalarField.constant(G, 1.0), dt, P)
    g = 1.0 - dt * (1.0 + P.D_S * symbol(k, G.dx))
    ref = 1 + 0.01 * g * np.cos(k * G.centers)
    assert np.max(np.abs(out.values - ref)) < 1e-14


def test_explicit_cfl_error():
    bound = explicit_dt_bound(G, P)
    S = ScalarField.constant(G, 1.0)
    step_chemo_explicit(S, S, bound, P)
    with pytest.raises(CflViolation):
        step_chemo_explicit(S, S, 1.01 * bound, P)


@given(st.integers(0, 2**31 - 1), st.floats(1e-5, 1e-3))
def test_explicit_mean_dynamics(seed, dt):
    rng = np.random.default_rng(seed)
    S = ScalarField(G, rng.uniform(0.5, 2, G.I))
    rho = ScalarField(G, rng.uniform(0, 3, G.I))
    out = step_chemo_explicit(S, rho, dt, P)
    assert out.mean() == pytest.approx(S.mean() + dt * (rho.mean() - S.mean()), abs=1e-12)


def test_quasistatic_examples():
    assert np.allclose(solve_chemo_quasistatic(ScalarField.constant(G, 1.0), P).values, 1.0, atol=1e-14)
    k = 2 * np.pi / G.L
    att = 1.0 / (1.0 + P.D_S * symbol(k, G.dx))
    for f in (np.cos, np.sin):
        rho = ScalarField.from_function(G, lambda x: 1 + 0.01 * f(k * x))
        S = solve_chemo_quasistatic(rho, P).values
        assert np.max(np.abs(S - (1 + 0.01 * att * f(k * G.centers)))) < 1e-14


@given(st.integers(0, 2**31 - 1))
def test_quasistatic_mean_one(seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0, 2, G.I)
    v /= v.mean()
    assert solve_chemo_quasistatic(ScalarField(G, v), P).mean() == pytest.approx(1.0, abs=1e-10)


def test_quasistatic_is_fixed_point_of_explicit():
    rng = np.random.default_rng(3)
    rho = ScalarField(G, rng.uniform(0.5, 1.5, G.I))
    S = ScalarField.constant(G, 1.0)
    dt = explicit_dt_bound(G, P)
    for _ in range(20000):
        S = step_chemo_explicit(S, rho, dt, P)
    assert np.max(np.abs(S.values - solve_chemo_quasistatic(rho, P).values)) < 1e-8


def test_cached_solver_matches_direct():
    rng = np.random.default_rng(5)
    rho = rng.uniform(0.2, 3, G.I)
    a = QuasiStaticSolver(G, P).solve(rho)
    b = solve_chemo_quasistatic(ScalarField(G, rho), P).values
    assert np.max(np.abs(a - b)) < 1e-13


def test_gradient_log_examples():
    assert np.all(gradient_log(ScalarField.constant(G, 3.0)).values == 0.0)
    fine = Grid1D(400, 1.0)
    # ln S = x away from the wrap: interior centered differences are exact
    S = ScalarField(fine, np.exp(fine.centers))
    assert np.allclose(gradient_log(S).values[1:-1], 1.0, atol=1e-10)
    k = 2 * np.pi / G.L
    S = ScalarField.from_function(G, lambda x: 1 + 0.1 * np.cos(k * x))
    x = G.centers
    exact = -0.1 * k * np.sin(k * x) / (1 + 0.1 * np.cos(k * x))
    err = np.max(np.abs(gradient_log(S).values - exact))
    S2 = ScalarField.from_function(Grid1D(100, 10.0), lambda x: 1 + 0.1 * np.cos(k * x))
    x2 = S2.grid.centers
    err2 = np.max(np.abs(gradient_log(S2).values - (-0.1 * k * np.sin(k * x2) / (1 + 0.1 * np.cos(k * x2)))))
    assert err < 1e-3 and err / err2 == pytest.approx(4.0, rel=0.05)


def test_face_gradient_and_errors():
    S = ScalarField(Grid1D(4, 4.0), [1.0, 2.0, 4.0, 8.0])
    assert np.allclose(face_log_gradient(S), [np.log(2)] * 3 + [-3 * np.log(2)])
    with pytest.raises(NonPositiveConcentration):
        gradient_log(ScalarField(Grid1D(4, 4.0), [1.0, -1.0, 1.0, 1.0]))
