import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chemoagg.diagnostics import (
    default_edges,
    detect_plateau,
    find_center,
    internal_histogram,
    max_log_gradient,
    mean_run_length,
    peak_density,
    peak_position,
    run_length_bounds,
    time_avg_deviation,
)
from chemoagg.errors import EmptySample, InsufficientCoverage, ValidationError
from chemoagg.grid import Grid1D, ScalarField
from chemoagg.mc import ParticleEnsemble
from chemoagg.model import ModelParams
from chemoagg.records import DeviationSeries

G = Grid1D(50, 10.0)
P = ModelParams(lambda0=10.0, tau=0.003, delta=0.1)


def series(t, v):
    s = DeviationSeries()
    for a, b in zip(t, v):
        s.append(a, a, b)
    return s


def test_time_average_examples():
    t = np.linspace(0, 2, 41)
    assert time_avg_deviation(series(t, np.zeros_like(t)), 2.0) == 0.0
    assert time_avg_deviation(series(t, np.full_like(t, 0.05)), 2.0) == pytest.approx(0.05, abs=1e-15)
    ramp = np.where(t < 1, 0.0, 0.1 * (t - 1))
    assert time_avg_deviation(series(t, ramp), 2.0) == pytest.approx(0.05, abs=1e-15)


def test_time_average_interpolates_window_ends():
    t = np.array([0.0, 0.3, 0.9, 1.7])
    v = 2.0 * t
    # exact mean of 2t over [0.8, 1.6] is 2.4
    assert time_avg_deviation(series(t, v), 1.6) == pytest.approx(2.4, abs=1e-14)


def test_time_average_refinement():
    f = lambda t: 0.3 + 0.1 * np.sin(3 * t)
    coarse = np.linspace(0, 5, 101)
    fine = np.linspace(0, 5, 201)
    a = time_avg_deviation(series(coarse, f(coarse)), 5.0)
    b = time_avg_deviation(series(fine, f(fine)), 5.0)
    assert abs(a - b) < 1e-3


def test_time_average_coverage_error():
    t = np.linspace(0, 1, 11)
    with pytest.raises(InsufficientCoverage):
        time_avg_deviation(series(t, t), 2.0)
    with pytest.raises(ValidationError):
        time_avg_deviation(series(t, t), 0.0)


def test_peak_density_examples():
    g = Grid1D(4, 4.0)
    assert peak_density(ScalarField.constant(g, 1.0)) == 0.0
    assert peak_density(ScalarField(g, [0.5, 1.5, 1.0, 1.0])) == 0.5


def test_find_center_examples():
    v = np.ones(G.I)
    v[12] = 2.0
    assert find_center(ScalarField(G, v)) == pytest.approx(12.5 * G.dx)
    assert find_center(ScalarField.constant(G, 3.0)) == pytest.approx(0.5 * G.dx)
    S = ScalarField.from_function(G, lambda x: 1 + 0.1 * np.cos(2 * np.pi * (x - 3) / G.L))
    assert abs(find_center(S) - 3.0) <= G.dx


def random_ensemble(n, seed, L=10.0, y_scale=0.01):
    rng = np.random.default_rng(seed)
    return ParticleEnsemble(rng.uniform(0, L, n), np.where(rng.random(n) < 0.5, 1, -1),
                            rng.normal(0, y_scale, n), np.ones(n), L)


def test_histogram_normalization_and_sides():
    ens = random_ensemble(200_000, 1)
    x0 = G.centers[25]
    edges = default_edges(P.tau, 1.0)
    h = internal_histogram(ens, G, x0, 1.0, edges, N_bar=4000)
    assert np.sum(h.plus * h.widths) == pytest.approx(h.n_plus / 4000)
    assert np.sum(h.minus * h.widths) == pytest.approx(h.n_minus / 4000)
    cl, cr = G.cell_of(x0 - 1.0), G.cell_of(x0 + 1.0)
    cells = G.cell_of(ens.r)
    n_l, n_r = np.sum(cells == cl), np.sum(cells == cr)
    assert h.n_plus + h.n_minus == n_l + n_r
    toward = np.sum((cells == cl) & (ens.v > 0)) + np.sum((cells == cr) & (ens.v < 0))
    assert h.n_plus == toward


def mirrored(ens, x0, flip_v):
    r = np.mod(2 * x0 - ens.r, ens.L)
    v = -ens.v if flip_v else ens.v
    return ParticleEnsemble(r, v, ens.y, ens.s_path, ens.L)


@given(st.integers(0, 2**31 - 1), st.sampled_from([0.4, 1.0, 2.2]))
def test_mirror_invariants(seed, r):
    ens = random_ensemble(20_000, seed)
    x0 = G.centers[20]
    edges = default_edges(P.tau, 1.0, n_bins=41)
    h = internal_histogram(ens, G, x0, r, edges, 400)
    # a full mirror (positions and velocities) maps movers toward x0 onto movers toward x0
    full = internal_histogram(mirrored(ens, x0, True), G, x0, r, edges, 400)
    assert np.array_equal(full.plus, h.plus) and np.array_equal(full.minus, h.minus)
    # mirroring positions only turns toward-movers into away-movers
    pos = internal_histogram(mirrored(ens, x0, False), G, x0, r, edges, 400)
    assert np.array_equal(pos.plus, h.minus) and np.array_equal(pos.minus, h.plus)


def test_histogram_unbiased_ensemble_symmetric():
    ens = random_ensemble(400_000, 3, y_scale=0.003)
    edges = default_edges(P.tau, 1.0, n_bins=21)
    h = internal_histogram(ens, G, G.centers[25], 2.0, edges, 8000)
    noise = 4 * np.sqrt(np.maximum(h.plus, h.minus) / (8000 * h.widths))
    assert np.all(np.abs(h.plus - h.minus) <= noise + 1e-12)


def test_histogram_errors():
    ens = ParticleEnsemble(np.array([0.05]), np.array([1]), np.zeros(1), np.ones(1), 10.0)
    with pytest.raises(EmptySample):
        internal_histogram(ens, G, G.centers[25], 1.0, default_edges(P.tau, 1.0), 1)
    with pytest.raises(ValidationError):
        internal_histogram(ens, G, G.centers[25], 6.0, default_edges(P.tau, 1.0), 1)


def hist_from_samples(ys, tauG=1.0, n_bins=101):
    n = ys.size
    L = 10.0
    r = np.full(n, G.centers[25])
    ens = ParticleEnsemble(r, np.ones(n), ys, np.ones(n), L)
    return internal_histogram(ens, G, G.centers[25], 0.0, default_edges(tauG, 1.0, n_bins), n)


def test_peak_position_examples():
    edges = default_edges(1.0, 1.0)
    c = 0.5 * (edges[1:] + edges[:-1])
    j = int(np.argmin(np.abs(c - 0.35)))
    h = hist_from_samples(np.full(10, c[j]))
    assert peak_position(h) == pytest.approx(c[j])
    assert abs(peak_position(h) - 0.35) <= 0.5 * (c[1] - c[0])
    tie = hist_from_samples(np.array([c[40], c[41]]))
    assert peak_position(tie) == pytest.approx(c[40])
    rng = np.random.default_rng(0)
    g = hist_from_samples(rng.normal(0.63, 0.15, 400_000))
    assert abs(peak_position(g) - 0.63) < 0.5 * (c[1] - c[0])
    with pytest.raises(ValidationError):
        peak_position(g, "x")


def test_mean_run_length_examples():
    p = ModelParams(lambda0=10.0, tau=1.0, delta=0.1)
    h = hist_from_samples(np.zeros(5))
    assert mean_run_length(h, p) == pytest.approx((0.1, 0.1))
    big = hist_from_samples(np.full(5, 1e9))
    assert mean_run_length(big, p)[0] == pytest.approx(0.2, rel=1e-9)
    two = hist_from_samples(np.array([0.1, -0.1]))
    c = 0.5 / math.sqrt(2)
    want = 0.5 * (1 / (10 * (1 - c)) + 1 / (10 * (1 + c)))
    assert mean_run_length(two, p)[0] == pytest.approx(want, rel=1e-12)
    # binned estimate converges to the per-particle one on a fine grid
    rng = np.random.default_rng(1)
    fine = hist_from_samples(rng.normal(0, 0.2, 100_000), n_bins=2001)
    a, _ = mean_run_length(fine, p)
    b, _ = mean_run_length(fine, p, exact=False)
    assert a == pytest.approx(b, rel=2e-3)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=200), st.floats(0.0, 0.95), st.floats(1e-3, 1))
def test_run_length_bounded(ys, chi, delta):
    p = ModelParams(lambda0=10.0, tau=1.0, delta=delta, chi=chi)
    lo, hi = run_length_bounds(p)
    h = hist_from_samples(np.array(ys))
    for xi in mean_run_length(h, p) + mean_run_length(h, p, exact=False):
        assert lo * (1 - 1e-12) <= xi <= hi * (1 + 1e-12)


def test_max_log_gradient():
    k = 2 * np.pi / G.L
    S = ScalarField.from_function(G, lambda x: np.exp(0.3 * np.cos(k * x)))
    assert max_log_gradient(S) == pytest.approx(0.3 * k, rel=5e-3)
    with pytest.raises(ValidationError):
        default_edges(1.0, 0.0)


@pytest.mark.parametrize("mode,amp", [(1, 0.5), (3, 0.5), (6, 1.0), (8, 0.3)])
def test_plateau_sinusoid_matches_curvature_oracle(mode, amp):
    xc = G.centers[17]
    k = 2 * np.pi * mode / G.L
    sin = ScalarField.from_function(G, lambda x: 1 + amp * np.cos(k * (x - xc)))
    # cells j away from the crest stay within 2% while amp*(1 - cos(k j dx)) < 0.02*(1 + amp)
    j = 0
    while amp * (1 - math.cos(k * (j + 1) * G.dx)) < 0.02 * (1 + amp):
        j += 1
    pl = detect_plateau(sin)
    assert pl.extent == 2 * j + 1
    assert pl.has_plateau == (2 * j + 1 >= 3)


def test_plateau_examples():
    sharp = ScalarField.from_function(G, lambda x: 1 + np.cos(2 * np.pi * 6 * (x - G.centers[3]) / G.L))
    pl = detect_plateau(sharp)
    assert not pl.has_plateau and pl.extent <= 2
    v = np.ones(G.I)
    v[10:20] = 2.0
    v[9] = v[20] = 1.5
    pl = detect_plateau(ScalarField(G, v))
    assert pl.has_plateau and pl.extent == 10 and pl.start == 10
    wrap = np.roll(v, 35)  # plateau crossing the periodic seam
    assert detect_plateau(ScalarField(G, wrap)).extent == 10
    uni = detect_plateau(ScalarField.constant(G, 1.0))
    assert uni.uniform and uni.extent == G.I
