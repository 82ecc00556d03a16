"""Observables computed from run records, fields and particle ensembles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, InsufficientCoverage, ValidationError
from .grid import ScalarField
from .model import ModelParams, modulation
from .records import DeviationSeries


def time_avg_deviation(series: DeviationSeries, T_lambda: float, tol: float = 1e-9) -> float:
    """(2/T) times the integral of max|rho - 1| over [T/2, T], by trapezoids.

    Samples are linearly interpolated at the window ends when they do not
    fall exactly on them.
    """
    if not T_lambda > 0:
        raise ValidationError("T_lambda must be positive")
    t = np.asarray(series.t_lambda, dtype=np.float64)
    v = np.asarray(series.values, dtype=np.float64)
    lo, hi = 0.5 * T_lambda, T_lambda
    slack = tol * T_lambda
    if t.size < 2 or t[0] > lo + slack or t[-1] < hi - slack:
        span = (t[0], t[-1]) if t.size else ()
        raise InsufficientCoverage(f"samples {span} do not cover [{lo!r}, {hi!r}]")
    inside = (t > lo + slack) & (t < hi - slack)
    tt = np.concatenate(([lo], t[inside], [hi]))
    vv = np.concatenate(([np.interp(lo, t, v)], v[inside], [np.interp(hi, t, v)]))
    area = float(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(tt)))
    return area / (hi - lo)


def peak_density(rho: ScalarField) -> float:
    return float(np.max(rho.values) - 1.0)


def find_center(S: ScalarField) -> float:
    """Center of the cell where S is largest; ties go to the smallest index."""
    i = int(np.argmax(S.values))
    return (i + 0.5) * S.grid.dx


# ---------------------------------------------------------------------------
# internal-state distributions


@dataclass
class InternalHistogram:
    """Internal-state histograms of movers toward (plus) and away from (minus) x0.

    ``plus``/``minus`` are densities on ``edges`` normalized so that their
    integral is the local density carried by the sampled movers, i.e. the
    particle count over ``N_bar``. Raw samples are kept for exact averages.
    """

    r: float
    x0: float
    edges: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    n_plus: int
    n_minus: int
    N_bar: float
    y_plus: np.ndarray | None = None
    y_minus: np.ndarray | None = None

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def rho_plus(self) -> float:
        return self.n_plus / self.N_bar

    @property
    def rho_minus(self) -> float:
        return self.n_minus / self.N_bar

    def side(self, which: str) -> np.ndarray:
        if which == "+":
            return self.plus
        if which == "-":
            return self.minus
        raise ValidationError(f"side must be '+' or '-', got {which!r}")

    def merged(self, other: "InternalHistogram") -> "InternalHistogram":
        """Pool two histograms on the same bins (e.g. several snapshots)."""
        if not np.array_equal(self.edges, other.edges):
            raise ValidationError("histograms use different bins")
        n_plus = self.n_plus + other.n_plus
        n_minus = self.n_minus + other.n_minus
        N_bar = self.N_bar + other.N_bar

        def cat(a, b):
            return None if a is None or b is None else np.concatenate((a, b))

        w = self.widths
        plus = (self.plus * w * self.N_bar + other.plus * w * other.N_bar) / (N_bar * w)
        minus = (self.minus * w * self.N_bar + other.minus * w * other.N_bar) / (N_bar * w)
        return InternalHistogram(self.r, self.x0, self.edges, plus, minus, n_plus, n_minus, N_bar,
                                 cat(self.y_plus, other.y_plus), cat(self.y_minus, other.y_minus))


def default_edges(tau: float, G: float, n_bins: int = 101, span: float = 1.5) -> np.ndarray:
    """Uniform bins over [-span*tau*G, span*tau*G]."""
    h = span * tau * G
    if not h > 0:
        raise ValidationError("tau*G must be positive to build default bins")
    return np.linspace(-h, h, n_bins + 1)


def max_log_gradient(S: ScalarField) -> float:
    """G: the largest |d ln S / dx| over the grid (centered differences)."""
    m = np.log(S.values)
    return float(np.max(np.abs(np.roll(m, -1) - np.roll(m, 1)))) / (2.0 * S.grid.dx)


def internal_histogram(ens, grid, x0: float, r: float, edges, N_bar: float) -> InternalHistogram:
    """Histograms of y at distance ``r`` from ``x0``.

    Plus collects right-movers in the cell containing ``x0 - r`` and
    left-movers in the cell containing ``x0 + r`` (heading toward x0);
    minus collects the opposite pair. Values outside the bins are clipped
    into the edge bins so no mass is lost. Each histogram integrates to its
    particle count over ``N_bar``.
    """
    if not 0 <= r <= 0.5 * grid.L:
        raise ValidationError(f"r must lie in [0, L/2], got {r!r}")
    edges = np.asarray(edges, dtype=np.float64)
    cl = int(grid.cell_of(x0 - r))
    cr = int(grid.cell_of(x0 + r))
    cells = grid.cell_of(ens.r)
    in_l = cells == cl
    in_r = cells == cr
    if not in_l.any() or not in_r.any():
        raise EmptySample(f"no particles in sampling cells {cl} and {cr}")
    right = ens.v > 0
    y_plus = np.concatenate((ens.y[in_l & right], ens.y[in_r & ~right]))
    y_minus = np.concatenate((ens.y[in_l & ~right], ens.y[in_r & right]))
    if cl == cr:  # r = 0: every particle in the cell counts once for each side
        y_plus = ens.y[in_l].copy()
        y_minus = y_plus.copy()
    w = np.diff(edges)

    def dens(ys):
        lo = 0.5 * (edges[0] + edges[1])
        hi = 0.5 * (edges[-2] + edges[-1])
        counts, _ = np.histogram(np.clip(ys, lo, hi), bins=edges)
        return counts / (N_bar * w)

    return InternalHistogram(float(r), float(x0), edges, dens(y_plus), dens(y_minus),
                             int(y_plus.size), int(y_minus.size), float(N_bar), y_plus, y_minus)


def peak_position(h: InternalHistogram, which: str = "+") -> float:
    """Mode of one side, refined by a 3-point parabola through the top bin.

    Ties for the top bin go to the lower y and are not refined; modes at
    the outermost bins are not refined either.
    """
    f = h.side(which)
    if not np.any(f > 0):
        raise EmptySample("histogram is empty")
    top = f.max()
    j = int(np.argmax(f))
    c = h.centers
    if np.count_nonzero(f == top) > 1 or j == 0 or j == f.size - 1:
        return float(c[j])
    a, b, d = f[j - 1], f[j], f[j + 1]
    den = a - 2.0 * b + d
    off = 0.0 if den == 0 else 0.5 * (a - d) / den
    return float(c[j] + np.clip(off, -0.5, 0.5) * (c[j + 1] - c[j]))


def mean_run_length(h: InternalHistogram, params: ModelParams, exact: bool = True) -> tuple[float, float]:
    """(xi_plus, xi_minus): sample means of 1 / (lambda0 * modulation(y)).

    Each side is normalized by its own local density, so the result is a
    weighted mean and stays inside [1/(lambda0(1+chi)), 1/(lambda0(1-chi))].
    With ``exact`` and raw samples available the modulation is evaluated per
    particle; otherwise at bin centers.
    """
    out = []
    for which, ys in (("+", h.y_plus), ("-", h.y_minus)):
        if exact and ys is not None:
            if ys.size == 0:
                raise EmptySample(f"no {which} movers sampled")
            out.append(float(np.mean(1.0 / (params.lambda0 * modulation(ys, params)))))
            continue
        f = h.side(which) * h.widths
        mass = f.sum()
        if not mass > 0:
            raise EmptySample(f"no {which} movers sampled")
        inv = 1.0 / (params.lambda0 * modulation(h.centers, params))
        out.append(float(np.sum(f * inv) / mass))
    return out[0], out[1]


def run_length_bounds(params: ModelParams) -> tuple[float, float]:
    return 1.0 / (params.lambda0 * (1.0 + params.chi)), 1.0 / (params.lambda0 * (1.0 - params.chi))


# ---------------------------------------------------------------------------
# plateaus


@dataclass(frozen=True)
class Plateau:
    has_plateau: bool
    extent: int
    start: int  # first cell of the arc (may wrap past the end)
    uniform: bool = False


def detect_plateau(rho: ScalarField, tol: float = 0.02, min_cells: int = 3) -> Plateau:
    """Longest contiguous (periodic) arc through the maximum with |rho - max| < tol*max."""
    v = rho.values
    n = v.size
    top = v.max()
    near = np.abs(v - top) < tol * abs(top)
    if near.all():
        return Plateau(True, n, 0, uniform=True)
    j = int(np.argmax(v))
    lo = j
    while near[(lo - 1) % n]:
        lo -= 1
    hi = j
    while near[(hi + 1) % n]:
        hi += 1
    extent = hi - lo + 1
    return Plateau(extent >= min_cells, extent, lo % n)
