"""Chemoattractant field: explicit update, quasi-static solve, log gradient."""

from __future__ import annotations

import numpy as np

from .errors import CflViolation, NonPositiveConcentration, SingularSystem, ValidationError
from .grid import Grid1D, ScalarField
from .model import ModelParams

__all__ = [
    "explicit_dt_bound",
    "step_chemo_explicit",
    "solve_cyclic_tridiagonal",
    "solve_chemo_quasistatic",
    "gradient_log",
    "face_log_gradient",
    "QuasiStaticSolver",
]


def _same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise ValidationError("fields live on different grids")


def explicit_dt_bound(grid: Grid1D, params: ModelParams) -> float:
    return params.sigma_S / (2.0 * params.D_S / grid.dx**2 + 1.0)


def laplacian(values: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(values, -1) - 2.0 * values + np.roll(values, 1)) / (dx * dx)


def step_chemo_explicit(S: ScalarField, rho: ScalarField, dt: float, params: ModelParams) -> ScalarField:
    """Forward-Euler step of ``sigma_S dS/dt = D_S S_xx - S + rho`` (periodic)."""
    _same_grid(S, rho)
    bound = explicit_dt_bound(S.grid, params)
    if not 0 < dt <= bound:
        raise CflViolation(dt, bound, "chemoattractant")
    s = S.values
    rhs = params.D_S * laplacian(s, S.grid.dx) - s + rho.values
    return ScalarField(S.grid, s + (dt / params.sigma_S) * rhs)


def _thomas(lower, diag, upper, rhs):
    n = diag.size
    c = np.empty(n)
    d = np.empty(n)
    piv = diag[0]
    if piv == 0:
        raise SingularSystem("zero pivot in tridiagonal elimination")
    c[0] = upper[0] / piv
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * c[i - 1]
        if piv == 0:
            raise SingularSystem("zero pivot in tridiagonal elimination")
        c[i] = upper[i] / piv
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def solve_cyclic_tridiagonal(lower, diag, upper, rhs):
    """Solve a periodic tridiagonal system.

    Row ``i`` reads ``lower[i]*x[i-1] + diag[i]*x[i] + upper[i]*x[i+1] = rhs[i]``
    with indices taken modulo ``n``. The wrap-around corners are handled by a
    Sherman-Morrison correction on top of two Thomas sweeps.
    """
    lower = np.asarray(lower, dtype=np.float64)
    diag = np.asarray(diag, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = diag.size
    if n < 3:
        raise ValidationError("cyclic system needs at least 3 unknowns")
    alpha = upper[-1]  # A[n-1, 0]
    beta = lower[0]  # A[0, n-1]
    gamma = -diag[0]
    b = diag.copy()
    b[0] -= gamma
    b[-1] -= alpha * beta / gamma
    lo = lower.copy()
    up = upper.copy()
    lo[0] = 0.0
    up[-1] = 0.0
    x = _thomas(lo, b, up, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = alpha
    z = _thomas(lo, b, up, u)
    denom = 1.0 + z[0] + beta * z[-1] / gamma
    if denom == 0:
        raise SingularSystem("Sherman-Morrison denominator vanished")
    fact = (x[0] + beta * x[-1] / gamma) / denom
    return x - fact * z


def solve_chemo_quasistatic(rho: ScalarField, params: ModelParams) -> ScalarField:
    """Solve ``-D_S S'' + S = rho`` on the periodic grid with the 3-point stencil."""
    grid = rho.grid
    n = grid.I
    k = params.D_S / grid.dx**2
    off = np.full(n, -k)
    diag = np.full(n, 1.0 + 2.0 * k)
    s = solve_cyclic_tridiagonal(off, diag, off, rho.values)
    if not np.all(np.isfinite(s)):
        raise SingularSystem("quasi-static chemoattractant solve produced non-finite values")
    return ScalarField(grid, s)


def _log_values(S: ScalarField) -> np.ndarray:
    if np.any(S.values <= 0):
        bad = int(np.argmin(S.values))
        raise NonPositiveConcentration(f"S[{bad}]={S.values[bad]!r} is not positive")
    return np.log(S.values)


def gradient_log(S: ScalarField) -> ScalarField:
    """Centered difference of ln S at cell centers."""
    m = _log_values(S)
    return ScalarField(S.grid, (np.roll(m, -1) - np.roll(m, 1)) / (2.0 * S.grid.dx))


def face_log_gradient(S: ScalarField) -> np.ndarray:
    """``(ln S[i+1] - ln S[i]) / dx`` at the right face of every cell."""
    m = _log_values(S)
    return (np.roll(m, -1) - m) / S.grid.dx


class QuasiStaticSolver:
    """Repeated solves of ``-D_S S'' + S = rho`` on one grid.

    The periodic operator is constant, so its inverse is built once from
    unit right-hand sides and every later solve is a matrix-vector product.
    """

    def __init__(self, grid: Grid1D, params: ModelParams):
        self.grid = grid
        n = grid.I
        k = params.D_S / grid.dx**2
        off = np.full(n, -k)
        diag = np.full(n, 1.0 + 2.0 * k)
        eye = np.eye(n)
        self._inv = np.column_stack([solve_cyclic_tridiagonal(off, diag, off, eye[:, j]) for j in range(n)])

    def solve(self, rho: np.ndarray) -> np.ndarray:
        return self._inv @ rho
