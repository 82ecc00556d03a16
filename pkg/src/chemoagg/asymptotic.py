"""Large-adaptation-time limit: density over position and internal state.

The unknown ``p[i, k]`` lives on cells ``x_i`` (periodic) times ``m_k``
(truncated to ``[-Y, Y]`` with no-flux ends). Space diffuses with
coefficient ``1/modulation(M(S) - m)``; the internal state relaxes toward
``M(S) = ln S`` at rate ``1/tau_tilde`` and is advected with first-order
upwinding. Time is the diffusive time, as in the Keller-Segel solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import CflViolation, DomainTooSmall, FieldBlowup, NegativeDensity, ValidationError
from .field import QuasiStaticSolver
from .grid import Grid1D, ScalarField
from .ks import initial_density
from .model import ModelParams, require_valid
from .records import RunRecord, Snapshot

NEG_TOL = 1e-12
EDGE_MASS_TOL = 1e-8


@dataclass(frozen=True)
class MAxis:
    """``K + 1`` cells of width ``2Y/K`` centered at ``-Y + k*dm``; ``K`` even so m = 0 is a center."""

    K: int = 200
    Y: float = 1.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 4 or self.K % 2:
            raise ValidationError(f"K must be an even integer >= 4, got {self.K!r}")
        if not self.Y > 0:
            raise ValidationError(f"Y must be positive, got {self.Y!r}")

    @property
    def dm(self) -> float:
        return 2.0 * self.Y / self.K

    @property
    def n_cells(self) -> int:
        return self.K + 1

    @property
    def centers(self) -> np.ndarray:
        return -self.Y + np.arange(self.K + 1) * self.dm

    def cell_of(self, m):
        k = np.rint((np.asarray(m, dtype=np.float64) + self.Y) / self.dm).astype(np.int64)
        return np.clip(k, 0, self.K)

    def doubled(self) -> "MAxis":
        return MAxis(self.K, 2.0 * self.Y)


@dataclass
class PhaseDensity:
    grid: Grid1D
    m_axis: MAxis
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        shape = (self.grid.I, self.m_axis.n_cells)
        if self.values.shape != shape:
            raise ValidationError(f"phase density has shape {self.values.shape}, expected {shape}")

    def total_mass(self) -> float:
        return float(self.values.sum()) * self.grid.dx * self.m_axis.dm

    def copy(self) -> "PhaseDensity":
        return PhaseDensity(self.grid, self.m_axis, self.values.copy(), self.t)


def marginal_density(p: PhaseDensity) -> ScalarField:
    """rho_i = sum_k p[i, k] dm."""
    return ScalarField(p.grid, p.values.sum(axis=1) * p.m_axis.dm)


def concentrated(grid: Grid1D, m_axis: MAxis, rho: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Each column's mass placed in the single m-cell containing ``M[i]``."""
    p = np.zeros((grid.I, m_axis.n_cells))
    k = m_axis.cell_of(M)
    p[np.arange(grid.I), k] = np.asarray(rho) / m_axis.dm
    return p


def remap_doubled(values: np.ndarray) -> np.ndarray:
    """Exact conservative transfer onto the axis with doubled half-width.

    New cell ``j`` (width ``2dm``) shares its center with old cell
    ``2j - K/2`` and covers half of each of that cell's neighbours.
    """
    I, n = values.shape
    K = n - 1
    padded = np.zeros((I, n + 2))
    padded[:, 1:-1] = values
    out = np.zeros_like(values)
    for j in range(n):
        kk = 2 * j - K // 2
        if -1 <= kk <= K + 1:
            s = padded[:, kk + 1] if 0 <= kk <= K else 0.0
            lo = padded[:, kk] if kk - 1 >= 0 else 0.0
            hi = padded[:, kk + 2] if kk + 1 <= K else 0.0
            out[:, j] = 0.5 * (s + 0.5 * lo + 0.5 * hi)
    return out


@nb.njit(cache=True, error_model="numpy")
def _prepare(S, M, m, chi, delta, dx, dm, tau_tilde, lam):
    """Fill the face modulations (arithmetic-mean S at faces) and return the
    largest dt keeping every self-coefficient of the update non-negative."""
    I = S.size
    n = m.size
    for i in range(I):
        ip = i + 1 if i < I - 1 else 0
        mf = math.log(0.5 * (S[i] + S[ip]))
        for k in range(n):
            q = (mf - m[k]) / delta
            lam[i, k] = 1.0 - chi * q / math.sqrt(1.0 + q * q)
    diff = 0.0
    drift = 0.0
    for i in range(I):
        im = i - 1 if i > 0 else I - 1
        for k in range(n):
            d = 1.0 / lam[i, k] + 1.0 / lam[im, k]
            if d > diff:
                diff = d
            a = abs(M[i] - m[k])
            if a > drift:
                drift = a
    return 1.0 / (diff / (dx * dx) + drift / (tau_tilde * dm))


@nb.njit(cache=True, error_model="numpy")
def _update(p, lam_face, M, m, dt, dx, dm, tau_tilde, out):
    I, n = p.shape
    cx = dt / (dx * dx)
    cm = dt / (tau_tilde * dm)
    for i in range(I):
        ip = i + 1 if i < I - 1 else 0
        im = i - 1 if i > 0 else I - 1
        Mi = M[i]
        lo_flux = 0.0  # psi at k - 1/2; zero at the lower edge
        for k in range(n):
            if k < n - 1:
                a = Mi - m[k]
                b = Mi - m[k + 1]
                hi_flux = (a if a > 0.0 else 0.0) * p[i, k] - (-b if b < 0.0 else 0.0) * p[i, k + 1]
            else:
                hi_flux = 0.0
            pk = p[i, k]
            dif = (p[ip, k] - pk) / lam_face[i, k] - (pk - p[im, k]) / lam_face[im, k]
            out[i, k] = pk + cx * dif - cm * (hi_flux - lo_flux)
            lo_flux = hi_flux


@dataclass
class AsymptoticConfig:
    params: ModelParams  # only chi, delta, D_S, L and tau_tilde enter
    grid: Grid1D
    m_axis: MAxis | None = None  # None: K = 200 and Y chosen from the field
    K: int = 200
    dt: float = 1e-2  # upper cap
    T_end: float = 100.0
    amplitude: float = 1e-2
    mode: int = 1
    center: float | None = None
    noise_seed: int | None = None
    snapshot_schedule: list = field(default_factory=list)
    sample_interval: float = 0.1
    stationary_window: float = 1.0
    stationary_tol: float = 1e-4
    stop_when_stationary: bool = False
    keep_phase: bool = False

    def __post_init__(self):
        require_valid(self.params)
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if not self.T_end >= 0:
            problems.append("T_end must be non-negative")
        if not 0 <= self.amplitude < 1:
            problems.append("perturbation amplitude must lie in [0, 1)")
        if not self.sample_interval > 0:
            problems.append("sample_interval must be positive")
        for t in self.snapshot_schedule:
            if not 0 <= t <= self.T_end:
                problems.append(f"snapshot time {t!r} outside [0, T_end]")
        if abs(self.grid.L - self.params.L) > 1e-12 * self.params.L:
            problems.append("grid length differs from params.L")
        if problems:
            raise ValidationError(problems)


def auto_half_width(M: np.ndarray) -> float:
    return max(4.0 * float(np.max(np.abs(M))), 1.0)


def step_asymptotic(p: PhaseDensity, S: ScalarField, cfg: AsymptoticConfig, dt: float | None = None) -> PhaseDensity:
    """One explicit step for a given chemoattractant field (not re-solved here)."""
    if np.any(S.values <= 0):
        raise ValidationError("S must be positive")
    ax = p.m_axis
    m = ax.centers
    M = np.log(S.values)
    lam = np.empty_like(p.values)
    prm = cfg.params
    bound = _prepare(S.values, M, m, prm.chi, prm.delta, p.grid.dx, ax.dm, prm.tau_tilde, lam)
    dt = cfg.dt if dt is None else dt
    if not 0 < dt <= bound:
        raise CflViolation(dt, bound, "phase-density")
    out = np.empty_like(p.values)
    _update(p.values, lam, M, m, dt, p.grid.dx, ax.dm, cfg.params.tau_tilde, out)
    if out.min() < -NEG_TOL:
        raise NegativeDensity(f"phase density {out.min()!r} at t={p.t + dt!r}")
    return PhaseDensity(p.grid, ax, out, p.t + dt)


def _edge_fraction(values):
    tot = values.sum()
    edge = values[:, 0].sum() + values[:, -1].sum()
    return edge / tot if tot > 0 else 0.0


def initial_phase(cfg: AsymptoticConfig, solver: QuasiStaticSolver) -> tuple[PhaseDensity, np.ndarray]:
    rho = initial_density(cfg.grid, cfg.amplitude, cfg.mode, cfg.center, cfg.noise_seed)
    S = solver.solve(rho)
    M = np.log(S)
    ax = cfg.m_axis or MAxis(cfg.K, auto_half_width(M))
    return PhaseDensity(cfg.grid, ax, concentrated(cfg.grid, ax, rho, M)), S


def run_asymptotic(cfg: AsymptoticConfig, p: PhaseDensity | None = None) -> RunRecord:
    """Integrate to ``cfg.T_end``; S is re-solved from the marginal every step.

    With the automatic axis the half-width doubles (exact remap) whenever
    ``4 max|ln S|`` outgrows it; in every case the run stops with
    DomainTooSmall if the edge cells ever hold more than 1e-8 of the mass.
    """
    grid, params = cfg.grid, cfg.params
    solver = QuasiStaticSolver(grid, params)
    if p is None:
        p, S = initial_phase(cfg, solver)
    else:
        S = solver.solve(marginal_density(p).values)
    auto = cfg.m_axis is None
    vals = p.values.copy()
    ax = p.m_axis
    t = p.t
    dx = grid.dx
    chi, delta, tt = params.chi, params.delta, params.tau_tilde
    unit = params.L**2
    rec = RunRecord(engine="asymptotic", grid=grid, params=params.as_dict())

    def rho_of(v):
        return v.sum(axis=1) * ax.dm

    def snap(t, v, S):
        phase = v.copy() if cfg.keep_phase else None
        mc = ax.centers if cfg.keep_phase else None
        return Snapshot(t, t / unit, rho_of(v), S.copy(), phase, mc)

    rho = rho_of(vals)
    mass0 = float(rho.sum()) * dx
    rec.deviation.append(t, t / unit, float(np.max(np.abs(rho - 1.0))))
    if 0.0 in cfg.snapshot_schedule:
        rec.snapshots.append(snap(t, vals, S))
    n = int(math.floor(cfg.T_end / cfg.sample_interval + 1e-9))
    samples = {j * cfg.sample_interval for j in range(1, n + 1)}
    snaps = {float(s) for s in cfg.snapshot_schedule}
    times = sorted(x for x in samples | snaps | {float(cfg.T_end)} if x > 0)
    peaks = {0.0: float(rho.max() - 1.0)}
    stationary_at = None
    n_steps = 0
    n_doublings = 0
    out = np.empty_like(vals)
    lam = np.empty_like(vals)
    for target in times:
        while t < target:
            M = np.log(S)
            if auto and 4.0 * float(np.max(np.abs(M))) > ax.Y:
                vals = remap_doubled(vals)
                ax = ax.doubled()
                out = np.empty_like(vals)
                n_doublings += 1
                continue
            m = ax.centers
            if lam.shape != vals.shape:
                lam = np.empty_like(vals)
            dt = min(cfg.dt, 0.9 * _prepare(S, M, m, chi, delta, dx, ax.dm, tt, lam))
            if t + dt >= target - 1e-12 * max(1.0, target):
                dt = target - t
                t_next = target
            else:
                t_next = t + dt
            _update(vals, lam, M, m, dt, dx, ax.dm, tt, out)
            vals, out = out, vals
            t = t_next
            n_steps += 1
            S = solver.solve(rho_of(vals))
        if vals.min() < -NEG_TOL:
            raise NegativeDensity(f"phase density {vals.min()!r} at t={t!r}")
        if not np.all(np.isfinite(vals)) or vals.max() * ax.dm > 1e6:
            raise FieldBlowup(f"phase density blew up at t={t!r}")
        frac = _edge_fraction(vals)
        if frac > EDGE_MASS_TOL:
            raise DomainTooSmall(f"edge cells of the internal-state axis hold {frac:.3g} of the mass at t={t!r}")
        rho = rho_of(vals)
        if target in samples:
            rec.deviation.append(t, t / unit, float(np.max(np.abs(rho - 1.0))))
            peak = float(rho.max() - 1.0)
            peaks[round(t, 9)] = peak
            back = round(t - cfg.stationary_window, 9)
            if stationary_at is None and back in peaks and abs(peak - peaks[back]) < cfg.stationary_tol:
                stationary_at = t
        if target in snaps:
            rec.snapshots.append(snap(t, vals, S))
        if stationary_at is not None and cfg.stop_when_stationary:
            break
    if not rec.snapshots or rec.snapshots[-1].t != t:
        rec.snapshots.append(snap(t, vals, S))
    rec.summary.update(
        K=ax.K,
        Y=ax.Y,
        half_width_doublings=n_doublings,
        n_steps=n_steps,
        T_end=t,
        T_lambda=t / unit,
        stationary=stationary_at is not None,
        stationary_time=stationary_at if stationary_at is not None else -1.0,
        delta_rho=float(rho.max() - 1.0),
        mass_drift=float(rho.sum()) * dx - mass0,
    )
    rec.final_S = S.copy()
    rec.final_phase = PhaseDensity(grid, ax, vals.copy(), t)
    return rec
