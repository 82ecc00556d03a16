"""Keller-Segel limit of the kinetic model with quasi-static chemoattractant.

Time here is the diffusive time of the continuum limit; the scaled time is
``t / L**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CflViolation, FieldBlowup, NegativeDensity, ValidationError
from .field import QuasiStaticSolver
from .grid import Grid1D, ScalarField
from .model import ModelParams, require_valid
from .records import RunRecord, Snapshot

REGIMES = ("fast", "very_fast", "moderate")
NEG_TOL = 1e-12


def chemotactic_coefficient(params: ModelParams, regime: str = "fast") -> float:
    """Drift prefactor multiplying the gradient of ln S."""
    if regime == "fast":
        a = params.alpha
        gain = 1.0 if math.isinf(a) else a / (1.0 + a)
        return gain * params.chi / params.delta
    if regime == "very_fast":
        return 0.0
    if regime == "moderate":
        return params.chi / params.delta
    raise ValidationError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def initial_density(grid: Grid1D, amplitude: float, mode: int = 1, center: float | None = None,
                    noise_seed: int | None = None) -> np.ndarray:
    """``1 + A cos(2 pi n (x - center)/L)``, or zero-mean seeded noise of size A."""
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        w = rng.standard_normal(grid.I)
        return 1.0 + amplitude * (w - w.mean())
    c = 0.5 * grid.L if center is None else center
    return 1.0 + amplitude * np.cos(2.0 * np.pi * mode * (grid.centers - c) / grid.L)


@dataclass
class KsState:
    rho: ScalarField
    S: ScalarField
    t: float = 0.0


@dataclass
class KsConfig:
    params: ModelParams
    grid: Grid1D
    dt: float = 1e-2  # upper cap; the step also shrinks to stay inside the stability bound
    T_end: float = 100.0
    regime: str = "fast"
    amplitude: float = 1e-2
    mode: int = 1
    center: float | None = None
    noise_seed: int | None = None
    snapshot_schedule: list = field(default_factory=list)
    sample_interval: float = 0.1
    stationary_window: float = 1.0
    stationary_tol: float = 1e-4
    stop_when_stationary: bool = False

    def __post_init__(self):
        require_valid(self.params)
        problems = []
        if self.regime not in REGIMES:
            problems.append(f"regime must be one of {REGIMES}, got {self.regime!r}")
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

    @property
    def coefficient(self) -> float:
        return chemotactic_coefficient(self.params, self.regime)


def face_velocity(S: np.ndarray, c: float, dx: float) -> np.ndarray:
    lnS = np.log(S)
    return c * (np.roll(lnS, -1) - lnS) / dx


def stability_bound(u: np.ndarray, dx: float) -> float:
    """Largest dt keeping every cell's self-coefficient non-negative."""
    return 1.0 / (2.0 / dx**2 + 2.0 * float(np.max(np.abs(u))) / dx)


def _advance(rho, u, dt, dx):
    up = np.where(u > 0, rho, np.roll(rho, -1))
    F = u * up - (np.roll(rho, -1) - rho) / dx
    return rho - (dt / dx) * (F - np.roll(F, 1))


def step_ks(state: KsState, cfg: KsConfig, dt: float | None = None, solver: QuasiStaticSolver | None = None) -> KsState:
    """One explicit Euler step: centered diffusion, upwind chemotactic flux."""
    grid = cfg.grid
    dx = grid.dx
    dt = cfg.dt if dt is None else dt
    u = face_velocity(state.S.values, cfg.coefficient, dx)
    bound = stability_bound(u, dx)
    if not 0 < dt <= bound:
        raise CflViolation(dt, bound, "Keller-Segel")
    rho = _advance(state.rho.values, u, dt, dx)
    if rho.min() < -NEG_TOL:
        raise NegativeDensity(f"density {rho.min()!r} at t={state.t + dt!r}")
    solver = solver or QuasiStaticSolver(grid, cfg.params)
    return KsState(ScalarField(grid, rho), ScalarField(grid, solver.solve(rho)), state.t + dt)


def initial_state(cfg: KsConfig, solver: QuasiStaticSolver | None = None) -> KsState:
    rho = initial_density(cfg.grid, cfg.amplitude, cfg.mode, cfg.center, cfg.noise_seed)
    solver = solver or QuasiStaticSolver(cfg.grid, cfg.params)
    return KsState(ScalarField(cfg.grid, rho), ScalarField(cfg.grid, solver.solve(rho)), 0.0)


class _Clock:
    """Output times merged into one sorted list; steps are shortened to land on them."""

    def __init__(self, T_end, sample_interval, snapshots):
        n = int(math.floor(T_end / sample_interval + 1e-9))
        samples = [j * sample_interval for j in range(1, n + 1)]
        self.samples = set(samples)
        self.snaps = set(float(s) for s in snapshots)
        self.times = sorted(t for t in set(samples) | self.snaps | {float(T_end)} if t > 0)


def run_ks(cfg: KsConfig, state: KsState | None = None) -> RunRecord:
    """Integrate to ``cfg.T_end`` from the configured perturbation of rho = 1.

    Records max|rho - 1| every ``sample_interval``; the run is flagged
    stationary once the peak density changes by less than
    ``stationary_tol`` over ``stationary_window``.
    """
    grid, params = cfg.grid, cfg.params
    solver = QuasiStaticSolver(grid, params)
    state = state or initial_state(cfg, solver)
    unit = params.L**2
    rec = RunRecord(engine="ks", grid=grid, params=params.as_dict())
    rho, S, t = state.rho.values.copy(), state.S.values.copy(), state.t
    dx = grid.dx
    c = cfg.coefficient
    rec.deviation.append(t, t / unit, float(np.max(np.abs(rho - 1.0))))
    if 0.0 in cfg.snapshot_schedule:
        rec.snapshots.append(Snapshot(t, t / unit, rho.copy(), S.copy()))
    clock = _Clock(cfg.T_end, cfg.sample_interval, cfg.snapshot_schedule)
    peaks = {0.0: float(rho.max() - 1.0)}
    stationary_at = None
    n_steps = 0
    mass0 = float(rho.sum())
    for target in clock.times:
        while t < target:
            u = face_velocity(S, c, dx)
            dt = min(cfg.dt, 0.9 * stability_bound(u, dx))
            if t + dt >= target - 1e-12 * max(1.0, target):
                dt = target - t
                t_next = target
            else:
                t_next = t + dt
            rho = _advance(rho, u, dt, dx)
            if rho.min() < -NEG_TOL:
                raise NegativeDensity(f"density {rho.min()!r} at t={t_next!r}")
            S = solver.solve(rho)
            t = t_next
            n_steps += 1
        if not np.all(np.isfinite(rho)) or rho.max() > 1e6:
            raise FieldBlowup(f"density blew up at t={t!r}")
        if target in clock.samples:
            rec.deviation.append(t, t / unit, float(np.max(np.abs(rho - 1.0))))
            peak = float(rho.max() - 1.0)
            peaks[round(t, 9)] = peak
            back = round(t - cfg.stationary_window, 9)
            if stationary_at is None and back in peaks and abs(peak - peaks[back]) < cfg.stationary_tol:
                stationary_at = t
        if target in clock.snaps:
            rec.snapshots.append(Snapshot(t, t / unit, rho.copy(), S.copy()))
        if stationary_at is not None and cfg.stop_when_stationary:
            break
    if not rec.snapshots or rec.snapshots[-1].t != t:
        rec.snapshots.append(Snapshot(t, t / unit, rho.copy(), S.copy()))
    rec.summary.update(
        regime=cfg.regime,
        coefficient=c,
        n_steps=n_steps,
        T_end=t,
        T_lambda=t / unit,
        stationary=stationary_at is not None,
        stationary_time=stationary_at if stationary_at is not None else -1.0,
        delta_rho=float(rho.max() - 1.0),
        mass_drift=float(rho.sum() - mass0) * dx,
    )
    rec.final_S = S.copy()
    return rec
