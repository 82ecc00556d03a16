"""Monte Carlo particle engine for the two-stream model with internal state.

Each step runs, in order: advection, density deposit, explicit chemoattractant
update, internal-state update along the particle path, and tumbling. Tumble
draws come from a counter-based hash of ``(seed, particle id, step)`` so the
outcome does not depend on how particles are split across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from numba import uint64

from .errors import (
    CflViolation,
    FieldBlowup,
    NonPositiveConcentration,
    ProbabilityOverflow,
    ValidationError,
)
from .field import explicit_dt_bound
from .grid import Grid1D, ScalarField
from .model import ModelParams, require_valid
from .records import RunRecord, Snapshot

BLOWUP_LIMIT = 1e6
N_CHUNKS = 64  # fixed partition for the deposit reduction; independent of thread count
_UNIT = 1.0 / 9007199254740992.0  # 2**-53


# ---------------------------------------------------------------------------
# counter-based random numbers (SplitMix64 finalizer)


@nb.njit(cache=True, error_model="numpy")
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@nb.njit(cache=True, error_model="numpy")
def _step_key(key, step):
    return _mix64(key + uint64(step) * uint64(0xD1B54A32D192ED03))


@nb.njit(cache=True, error_model="numpy")
def _uniform(step_key, pid):
    z = _mix64(step_key + uint64(pid) * uint64(0x9E3779B97F4A7C15))
    return float(z >> uint64(11)) * _UNIT


def seed_key(seed: int) -> np.uint64:
    """64-bit stream key derived from a user seed."""
    z = (int(seed) * 0x9E3779B97F4A7C15 + 0x632BE59BD9B4E019) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(z ^ (z >> 31))


@nb.njit(cache=True)
def _uniforms(key, step, n):
    out = np.empty(n)
    sk = _step_key(key, step)
    for l in range(n):
        out[l] = _uniform(sk, l)
    return out


# ---------------------------------------------------------------------------
# per-particle helpers shared by the public ops and the fused run loop


@nb.njit(cache=True, error_model="numpy")
def _wrap_move(x, v, dt, L):
    x = x + v * dt
    if x >= L:
        x -= L
    elif x < 0.0:
        x += L
        if x >= L:
            x = 0.0
    return x


@nb.njit(cache=True, error_model="numpy")
def _cell(x, inv_dx, I):
    i = int(x * inv_dx)
    return I - 1 if i >= I else i


@nb.njit(cache=True, error_model="numpy")
def _slopes(S, dx, sl, sr):
    I = S.size
    for i in range(I):
        ip = i + 1 if i < I - 1 else 0
        im = i - 1 if i > 0 else I - 1
        sl[i] = (S[i] - S[im]) / dx
        sr[i] = (S[ip] - S[i]) / dx


@nb.njit(cache=True, error_model="numpy")
def _lin(s_i, sl_i, sr_i, off):
    # left half of a cell uses the left slope, right half the right slope
    return s_i + (sl_i if off < 0.0 else sr_i) * off


@nb.njit(cache=True, error_model="numpy")
def _relax(y, s_new, s_old, denom):
    return (y + (s_new - s_old) / s_old) / denom


@nb.njit(cache=True, error_model="numpy")
def _lam(y, chi, delta):
    q = y / delta
    return 1.0 - chi * q / math.sqrt(1.0 + q * q)


# ---------------------------------------------------------------------------
# kernels; compiled once serial and once parallel from the same source


def _advect_deposit_py(r, v, dt, L, dx, partial):
    n = r.size
    nch, I = partial.shape
    inv_dx = 1.0 / dx
    chunk = (n + nch - 1) // nch
    for c in nb.prange(nch):
        for i in range(I):
            partial[c, i] = 0.0
        lo = c * chunk
        hi = min(n, lo + chunk)
        for l in range(lo, hi):
            x = _wrap_move(r[l], v[l], dt, L)
            r[l] = x
            partial[c, _cell(x, inv_dx, I)] += 1.0


def _internal_py(r, y, s_path, S, sl, sr, dx, denom):
    I = S.size
    inv_dx = 1.0 / dx
    for l in nb.prange(r.size):
        x = r[l]
        i = _cell(x, inv_dx, I)
        s = _lin(S[i], sl[i], sr[i], x - (i + 0.5) * dx)
        y[l] = _relax(y[l], s, s_path[l], denom)
        s_path[l] = s


def _tumble_py(v, y, hr, chi, delta, sk):
    # per-particle streams, so any split of the loop gives the same flips
    for l in nb.prange(v.size):
        flip = _uniform(sk, l) < hr * _lam(y[l], chi, delta)
        v[l] = -v[l] if flip else v[l]


def _segment_py(r, v, y, s_path, S, rho_sum, k0, k1, dt, L, dx, D_S, sigma_S, n_bar,
                denom, hr, chi, delta, key, frozen, partial, adv, internal, flip):
    I = S.size
    sl = np.empty(I)
    sr = np.empty(I)
    S_new = np.empty(I)
    rho = np.empty(I)
    nch = partial.shape[0]
    ds = dt / sigma_S
    for k in range(k0 + 1, k1 + 1):
        adv(r, v, dt, L, dx, partial)
        for i in range(I):
            acc = 0.0
            for c in range(nch):
                acc += partial[c, i]
            rho[i] = acc / n_bar
        if not frozen:
            for i in range(I):
                ip = i + 1 if i < I - 1 else 0
                im = i - 1 if i > 0 else I - 1
                lap = (S[ip] - 2.0 * S[i] + S[im]) / (dx * dx)
                S_new[i] = S[i] + ds * (D_S * lap - S[i] + rho[i])
            for i in range(I):
                S[i] = S_new[i]
        _slopes(S, dx, sl, sr)
        internal(r, y, s_path, S, sl, sr, dx, denom)
        flip(v, y, hr, chi, delta, _step_key(key, k))
        for i in range(I):
            rho_sum[i] += rho[i]


_opts = dict(cache=True, error_model="numpy")
_advect_deposit = {p: nb.njit(parallel=p, **_opts)(_advect_deposit_py) for p in (False, True)}
_internal = {p: nb.njit(parallel=p, **_opts)(_internal_py) for p in (False, True)}
_tumble = {p: nb.njit(parallel=p, **_opts)(_tumble_py) for p in (False, True)}
_segment = nb.njit(**_opts)(_segment_py)


@nb.njit(cache=True, error_model="numpy")
def _interp_many(S, dx, xs):
    out = np.empty(xs.size)
    inv_dx = 1.0 / dx
    sl = np.empty(S.size)
    sr = np.empty(S.size)
    _slopes(S, dx, sl, sr)
    I = S.size
    for j in range(xs.size):
        x = xs[j]
        i = _cell(x, inv_dx, I)
        out[j] = _lin(S[i], sl[i], sr[i], x - (i + 0.5) * dx)
    return out


@nb.njit(cache=True, error_model="numpy")
def _fill_slopes(S, dx, sl, sr):
    _slopes(S, dx, sl, sr)


@nb.njit(cache=True, error_model="numpy")
def _tumble_only(v, y, hr, chi, delta, sk):
    flipped = 0
    for l in range(v.size):
        if _uniform(sk, l) < hr * _lam(y[l], chi, delta):
            v[l] = -v[l]
            flipped += 1
    return flipped


# ---------------------------------------------------------------------------
# data types


@dataclass
class ParticleEnsemble:
    """Positions in ``[0, L)``, velocities of exactly +-1, internal deviations.

    ``s_path`` holds the chemoattractant concentration each particle sensed at
    the previous step; the internal-state update differentiates along it.
    """

    r: np.ndarray
    v: np.ndarray
    y: np.ndarray
    s_path: np.ndarray
    L: float

    def __post_init__(self):
        self.r = np.ascontiguousarray(self.r, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.int8)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.s_path = np.ascontiguousarray(self.s_path, dtype=np.float64)
        n = self.r.size
        if not (self.v.size == self.y.size == self.s_path.size == n):
            raise ValidationError("ensemble arrays must have identical length")

    @property
    def size(self) -> int:
        return self.r.size

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.r.copy(), self.v.copy(), self.y.copy(), self.s_path.copy(), self.L)


@dataclass
class McConfig:
    params: ModelParams
    grid: Grid1D
    N_bar: int = 28_800
    dt: float = 1e-3
    T_end: float = 1.0
    seed: int = 0
    snapshot_schedule: list = field(default_factory=list)  # raw times
    avg_window: float = 0.05  # in t_lambda units
    ensemble_schedule: list = field(default_factory=list)  # raw times for particle copies
    frozen_S: ScalarField | None = None
    parallel: bool = False

    def __post_init__(self):
        require_valid(self.params)
        problems = []
        if abs(self.grid.L - self.params.L) > 1e-12 * self.params.L:
            problems.append(f"grid length {self.grid.L!r} differs from params.L {self.params.L!r}")
        if int(self.N_bar) != self.N_bar or self.N_bar < 1:
            problems.append(f"N_bar must be an integer >= 1, got {self.N_bar!r}")
        if not self.dt > 0:
            problems.append(f"dt must be positive, got {self.dt!r}")
        if not self.T_end >= 0:
            problems.append(f"T_end must be non-negative, got {self.T_end!r}")
        if not self.avg_window > 0:
            problems.append("avg_window must be positive")
        for t in list(self.snapshot_schedule) + list(self.ensemble_schedule):
            if not 0 <= t <= self.T_end + 0.5 * self.dt:
                problems.append(f"output time {t!r} outside [0, T_end]")
        if self.frozen_S is not None and self.frozen_S.grid != self.grid:
            problems.append("frozen_S must live on the run grid")
        if problems:
            raise ValidationError(problems)
        self.N_bar = int(self.N_bar)

    @property
    def time_unit(self) -> float:
        """Raw time per unit of scaled time t_lambda (lambda0 * L^2)."""
        return self.params.lambda0 * self.params.L**2

    def t_lambda(self, t: float) -> float:
        return t / self.time_unit

    @classmethod
    def scaled(cls, params: ModelParams, T_lambda: float, snapshots_lambda=(), ensembles_lambda=(), **kw) -> "McConfig":
        """Build a config with end time and output times given in t_lambda units."""
        unit = params.lambda0 * params.L**2
        numerics = default_numerics(params.lambda0, params.delta)
        grid = kw.pop("grid", None) or Grid1D(kw.pop("I", numerics["I"]), params.L)
        kw.setdefault("N_bar", numerics["N_bar"])
        kw.setdefault("dt", numerics["dt"])
        return cls(
            params=params,
            grid=grid,
            T_end=T_lambda * unit,
            snapshot_schedule=[s * unit for s in snapshots_lambda],
            ensemble_schedule=[s * unit for s in ensembles_lambda],
            **kw,
        )


def default_numerics(lambda0: float, delta: float) -> dict:
    """Mesh, particle count and time step used for a given tumbling frequency."""
    if lambda0 < 100:
        dt = 1e-3
    elif lambda0 <= 200:
        dt = 2e-4
    else:
        dt = 5e-5
    if lambda0 >= 500 and delta <= 0.01:
        return {"I": 100, "N_bar": 7_400, "dt": dt}
    return {"I": 50, "N_bar": 28_800, "dt": dt}


# ---------------------------------------------------------------------------
# public operations


def init_uniform(cfg: McConfig) -> ParticleEnsemble:
    """Exactly ``N_bar`` particles per cell, uniform in the cell, y = 0, v = +-1."""
    grid = cfg.grid
    rng = np.random.default_rng(cfg.seed)
    cells = np.repeat(np.arange(grid.I, dtype=np.float64), cfg.N_bar)
    r = (cells + rng.random(cells.size)) * grid.dx
    r[r >= grid.L] = 0.0
    v = np.where(rng.random(cells.size) < 0.5, 1, -1).astype(np.int8)
    S0 = cfg.frozen_S.values if cfg.frozen_S is not None else np.ones(grid.I)
    s_path = _interp_many(S0, grid.dx, r)
    return ParticleEnsemble(r=r, v=v, y=np.zeros(r.size), s_path=s_path, L=grid.L)


def advect(ens: ParticleEnsemble, dt: float) -> None:
    """Move every particle by ``v*dt`` with periodic wrap into ``[0, L)``; in place."""
    if not dt > 0:
        raise ValidationError("dt must be positive")
    scratch = np.zeros((N_CHUNKS, 4))
    _advect_deposit[False](ens.r, ens.v, float(dt), float(ens.L), ens.L / 4, scratch)


def deposit_density(ens: ParticleEnsemble, grid: Grid1D, N_bar: int) -> ScalarField:
    counts = np.bincount(_cells(ens.r, grid), minlength=grid.I).astype(np.float64)
    return ScalarField(grid, counts / N_bar)


def _cells(x, grid: Grid1D) -> np.ndarray:
    idx = (np.asarray(x, dtype=np.float64) * (1.0 / grid.dx)).astype(np.int64)
    return np.minimum(idx, grid.I - 1)


def interpolate_S(S: ScalarField, x):
    """Piecewise-linear chemoattractant value at position(s) ``x`` in [0, L).

    Anchored at the cell-center value; the left half of a cell uses the
    slope to the left neighbour, the right half the slope to the right one.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = _interp_many(S.values, S.grid.dx, xs)
    return float(out[0]) if np.ndim(x) == 0 else out


def update_internal(ens: ParticleEnsemble, S_now: ScalarField, dt: float, params: ModelParams) -> None:
    """Semi-implicit internal-state update along each particle path; in place.

    Uses ``ens.s_path`` as the concentration sensed at the previous step and
    replaces it by the value interpolated at the current position.
    """
    if np.any(ens.s_path <= 0):
        raise NonPositiveConcentration("pathway concentration must be positive")
    denom = 1.0 + dt / params.tau
    S = S_now.values
    sl = np.empty(S.size)
    sr = np.empty(S.size)
    _fill_slopes(S, S_now.grid.dx, sl, sr)
    _internal[False](ens.r, ens.y, ens.s_path, S, sl, sr, S_now.grid.dx, denom)


def tumble_half_rate(dt: float, params: ModelParams) -> float:
    hr = 0.5 * dt * params.lambda0
    if hr * (1.0 + params.chi) >= 1.0:
        raise ProbabilityOverflow(
            f"tumble probability dt*lambda0*(1+chi)/2 = {hr * (1 + params.chi)!r} must stay below 1"
        )
    return hr


def tumble(ens: ParticleEnsemble, dt: float, params: ModelParams, seed: int, step: int) -> int:
    """Flip velocities with probability ``(dt*lambda0/2) * modulation(y)``.

    Returns the number of flipped particles.
    """
    hr = tumble_half_rate(dt, params)
    # keys cross the python boundary as plain ints; keep them unsigned
    sk = np.uint64(_step_key(seed_key(seed), np.uint64(step)))
    return int(_tumble_only(ens.v, ens.y, hr, params.chi, params.delta, sk))


def step_uniforms(seed: int, step: int, n: int) -> np.ndarray:
    """The tumble draws used for particles ``0..n-1`` at ``step``."""
    return _uniforms(seed_key(seed), np.uint64(step), n)


# ---------------------------------------------------------------------------
# driver


def _boundaries(cfg: McConfig, n_steps: int, W: int):
    snap_steps = sorted({min(n_steps, int(round(t / cfg.dt))) for t in cfg.snapshot_schedule})
    ens_steps = sorted({min(n_steps, int(round(t / cfg.dt))) for t in cfg.ensemble_schedule})
    events = set(range(W, n_steps + 1, W)) | set(ens_steps) | {n_steps}
    for k in snap_steps:
        events.add(k)
        if k - W > 0:
            events.add(k - W)
    events.discard(0)
    return sorted(events), snap_steps, ens_steps


def run_mc(cfg: McConfig, ens: ParticleEnsemble | None = None, S0: ScalarField | None = None) -> RunRecord:
    """Integrate the particle system to ``cfg.T_end``.

    Densities are reported as trailing averages over ``cfg.avg_window``
    (t_lambda units) ending at each output time; the time-0 snapshot is the
    instantaneous initial state. The deviation series holds
    ``max_x |rho - 1|`` of consecutive non-overlapping window averages.
    """
    params, grid = cfg.params, cfg.grid
    dt = cfg.dt
    hr = tumble_half_rate(dt, params)
    frozen = cfg.frozen_S is not None
    if not frozen:
        bound = explicit_dt_bound(grid, params)
        if dt > bound:
            raise CflViolation(dt, bound, "chemoattractant")
    if ens is None:
        ens = init_uniform(cfg)
    if ens.size != grid.I * cfg.N_bar:
        raise ValidationError("ensemble size must equal I * N_bar")
    if frozen:
        S = cfg.frozen_S.values.copy()
    else:
        S = (S0.values.copy() if S0 is not None else np.ones(grid.I))

    n_steps = int(math.ceil(cfg.T_end / dt - 1e-9))
    W = max(1, int(round(cfg.avg_window * cfg.time_unit / dt)))
    events, snap_steps, ens_steps = _boundaries(cfg, n_steps, W)
    key = seed_key(cfg.seed)
    denom = 1.0 + dt / params.tau
    partial = np.zeros((N_CHUNKS, grid.I))
    adv = _advect_deposit[cfg.parallel]
    internal = _internal[cfg.parallel]
    flip = _tumble[cfg.parallel]
    unit = cfg.time_unit

    rec = RunRecord(engine="mc", grid=grid, params=params.as_dict())
    rho0 = deposit_density(ens, grid, cfg.N_bar).values
    rec.deviation.append(0.0, 0.0, float(np.max(np.abs(rho0 - 1.0))))
    if 0 in snap_steps:
        rec.snapshots.append(Snapshot(0.0, 0.0, rho0.copy(), S.copy()))
    if 0 in ens_steps:
        rec.ensembles[0.0] = ens.copy()

    seg_end = [0]
    seg_sum = [np.zeros(grid.I)]
    k_prev = 0
    for k_evt in events:
        rho_sum = np.zeros(grid.I)
        _segment(
            ens.r, ens.v, ens.y, ens.s_path, S, rho_sum, k_prev, k_evt, dt, grid.L, grid.dx,
            params.D_S, params.sigma_S, float(cfg.N_bar), denom, hr, params.chi, params.delta,
            key, frozen, partial, adv, internal, flip,
        )
        seg_end.append(k_evt)
        seg_sum.append(rho_sum)
        k_prev = k_evt
        smax = float(np.max(np.abs(S)))
        rmax = float(np.max(rho_sum)) / max(1, k_evt - seg_end[-2])
        if not (smax <= BLOWUP_LIMIT and rmax <= BLOWUP_LIMIT):
            raise FieldBlowup(f"field exceeded {BLOWUP_LIMIT:g} at t={k_evt * dt!r}")
        if np.min(S) <= 0:
            raise NonPositiveConcentration(f"S became non-positive at t={k_evt * dt!r}")
        t = k_evt * dt
        if k_evt % W == 0:
            avg = _window_mean(seg_end, seg_sum, k_evt - W, k_evt)
            rec.deviation.append(t, t / unit, float(np.max(np.abs(avg - 1.0))))
        if k_evt in snap_steps:
            lo = max(0, k_evt - W)
            rec.snapshots.append(Snapshot(t, t / unit, _window_mean(seg_end, seg_sum, lo, k_evt), S.copy()))
        if k_evt in ens_steps:
            rec.ensembles[t] = ens.copy()

    rec.summary.update(
        n_particles=ens.size,
        n_steps=n_steps,
        dt=dt,
        avg_window_steps=W,
        T_end=n_steps * dt,
        T_lambda=n_steps * dt / unit,
        seed=cfg.seed,
    )
    rec.final_ensemble = ens
    rec.final_S = S.copy()
    return rec


def _window_mean(seg_end, seg_sum, lo, hi):
    acc = np.zeros_like(seg_sum[0])
    for j in range(1, len(seg_end)):
        if seg_end[j - 1] >= lo and seg_end[j] <= hi:
            acc += seg_sum[j]
    return acc / (hi - lo)
