"""Physical model: parameters, scaling, tumbling modulation and log sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import InvalidDimensional, NonPositiveConcentration, ValidationError
from .grid import ScalarField


@dataclass(frozen=True)
class ModelParams:
    """Nondimensional parameters of the two-stream model.

    ``lambda0`` is the mean tumbling frequency, ``tau`` the adaptation time,
    ``delta`` the response stiffness and ``chi`` the modulation amplitude.
    ``sigma`` and ``sigma_S`` scale the time derivatives of the kinetic and
    chemoattractant equations; the Monte Carlo engine uses 1 for both.
    """

    lambda0: float
    tau: float
    delta: float
    chi: float = 0.5
    D_S: float = 1.0
    L: float = 10.0
    sigma: float = 1.0
    sigma_S: float = 1.0

    @classmethod
    def from_alpha(cls, lambda0: float, alpha: float, **kw) -> "ModelParams":
        return cls(lambda0=lambda0, tau=alpha / lambda0, **kw)

    @classmethod
    def from_tau_tilde(cls, lambda0: float, tau_tilde: float, **kw) -> "ModelParams":
        return cls(lambda0=lambda0, tau=tau_tilde * lambda0, **kw)

    @property
    def epsilon(self) -> float:
        return 1.0 / self.lambda0

    @property
    def alpha(self) -> float:
        """Relative adaptation time, adaptation time over mean run time."""
        return self.lambda0 * self.tau

    @property
    def tau_tilde(self) -> float:
        return self.epsilon * self.tau

    @property
    def stiffness(self) -> float:
        """chi/delta, the slope magnitude of the modulation at y = 0."""
        return self.chi / self.delta

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate(params: ModelParams) -> list[str]:
    """Return every violated invariant of ``params``; an empty list means valid."""
    out = []
    for name in ("lambda0", "tau", "delta", "chi", "D_S", "L", "sigma", "sigma_S"):
        val = getattr(params, name)
        if not isinstance(val, (int, float, np.floating, np.integer)) or not math.isfinite(val):
            out.append(f"{name} must be a finite number, got {val!r}")
    if out:
        return out
    if not 0.0 <= params.chi < 1.0:
        # chi = 0 is admitted as the null-chemotaxis control; modulation is then 1.
        out.append(f"chi must lie in [0,1), got chi={params.chi!r}")
    for name in ("lambda0", "tau", "delta", "D_S", "L", "sigma", "sigma_S"):
        val = getattr(params, name)
        if not val > 0:
            out.append(f"{name} must be positive, got {name}={val!r}")
    return out


def require_valid(params: ModelParams) -> ModelParams:
    problems = validate(params)
    if problems:
        raise ValidationError(problems)
    return params


def response(y, chi: float, delta: float):
    """Odd, bounded response chi*(y/delta)/sqrt(1+(y/delta)^2)."""
    q = np.asarray(y, dtype=np.float64) / delta
    return chi * q / np.sqrt(1.0 + q * q)


def modulation(y, params: ModelParams):
    """Tumbling-frequency modulation for internal-state deviation ``y``.

    Equals ``1 - R(y/delta)`` and stays within ``[1-chi, 1+chi]``. Accepts
    scalars or arrays.
    """
    out = 1.0 - response(y, params.chi, params.delta)
    return float(out) if np.ndim(out) == 0 else out


def modulation_slope_at_zero(params: ModelParams) -> float:
    """Derivative of the modulation at y = 0, which is -chi/delta."""
    return -params.chi / params.delta


def log_sensing(S: ScalarField) -> ScalarField:
    """Equilibrium internal state M = ln S, cell by cell."""
    vals = S.values
    if np.any(vals <= 0):
        bad = int(np.argmin(vals))
        raise NonPositiveConcentration(
            f"S must be positive for log sensing; S[{bad}]={vals[bad]!r}"
        )
    return ScalarField(S.grid, np.log(vals))


@dataclass(frozen=True)
class DimensionalParams:
    """Physical (dimensional) inputs.

    Units are whatever the caller uses consistently: ``V0`` length/time,
    ``lambda0_dim`` 1/time, ``tau_dim`` and ``t0`` time, ``D_S_dim``
    length^2/time, ``a`` 1/time, ``L_dim`` length.
    """

    V0: float
    lambda0_dim: float
    tau_dim: float
    D_S_dim: float
    a: float
    b: float
    rho0: float
    L_dim: float
    t0: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def diffusion_length(d: DimensionalParams) -> float:
    return math.sqrt(d.D_S_dim / d.a)


def nondimensionalize(d: DimensionalParams, delta: float = 0.1, chi: float = 0.5) -> ModelParams:
    """Scale dimensional inputs by the chemoattractant diffusion length.

    The length unit is ``L0 = sqrt(D_S/a)`` so the scaled diffusion constant
    is 1. ``delta`` and ``chi`` are already dimensionless and pass through.
    """
    bad = [f"{k} must be positive, got {v!r}" for k, v in d.as_dict().items() if not v > 0]
    if bad:
        raise InvalidDimensional(bad)
    L0 = diffusion_length(d)
    return ModelParams(
        lambda0=d.lambda0_dim / (d.V0 / L0),
        tau=d.tau_dim / (L0 / d.V0),
        delta=delta,
        chi=chi,
        D_S=d.D_S_dim / (d.a * L0 * L0),
        L=d.L_dim / L0,
        sigma=L0 / (d.t0 * d.V0),
        sigma_S=1.0 / (d.a * d.t0),
    )


def redimensionalize(params: ModelParams, V0: float, a: float, b: float, rho0: float) -> DimensionalParams:
    """Inverse of :func:`nondimensionalize` given the reference speed and rates.

    ``D_S_dim`` follows from the scaled diffusion constant once ``L0`` is
    fixed; ``L0`` itself comes from ``sigma_S`` and ``sigma``
    (``L0 = sigma * V0 / (a * sigma_S)``).
    """
    t0 = 1.0 / (a * params.sigma_S)
    L0 = params.sigma * t0 * V0
    return DimensionalParams(
        V0=V0,
        lambda0_dim=params.lambda0 * V0 / L0,
        tau_dim=params.tau * L0 / V0,
        D_S_dim=params.D_S * a * L0 * L0,
        a=a,
        b=b,
        rho0=rho0,
        L_dim=params.L * L0,
        t0=t0,
    )
