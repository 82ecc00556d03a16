"""Linear stability of the uniform state of the Keller-Segel system."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import ModelParams

STABLE = "stable"
INTERMEDIATE = "intermediate"
UNSTABLE = "unstable"

STABLE_BELOW = 0.01
UNSTABLE_FROM = 0.1


@dataclass(frozen=True)
class DispersionQuery:
    k: float
    alpha: float
    chi: float
    delta: float
    D_S: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.k > 0:
            problems.append(f"k must be positive, got {self.k!r}")
        if not self.alpha > 0:
            problems.append(f"alpha must be positive, got {self.alpha!r}")
        if not self.delta > 0:
            problems.append(f"delta must be positive, got {self.delta!r}")
        if not self.D_S >= 0:
            problems.append(f"D_S must be non-negative, got {self.D_S!r}")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def for_mode(cls, n: int, params: ModelParams) -> "DispersionQuery":
        return cls(
            k=2.0 * math.pi * n / params.L,
            alpha=params.alpha,
            chi=params.chi,
            delta=params.delta,
            D_S=params.D_S,
        )


def _gain(alpha: float) -> float:
    # alpha/(1+alpha), written to stay finite for alpha = inf
    return 1.0 if math.isinf(alpha) else alpha / (1.0 + alpha)


def growth_rate(q: DispersionQuery) -> float:
    """Growth rate mu(k) of a Fourier mode of the linearized KS system."""
    k2 = q.k * q.k
    return -k2 * (1.0 - _gain(q.alpha) * (q.chi / q.delta) / (1.0 + q.D_S * k2))


def critical_stiffness(k: float, alpha: float, D_S: float = 1.0) -> float:
    """Smallest chi/delta for which mode ``k`` is linearly unstable."""
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha!r}")
    return (1.0 + D_S * k * k) / _gain(alpha)


@dataclass(frozen=True)
class ModeScan:
    n: int
    k: float
    mu: float
    all_stable: bool
    rates: np.ndarray


def most_unstable_mode(params: ModelParams, L: float | None = None, n_max: int = 50) -> ModeScan:
    """Scan the admissible modes ``k = 2 pi n / L`` for ``n = 1..n_max``."""
    L = params.L if L is None else L
    ns = np.arange(1, n_max + 1)
    ks = 2.0 * np.pi * ns / L
    rates = np.array(
        [growth_rate(DispersionQuery(k, params.alpha, params.chi, params.delta, params.D_S)) for k in ks]
    )
    j = int(np.argmax(rates))
    return ModeScan(n=int(ns[j]), k=float(ks[j]), mu=float(rates[j]), all_stable=bool(rates[j] < 0), rates=rates)


def classify(delta_rho_bar: float) -> str:
    """Three-way outcome class from the time-averaged maximum deviation.

    Boundary values go to the higher class.
    """
    if not delta_rho_bar >= 0:
        raise ValidationError(f"deviation must be non-negative, got {delta_rho_bar!r}")
    if delta_rho_bar < STABLE_BELOW:
        return STABLE
    if delta_rho_bar < UNSTABLE_FROM:
        return INTERMEDIATE
    return UNSTABLE


def critical_line(alphas, L: float = 10.0, D_S: float = 1.0, n: int = 1) -> list[tuple[float, float]]:
    """(alpha, critical chi/delta) pairs for the lowest admissible mode."""
    k = 2.0 * math.pi * n / L
    return [(float(a), critical_stiffness(k, float(a), D_S)) for a in alphas]
