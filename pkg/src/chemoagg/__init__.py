"""Run-and-tumble chemotaxis with internal adaptation: particle simulations,
Keller-Segel and large-adaptation-time limits, and linear stability."""

__version__ = "0.1.0"

from .errors import (
    ChemoaggError,
    CflViolation,
    DomainTooSmall,
    EmptySample,
    FieldBlowup,
    InsufficientCoverage,
    NegativeDensity,
    ParseError,
    ProbabilityOverflow,
    ValidationError,
)
from .grid import Grid1D, ScalarField
from .model import ModelParams, modulation

__all__ = [
    "__version__",
    "ChemoaggError",
    "CflViolation",
    "DomainTooSmall",
    "EmptySample",
    "FieldBlowup",
    "InsufficientCoverage",
    "NegativeDensity",
    "ParseError",
    "ProbabilityOverflow",
    "ValidationError",
    "Grid1D",
    "ScalarField",
    "ModelParams",
    "modulation",
]
