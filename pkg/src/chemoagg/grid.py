"""Uniform periodic 1-D grid and cell-averaged fields living on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic mesh of ``I`` cells on ``[0, L)``.

    Cell ``i`` covers ``[i*dx, (i+1)*dx)`` and its center sits at ``(i+1/2)*dx``.
    """

    I: int
    L: float = 10.0

    def __post_init__(self):
        if int(self.I) != self.I or self.I < 4:
            raise ValidationError(f"grid needs at least 4 cells, got I={self.I!r}")
        if not self.L > 0:
            raise ValidationError(f"domain length must be positive, got L={self.L!r}")
        object.__setattr__(self, "I", int(self.I))
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self) -> float:
        return self.L / self.I

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.I) + 0.5) * self.dx

    def cell_of(self, x):
        """Index of the cell containing ``x`` (wrapped into the domain)."""
        xw = np.mod(x, self.L)
        idx = np.floor(xw / self.dx).astype(np.int64)
        return np.minimum(idx, self.I - 1)


@dataclass
class ScalarField:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.I,):
            raise ValidationError(
                f"field has shape {self.values.shape}, grid expects ({self.grid.I},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("field contains non-finite values")

    @classmethod
    def constant(cls, grid: Grid1D, value: float = 1.0) -> "ScalarField":
        return cls(grid, np.full(grid.I, float(value)))

    @classmethod
    def from_function(cls, grid: Grid1D, func) -> "ScalarField":
        return cls(grid, np.asarray(func(grid.centers), dtype=np.float64))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def mean(self) -> float:
        return float(self.values.mean())

    def __len__(self):
        return self.grid.I
