"""Run records shared by all engines, and their CSV serialization.

Floats are written with ``repr`` (shortest round-trip decimal), rows end with
``\\n`` and the decimal separator is always ``.``, so identical records give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .grid import Grid1D


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class Snapshot:
    t: float
    t_lambda: float
    rho: np.ndarray
    S: np.ndarray
    phase: np.ndarray | None = None  # p[i, k] for the asymptotic engine
    m_centers: np.ndarray | None = None


@dataclass
class DeviationSeries:
    """Samples of max_x |rho - 1| against raw and scaled time."""

    t: list = field(default_factory=list)
    t_lambda: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, t, t_lambda, value):
        if self.t_lambda and not t_lambda > self.t_lambda[-1]:
            raise ValueError("deviation samples must have strictly increasing times")
        if not value >= 0:
            raise ValueError("deviation must be non-negative")
        self.t.append(float(t))
        self.t_lambda.append(float(t_lambda))
        self.values.append(float(value))

    def __len__(self):
        return len(self.values)


@dataclass
class RunRecord:
    engine: str
    grid: Grid1D
    params: dict
    snapshots: list[Snapshot] = field(default_factory=list)
    deviation: DeviationSeries = field(default_factory=DeviationSeries)
    summary: dict[str, Any] = field(default_factory=dict)
    ensembles: dict = field(default_factory=dict)  # t -> ParticleEnsemble copy (MC only)
    final_ensemble: Any = None
    final_S: np.ndarray | None = None
    final_phase: Any = None  # PhaseDensity (asymptotic only)

    def snapshot_at(self, t_lambda: float, tol: float = 1e-9) -> Snapshot:
        for s in self.snapshots:
            if abs(s.t_lambda - t_lambda) <= tol * max(1.0, abs(t_lambda)):
                return s
        raise KeyError(f"no snapshot at t_lambda={t_lambda!r}")

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    # -- serialization -------------------------------------------------
    def write_csv(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        x = self.grid.centers
        index_rows = [["index", "t", "t_lambda", "file"]]
        for j, snap in enumerate(self.snapshots):
            name = f"snapshot_{j:04d}.csv"
            rows = [["x", "rho", "S"]]
            rows += [[fmt(a), fmt(b), fmt(c)] for a, b, c in zip(x, snap.rho, snap.S)]
            written.append(_write_rows(outdir / name, rows))
            index_rows.append([str(j), fmt(snap.t), fmt(snap.t_lambda), name])
            if snap.phase is not None:
                pname = f"phase_{j:04d}.csv"
                prow = [["x", "m", "p"]]
                for i, xi in enumerate(x):
                    for k, mk in enumerate(snap.m_centers):
                        prow.append([fmt(xi), fmt(mk), fmt(snap.phase[i, k])])
                written.append(_write_rows(outdir / pname, prow))
        written.append(_write_rows(outdir / "snapshots.csv", index_rows))
        dev = [["t", "t_lambda", "max_deviation"]]
        dev += [[fmt(a), fmt(b), fmt(c)] for a, b, c in zip(self.deviation.t, self.deviation.t_lambda, self.deviation.values)]
        written.append(_write_rows(outdir / "deviation.csv", dev))
        summ = [["key", "value"]] + [[k, fmt(self.summary[k])] for k in sorted(self.summary)]
        written.append(_write_rows(outdir / "summary.csv", summ))
        return written


def _write_rows(path: Path, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    path.write_bytes(buf.getvalue().encode("utf-8"))
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
