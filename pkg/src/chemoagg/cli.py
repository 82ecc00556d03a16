"""Command-line harness: single runs, parameter sweeps, stability tables.

Usage::

    chemoagg <mc|ks|asymptotic|stability|sweep> --config FILE [--set section.key=value ...] --out DIR

Exit status: 0 success, 1 invalid input, 2 runtime failure, 3 blow-up.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotic import AsymptoticConfig, MAxis, run_asymptotic
from .config import ExperimentConfig, build_params, merge_point, parse_config
from .diagnostics import (
    default_edges,
    detect_plateau,
    find_center,
    internal_histogram,
    max_log_gradient,
    mean_run_length,
    peak_density,
    peak_position,
    time_avg_deviation,
)
from .errors import (
    ChemoaggError,
    CflViolation,
    FieldBlowup,
    NegativeDensity,
    ParseError,
    ProbabilityOverflow,
    ValidationError,
)
from .grid import Grid1D, ScalarField
from .ks import KsConfig, run_ks
from .mc import McConfig, default_numerics, run_mc
from .model import modulation
from .records import _write_rows, fmt
from .stability import classify, critical_stiffness, most_unstable_mode

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_BLOWUP = 0, 1, 2, 3
WORKERS_ENV = "CHEMOAGG_WORKERS"


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (FieldBlowup, NegativeDensity)):
        return EXIT_BLOWUP
    if isinstance(exc, (ValidationError, ParseError, CflViolation, ProbabilityOverflow)):
        return EXIT_INVALID
    return EXIT_RUNTIME


# ---------------------------------------------------------------------------
# engines


def time_unit(cfg: ExperimentConfig) -> float:
    """Engine time per unit of t_lambda."""
    p = cfg.params
    return p.lambda0 * p.L**2 if cfg.engine == "mc" else p.L**2


def engine_config(cfg: ExperimentConfig):
    p = cfg.params
    n = cfg.numerics
    T_lambda = n.get("T_lambda", 1.0)
    snaps = sorted(set(cfg.snapshots) | {T_lambda})
    if cfg.engine == "mc":
        d = default_numerics(p.lambda0, p.delta)
        grid = Grid1D(n.get("I", d["I"]), p.L)
        return McConfig.scaled(
            p, T_lambda, snapshots_lambda=snaps, ensembles_lambda=[T_lambda], grid=grid,
            N_bar=n.get("N_bar", d["N_bar"]), dt=n.get("dt", d["dt"]), seed=cfg.seed,
            avg_window=n.get("avg_window", 0.05), parallel=n.get("parallel", False),
        )
    grid = Grid1D(n.get("I", 50), p.L)
    unit = p.L**2
    common = dict(
        T_end=T_lambda * unit,
        snapshot_schedule=[s * unit for s in snaps],
        amplitude=n.get("amplitude", 1e-2),
        mode=n.get("mode", 1),
        noise_seed=n.get("noise_seed"),
        sample_interval=n.get("sample_interval", 0.1),
        stop_when_stationary=n.get("stop_when_stationary", False),
    )
    if "dt" in n:
        common["dt"] = n["dt"]
    if cfg.engine == "ks":
        return KsConfig(p, grid, regime=n.get("regime", "fast"), **common)
    axis = MAxis(n.get("K", 200), n["Y"]) if "Y" in n else None
    return AsymptoticConfig(p, grid, m_axis=axis, K=n.get("K", 200), keep_phase=cfg.phase, **common)


def execute(cfg: ExperimentConfig):
    ec = engine_config(cfg)
    if cfg.engine == "mc":
        return run_mc(ec)
    if cfg.engine == "ks":
        return run_ks(ec)
    return run_asymptotic(ec)


def summarize(cfg: ExperimentConfig, rec) -> dict:
    """Scalar diagnostics of a finished run."""
    out = {}
    T_lambda = rec.summary["T_lambda"]
    final = ScalarField(rec.grid, rec.final.rho)
    if "deviation" in cfg.diagnostics:
        try:
            dbar = time_avg_deviation(rec.deviation, T_lambda)
            out["delta_rho_bar"] = dbar
            out["classification"] = classify(dbar)
        except ChemoaggError as e:
            out["delta_rho_bar"] = float("nan")
            out["classification"] = f"n/a ({e})"
    if "peak" in cfg.diagnostics:
        out["delta_rho"] = peak_density(final)
    if "plateau" in cfg.diagnostics:
        pl = detect_plateau(final)
        out["plateau"] = pl.has_plateau
        out["plateau_extent"] = pl.extent
    return out


def run_length_rows(cfg: ExperimentConfig, rec) -> tuple[list, dict]:
    """Rows of (r, xi+, xi-, y_p+, y_p-) and histogram tables keyed by r."""
    p = cfg.params
    S = ScalarField(rec.grid, rec.final_S)
    x0 = find_center(S)
    rows = [["r", "xi_plus", "xi_minus", "y_peak_plus", "y_peak_minus"]]
    hists = {}
    if cfg.engine == "mc":
        n_bar = rec.summary["n_particles"] / rec.grid.I
        G = max_log_gradient(S)
        edges = default_edges(p.tau, G if G > 0 else 1.0, cfg.hist_bins)
        for r in cfg.hist_r:
            h = internal_histogram(rec.final_ensemble, rec.grid, x0, r, edges, n_bar)
            xp, xm = mean_run_length(h, p)
            rows.append([fmt(r), fmt(xp), fmt(xm), fmt(peak_position(h, "+")), fmt(peak_position(h, "-"))])
            tab = [["y", "f_plus", "f_minus"]]
            tab += [[fmt(c), fmt(a), fmt(b)] for c, a, b in zip(h.centers, h.plus, h.minus)]
            hists[r] = tab
        return rows, hists
    # asymptotic: both directions share p(x, m); y = ln S - m per column
    ph = rec.final_phase
    m = ph.m_axis.centers
    M = np.log(S.values)
    for r in cfg.hist_r:
        cells = {int(rec.grid.cell_of(x0 - r)), int(rec.grid.cell_of(x0 + r))}
        num = den = 0.0
        for c in cells:
            w = ph.values[c]
            num += float(np.sum(w / (p.lambda0 * modulation(M[c] - m, p))))
            den += float(np.sum(w))
        xi = num / den
        rows.append([fmt(r), fmt(xi), fmt(xi), "nan", "nan"])
    return rows, hists


def run(cfg: ExperimentConfig, outdir) -> int:
    """Execute one experiment and write all its files; returns the exit status."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        rec = execute(cfg)
        rec.write_csv(outdir)
        diag = summarize(cfg, rec)
        _write_rows(outdir / "diagnostics.csv", [["key", "value"]] + [[k, fmt(v)] for k, v in sorted(diag.items())])
        if "run_length" in cfg.diagnostics:
            rows, hists = run_length_rows(cfg, rec)
            _write_rows(outdir / "run_length.csv", rows)
            for j, r in enumerate(sorted(hists)):
                _write_rows(outdir / f"histogram_{j:02d}.csv", hists[r])
    except ChemoaggError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    write_manifest(cfg, outdir)
    return EXIT_OK


def write_manifest(cfg: ExperimentConfig, outdir: Path, extra: dict | None = None):
    man = {
        "engine": cfg.engine,
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "version": __version__,
        "params": {k: v for k, v in cfg.params.as_dict().items()},
    }
    if extra:
        man.update(extra)
    (outdir / "manifest.json").write_bytes((json.dumps(man, sort_keys=True, indent=2) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# sweeps


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint32)[0])


def _run_point(args):
    cfg, index, point = args
    t0 = time.perf_counter()
    row = {"index": index, **point}
    try:
        params, problems = build_params(merge_point(cfg.model_keys, point))
        if problems:
            raise ValidationError(problems)
        sub = ExperimentConfig(
            engine=cfg.engine, params=params, numerics=cfg.numerics, snapshots=[],
            diagnostics=["deviation", "peak"], seed=point_seed(cfg.seed, index), text=cfg.text,
        )
        rec = execute(sub)
        d = summarize(sub, rec)
        row.update(delta_rho_bar=d["delta_rho_bar"], delta_rho=d["delta_rho"], classification=d["classification"], status="ok")
    except ChemoaggError as e:
        row.update(delta_rho_bar=float("nan"), delta_rho=float("nan"), classification="", status=f"{type(e).__name__}: {e}")
    return row, time.perf_counter() - t0


def sweep(cfg: ExperimentConfig, outdir, workers: int | None = None) -> list[dict]:
    """Run every grid point; rows come back in grid order whatever the pool does.

    Wall times go to ``timing.csv`` so ``sweep.csv`` stays byte-reproducible.
    """
    if cfg.sweep is None:
        raise ValidationError("config has no [sweep] section")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    points = cfg.sweep.points()
    jobs = [(cfg, i, pt) for i, pt in enumerate(points)]
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    rows = [r for r, _ in results]
    names = list(cfg.sweep.axes)
    head = ["index", *names, "delta_rho_bar", "delta_rho", "classification", "status"]
    table = [head] + [[fmt(r[k]) for k in head] for r in rows]
    _write_rows(outdir / "sweep.csv", table)
    _write_rows(outdir / "timing.csv", [["index", "wall_seconds"]] + [[str(r["index"]), f"{w:.3f}"] for r, w in results])
    write_manifest(cfg, outdir, {"points": len(rows)})
    return rows


# ---------------------------------------------------------------------------
# stability tables


def stability_table(spec: dict, chi: float = 0.5) -> tuple[list, list]:
    D_S = spec.get("D_S", 1.0)
    L = spec.get("L", 10.0)
    n_max = spec.get("n_max", 50)
    k1 = 2.0 * np.pi / L
    rows = [["alpha", "chi_over_delta", "n", "k", "mu", "status"]]
    from .model import ModelParams

    for a in spec["alpha"]:
        for cod in spec["chi_over_delta"]:
            p = ModelParams(lambda0=1.0, tau=a, delta=chi / cod, chi=chi, D_S=D_S, L=L)
            scan = most_unstable_mode(p, n_max=n_max)
            rows.append([fmt(a), fmt(cod), str(scan.n), fmt(scan.k), fmt(scan.mu), "stable" if scan.all_stable else "unstable"])
    line = [["alpha", "critical_chi_over_delta"]]
    line += [[fmt(a), fmt(critical_stiffness(k1, a, D_S))] for a in spec["alpha"]]
    return rows, line


def stability(cfg: ExperimentConfig, outdir) -> int:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows, line = stability_table(cfg.stability)
    _write_rows(outdir / "stability.csv", rows)
    _write_rows(outdir / "critical_line.csv", line)
    write_manifest(cfg, outdir)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemoagg", description="Chemotactic aggregation simulations.")
    ap.add_argument("command", choices=["mc", "ks", "asymptotic", "stability", "sweep"])
    ap.add_argument("--config", required=True, help="experiment file (INI)")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override a config-file key; repeatable")
    ap.add_argument("--out", required=True, help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        overrides = list(args.set)
        if args.command in ("mc", "ks", "asymptotic"):
            overrides.append(f"run.engine={args.command}")
        cfg = parse_config(text, overrides)
        if args.command == "stability":
            if cfg.stability is None:
                raise ValidationError("stability needs a [stability] section")
            return stability(cfg, args.out)
        if args.command == "sweep":
            sweep(cfg, args.out)
            return EXIT_OK
        return run(cfg, args.out)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ChemoaggError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
