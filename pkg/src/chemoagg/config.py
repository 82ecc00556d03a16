"""Experiment configuration files (INI) and their validation.

A file has a ``[run]`` section naming the engine and seed, a ``[model]``
section with the nondimensional parameters (or a ``[dimensional]``
section that is scaled automatically), ``[numerics]``, ``[output]`` and
optionally ``[sweep]`` or ``[stability]``. Times in ``[numerics]`` and
``[output]`` are scaled times t_lambda.

Example::

    [run]
    engine = mc
    seed = 7

    [model]
    lambda0 = 10
    alpha = 1
    delta = 0.1

    [numerics]
    N_bar = 2000
    dt = 0.005
    T_lambda = 2

    [output]
    snapshots = 0, 1, 2
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .model import DimensionalParams, ModelParams, nondimensionalize, validate

ENGINES = ("mc", "ks", "asymptotic")
DIAGNOSTICS = ("deviation", "peak", "plateau", "run_length")
MAX_SWEEP_POINTS = 10_000

_MODEL_KEYS = {"lambda0", "tau", "alpha", "tau_tilde", "delta", "chi", "chi_over_delta", "D_S", "L", "sigma", "sigma_S"}
_DIM_KEYS = {"V0", "lambda0_dim", "tau_dim", "D_S_dim", "a", "b", "rho0", "L_dim", "t0"}
_NUMERIC_KEYS = {
    "I": int, "N_bar": int, "dt": float, "T_lambda": float, "avg_window": float, "parallel": bool,
    "K": int, "Y": float, "regime": str, "amplitude": float, "mode": int, "noise_seed": int,
    "sample_interval": float, "stop_when_stationary": bool,
}
_OUTPUT_KEYS = {"snapshots": "floats", "diagnostics": "words", "hist_r": "floats", "hist_bins": int, "phase": bool}
_SECTIONS = {"run", "model", "dimensional", "numerics", "output", "sweep", "stability"}


@dataclass
class SweepSpec:
    """Named axes (model keys) whose Cartesian product is run in row-major order."""

    axes: dict  # name -> list of floats, in file order
    max_points: int = MAX_SWEEP_POINTS

    def points(self) -> list[dict]:
        names = list(self.axes)
        out = [{}]
        for name in names:
            out = [dict(p, **{name: v}) for p in out for v in self.axes[name]]
        return out

    def __len__(self):
        return math.prod(len(v) for v in self.axes.values())


@dataclass
class ExperimentConfig:
    engine: str
    params: ModelParams
    numerics: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)  # t_lambda
    diagnostics: list = field(default_factory=lambda: ["deviation", "peak"])
    hist_r: list = field(default_factory=list)
    hist_bins: int = 101
    phase: bool = False
    seed: int = 0
    model_keys: dict = field(default_factory=dict)  # model section as written, for sweeps
    sweep: SweepSpec | None = None
    stability: dict | None = None
    text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, matching configparser's lowercase keys."""
    where = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = n
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = n
    return where


def _floats(s: str) -> list[float]:
    return [float(x) for x in re.split(r"[,\s]+", s.strip()) if x]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _canon(keys, name):
    """configparser lowercases keys; map back to the documented spelling."""
    for k in keys:
        if k.lower() == name:
            return k
    return None


def _apply_overrides(cp, overrides, where):
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ParseError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = (x.strip() for x in lhs.split(".", 1))
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.lower(), value.strip())
        where[(section, key.lower())] = f"--set {item}"


def _reader():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    return cp


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse and fully validate an experiment file.

    ``overrides`` are ``section.key=value`` strings applied on top of the
    file. Raises ParseError for malformed files and ValidationError listing
    every problem (prefixed by its line, or by the override) otherwise.
    """
    cp = _reader()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ParseError(str(e).splitlines()[0], getattr(e, "lineno", None)) from None
    where = _line_index(text)
    overrides = list(overrides)
    _apply_overrides(cp, overrides, where)
    errors = []

    def err(section, key, msg):
        n = where.get((section, key)) or where.get((section, None))
        if isinstance(n, str):
            errors.append(f"{n}: {msg}")
        else:
            errors.append(f"line {n}: {msg}" if n else msg)

    for s in cp.sections():
        if s not in _SECTIONS:
            err(s, None, f"unknown section [{s}]")

    run = cp["run"] if cp.has_section("run") else {}
    engine = run.get("engine", "").strip() if run else ""
    if engine not in ENGINES and not cp.has_section("stability"):
        err("run", "engine", f"engine must be one of {ENGINES}, got {engine!r}")
    seed = 0
    if run and "seed" in run:
        try:
            seed = int(run["seed"])
            if seed < 0:
                raise ValueError
        except ValueError:
            err("run", "seed", f"seed must be a non-negative integer, got {run['seed']!r}")
    for k in run or {}:
        if k not in ("engine", "seed"):
            err("run", k, f"unknown key {k!r} in [run]")

    model_keys = {}
    if cp.has_section("model"):
        for k, v in cp.items("model"):
            name = _canon(_MODEL_KEYS, k)
            if name is None:
                err("model", k, f"unknown key {k!r} in [model]")
                continue
            try:
                model_keys[name] = float(v)
            except ValueError:
                err("model", k, f"{name} must be a number, got {v!r}")

    dim = None
    if cp.has_section("dimensional"):
        vals = {}
        for k, v in cp.items("dimensional"):
            name = _canon(_DIM_KEYS, k)
            if name is None:
                err("dimensional", k, f"unknown key {k!r} in [dimensional]")
                continue
            try:
                vals[name] = float(v)
            except ValueError:
                err("dimensional", k, f"{name} must be a number, got {v!r}")
        missing = _DIM_KEYS - set(vals)
        if missing:
            err("dimensional", None, f"missing keys {sorted(missing)} in [dimensional]")
        else:
            dim = DimensionalParams(**vals)

    numerics = {}
    if cp.has_section("numerics"):
        for k, v in cp.items("numerics"):
            name = _canon(_NUMERIC_KEYS, k)
            if name is None:
                err("numerics", k, f"unknown key {k!r} in [numerics]")
                continue
            kind = _NUMERIC_KEYS[name]
            try:
                numerics[name] = _bool(v) if kind is bool else kind(v)
            except ValueError:
                err("numerics", k, f"{name} has invalid value {v!r}")

    outputs = {}
    if cp.has_section("output"):
        for k, v in cp.items("output"):
            name = _canon(_OUTPUT_KEYS, k)
            if name is None:
                err("output", k, f"unknown key {k!r} in [output]")
                continue
            kind = _OUTPUT_KEYS[name]
            try:
                if kind == "floats":
                    outputs[name] = _floats(v)
                elif kind == "words":
                    outputs[name] = [w for w in re.split(r"[,\s]+", v.strip()) if w]
                elif kind is bool:
                    outputs[name] = _bool(v)
                else:
                    outputs[name] = kind(v)
            except ValueError:
                err("output", k, f"{name} has invalid value {v!r}")

    sweep = None
    if cp.has_section("sweep"):
        axes = {}
        cap = MAX_SWEEP_POINTS
        for k, v in cp.items("sweep"):
            if k == "max_points":
                try:
                    cap = int(v)
                except ValueError:
                    err("sweep", k, f"max_points must be an integer, got {v!r}")
                continue
            name = _canon(_MODEL_KEYS, k)
            if name is None:
                err("sweep", k, f"sweep axis {k!r} is not a model parameter")
                continue
            try:
                vals = _floats(v)
            except ValueError:
                err("sweep", k, f"axis {name} has a non-numeric value")
                continue
            if not vals or not all(math.isfinite(x) for x in vals):
                err("sweep", k, f"axis {name} must list finite values")
            axes[name] = vals
        if not axes:
            err("sweep", None, "[sweep] needs at least one axis")
        sweep = SweepSpec(axes, cap)
        if axes and len(sweep) > cap:
            err("sweep", None, f"sweep has {len(sweep)} points, above the cap of {cap}")

    stability = None
    if cp.has_section("stability"):
        stability = {}
        for k, v in cp.items("stability"):
            try:
                if k in ("alpha", "chi_over_delta"):
                    stability[k] = _floats(v)
                elif k in ("d_s", "l"):
                    stability["D_S" if k == "d_s" else "L"] = float(v)
                elif k == "n_max":
                    stability[k] = int(v)
                else:
                    err("stability", k, f"unknown key {k!r} in [stability]")
            except ValueError:
                err("stability", k, f"{k} has invalid value {v!r}")
        for req in ("alpha", "chi_over_delta"):
            if req not in stability:
                err("stability", None, f"[stability] needs {req}")

    params = None
    if not errors and engine in ENGINES:
        params, perr = build_params(model_keys, dim)
        for msg in perr:
            key = msg.split()[0].lower() if msg else None
            err("model" if cp.has_section("model") else "dimensional", key, msg)
        if params is not None and sweep is not None:
            for point in sweep.points():
                _, perr = build_params(merge_point(model_keys, point), dim)
                for msg in perr:
                    err("sweep", None, f"sweep point {point}: {msg}")
                if perr:
                    break

    diags = outputs.get("diagnostics", ["deviation", "peak"])
    for d in diags:
        if d not in DIAGNOSTICS:
            err("output", "diagnostics", f"unknown diagnostic {d!r}; choose from {DIAGNOSTICS}")
    if "run_length" in diags and engine == "ks":
        err("output", "diagnostics", "run_length needs the mc or asymptotic engine")
    if "run_length" in diags and not outputs.get("hist_r"):
        err("output", "diagnostics", "run_length needs hist_r distances")
    if engine and engine != "ks" and numerics.get("regime") is not None:
        err("numerics", "regime", "regime only applies to the ks engine")

    if errors:
        raise ValidationError(errors)
    if params is None:  # stability-only file
        params = ModelParams(lambda0=1.0, tau=1.0, delta=1.0)
    return ExperimentConfig(
        engine=engine or "stability",
        params=params,
        numerics=numerics,
        snapshots=outputs.get("snapshots", []),
        diagnostics=diags,
        hist_r=outputs.get("hist_r", []),
        hist_bins=outputs.get("hist_bins", 101),
        phase=outputs.get("phase", False),
        seed=seed,
        model_keys=model_keys,
        sweep=sweep,
        stability=stability,
        text="\n".join([text, *overrides]),
    )


_ALTERNATIVES = (("tau", "alpha", "tau_tilde"), ("delta", "chi_over_delta"))


def merge_point(model_keys: dict, point: dict) -> dict:
    """Model keys with a sweep point applied; an axis replaces its alternative spellings."""
    keys = dict(model_keys)
    for group in _ALTERNATIVES:
        if any(k in point for k in group):
            for k in group:
                keys.pop(k, None)
    keys.update(point)
    return keys


def build_params(keys: dict, dim: DimensionalParams | None = None) -> tuple[ModelParams | None, list[str]]:
    """Model parameters from the keys of a [model] section.

    Exactly one of ``tau``, ``alpha`` (= lambda0*tau) or ``tau_tilde``
    (= tau/lambda0) sets the adaptation time; ``chi_over_delta`` may replace
    ``delta`` (delta = chi / value).
    """
    keys = dict(keys)
    problems = []
    chi = keys.pop("chi", 0.5)
    if "chi_over_delta" in keys:
        if "delta" in keys:
            problems.append("give delta or chi_over_delta, not both")
        cod = keys.pop("chi_over_delta")
        if not cod > 0:
            problems.append(f"chi_over_delta must be positive, got {cod!r}")
            return None, problems
        keys["delta"] = chi / cod
    if dim is not None:
        try:
            base = nondimensionalize(dim, delta=keys.get("delta", 0.1), chi=chi)
        except ValidationError as e:
            return None, e.violations
        return base, validate(base)
    given = [k for k in ("tau", "alpha", "tau_tilde") if k in keys]
    if len(given) != 1:
        problems.append("set exactly one of tau, alpha, tau_tilde")
    for req in ("lambda0", "delta"):
        if req not in keys:
            problems.append(f"{req} is required")
    if problems:
        return None, problems
    lam = keys.pop("lambda0")
    if "alpha" in keys:
        tau = keys.pop("alpha") / lam
    elif "tau_tilde" in keys:
        tau = keys.pop("tau_tilde") * lam
    else:
        tau = keys.pop("tau")
    try:
        p = ModelParams(lambda0=lam, tau=tau, chi=chi, **keys)
    except TypeError as e:
        return None, [str(e)]
    return p, validate(p)
