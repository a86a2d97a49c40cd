"""Run configuration files.

A configuration is an INI file with the sections below; every key is
optional and unknown keys are rejected.

    [run]
    model = mono            ; mono | bi
    scenario = manufactured ; manufactured | stimulus | custom
    p = 1                   ; polynomial degree
    sigma = 3               ; refinement level, h = 2^-sigma
    dt = 1e-4
    T = 3e-3
    stride = 10             ; snapshot every N steps (default: final step only)
    snapshot_times = 0.04, 0.10
    out = results

    [params]
    chi_m, C_m, kappa, a, eps, gamma, theta, alpha
    conductivity, conductivity_i, conductivity_e   ; "s" or "sxx, sxy, syy"

    [solver]
    rel_tol, max_iter, restart, preconditioner (block | diagonal | none)

    [stimulus]
    amplitude, x0, x1, y0, y1, t0, t1

    [convergence]
    kind = h                ; h | p
    levels = 3, 4, 5        ; refinement levels for kind = h
    degrees = 1, 2, 3       ; degrees for kind = p (at refinement level sigma)
    field = V               ; V | phi_i | phi_e

Defaults are the manufactured-solution verification values. With
``scenario = stimulus`` the defaults switch to the propagation run:
C_m = 1e-2, eps = 40, p = 2, sigma = 6, dt = 1e-3, T = 0.4, a 2e6 current
on [0.4, 0.6]^2 during [0, 1e-3] and snapshots at t = 0.04, 0.10, ..., 0.34.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import ModelParams, SolverOptions
from ..mesh import MAX_LEVEL

MODELS = ("mono", "bi")
SCENARIOS = ("manufactured", "stimulus", "custom")
STIMULUS_SNAPSHOTS = (0.04, 0.10, 0.16, 0.22, 0.28, 0.34)

_KEYS = {
    "run": ("model", "scenario", "p", "sigma", "dt", "T", "stride", "snapshot_times", "out"),
    "params": (
        "chi_m", "C_m", "kappa", "a", "eps", "gamma", "theta", "alpha",
        "conductivity", "conductivity_i", "conductivity_e",
    ),
    "solver": ("rel_tol", "max_iter", "restart", "preconditioner"),
    "stimulus": ("amplitude", "x0", "x1", "y0", "y1", "t0", "t1"),
    "convergence": ("kind", "levels", "degrees", "field"),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, field and line when known."""


@dataclass(frozen=True)
class StimulusSpec:
    """Constant current ``amplitude`` on a box during a time window."""

    amplitude: float = 2e6
    box: tuple = (0.4, 0.6, 0.4, 0.6)  # x0, x1, y0, y1
    window: tuple = (0.0, 1e-3)  # t0, t1

    def __post_init__(self):
        x0, x1, y0, y1 = self.box
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValueError(f"stimulus box {self.box} must be a nonempty box inside the unit square")
        t0, t1 = self.window
        if not 0.0 <= t0 < t1:
            raise ValueError(f"stimulus window {self.window} needs 0 <= t0 < t1")

    def __call__(self, x, y, t):
        """Pointwise indicator times amplitude (closed box and window)."""
        x0, x1, y0, y1 = self.box
        t0, t1 = self.window
        inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        if not t0 <= t <= t1:
            return np.zeros(np.shape(x))
        return self.amplitude * inside.astype(float)


@dataclass(frozen=True)
class RunConfig:
    model: str = "mono"
    scenario: str = "manufactured"
    p: int = 1
    sigma: int = 3
    params: ModelParams = field(default_factory=ModelParams)
    solver: SolverOptions = field(default_factory=SolverOptions)
    stimulus: StimulusSpec | None = None
    stride: int | None = None
    snapshot_times: tuple = ()
    out_dir: Path = Path("results")
    convergence_kind: str = "h"
    levels: tuple = (3, 4, 5)
    degrees: tuple = (1, 2, 3, 4, 5)
    field_name: str = "V"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if not 0 <= self.sigma <= MAX_LEVEL:
            raise ConfigError(f"sigma must lie in [0, {MAX_LEVEL}], got {self.sigma}")
        if self.stride is not None and self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        for t in self.snapshot_times:
            if not 0.0 < t <= self.params.T + 1e-12:
                raise ConfigError(f"snapshot_times entry {t} outside (0, T]")
        if self.convergence_kind not in ("h", "p"):
            raise ConfigError(f"convergence kind must be 'h' or 'p', got {self.convergence_kind!r}")
        if any(not 0 <= s <= MAX_LEVEL for s in self.levels) or not self.levels:
            raise ConfigError(f"levels must be nonempty within [0, {MAX_LEVEL}], got {self.levels}")
        if any(d < 1 for d in self.degrees) or not self.degrees:
            raise ConfigError(f"degrees must be nonempty and >= 1, got {self.degrees}")
        if self.field_name not in ("V", "phi_i", "phi_e"):
            raise ConfigError(f"field must be V, phi_i or phi_e, got {self.field_name!r}")
        if self.field_name != "V" and self.model != "bi":
            raise ConfigError(f"field {self.field_name} only exists for model = bi")

    @property
    def n_steps(self) -> int:
        return self.params.n_steps

    def snapshot_steps(self) -> list[int]:
        """Sorted step indices at which snapshots are written."""
        n = self.n_steps
        stride = self.stride if self.stride is not None else (n if not self.snapshot_times else None)
        steps = set()
        if stride is not None:
            steps.update(range(stride, n + 1, stride))
        for t in self.snapshot_times:
            steps.add(int(round(t / self.params.dt)))
        return sorted(s for s in steps if 1 <= s <= n)


def _scenario_defaults(scenario: str):
    if scenario == "stimulus":
        return (
            {"p": 2, "sigma": 6, "dt": 1e-3, "T": 0.4, "snapshot_times": STIMULUS_SNAPSHOTS},
            {"C_m": 1e-2, "eps": 40.0},
        )
    return {}, {}


def _line_numbers(text: str) -> dict:
    """(section, key) -> 1-based line number of its assignment."""
    out = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip())] = lineno
    return out


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _tensor(text: str) -> np.ndarray:
    v = _floats(text)
    if len(v) == 1:
        return v[0] * np.eye(2)
    if len(v) == 3:
        return np.array([[v[0], v[1]], [v[1], v[2]]])
    if len(v) == 4:
        return np.array(v).reshape(2, 2)
    raise ValueError("expected 1, 3 (xx, xy, yy) or 4 values")


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


_CONVERTERS = {
    "p": int, "sigma": int, "stride": int, "max_iter": int, "restart": int, "theta": int,
    "snapshot_times": lambda s: tuple(_floats(s)),
    "levels": _ints, "degrees": _ints,
    "conductivity": _tensor, "conductivity_i": _tensor, "conductivity_e": _tensor,
    "model": str.strip, "scenario": str.strip, "out": str.strip, "kind": str.strip,
    "field": str.strip, "preconditioner": str.strip,
}


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keys are case sensitive (C_m, T)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: key outside of any [section]") from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{source}:{lineno}: cannot parse line {exc.errors[0][1] if exc.errors else ''}") from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate section [{exc.section}]") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    lines = _line_numbers(text)
    values: dict[str, dict] = {s: {} for s in _KEYS}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{source}:{lines.get((section, key), '?')}"
            if key not in _KEYS[section]:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = _CONVERTERS.get(key, float)(raw)
            except ValueError as exc:
                raise ConfigError(f"{where}: invalid value for {section}.{key}: {raw!r} ({exc})") from exc

    run = values["run"]
    scenario = run.get("scenario", "manufactured")
    run_defaults, param_defaults = _scenario_defaults(scenario)
    run = {**run_defaults, **run}

    def fail(section, key, exc):
        line = lines.get((section, key), "?")
        return ConfigError(f"{source}:{line}: {section}.{key}: {exc}")

    pkw = dict(param_defaults)
    for key, val in values["params"].items():
        pkw[{"conductivity": "sigma", "conductivity_i": "sigma_i", "conductivity_e": "sigma_e"}.get(key, key)] = val
    for key in ("dt", "T"):
        if key in run:
            pkw[key] = run[key]
    # validate each field alone first so the error names it
    for key, val in pkw.items():
        probe = {"dt": val, "T": val} if key in ("dt", "T") else {key: val}
        try:
            ModelParams(**probe)
        except (ValueError, TypeError) as exc:
            name = {"sigma": "conductivity", "sigma_i": "conductivity_i", "sigma_e": "conductivity_e"}.get(key, key)
            section = "run" if key in ("dt", "T") else "params"
            raise fail(section, name, exc) from exc
    try:
        params = ModelParams(**pkw)
    except ValueError as exc:
        raise fail("run", "T", exc) from exc

    try:
        solver = SolverOptions(**values["solver"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: [solver]: {exc}") from exc
    for key in ("rel_tol", "max_iter", "restart"):
        v = getattr(solver, key)
        if not v > 0:
            raise fail("solver", key, f"must be positive, got {v}")

    stim = None
    if values["stimulus"] or scenario == "stimulus":
        s = values["stimulus"]
        base = StimulusSpec()
        try:
            stim = StimulusSpec(
                s.get("amplitude", base.amplitude),
                (s.get("x0", base.box[0]), s.get("x1", base.box[1]), s.get("y0", base.box[2]), s.get("y1", base.box[3])),
                (s.get("t0", base.window[0]), s.get("t1", base.window[1])),
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: [stimulus]: {exc}") from exc
    if stim is not None and scenario == "manufactured":
        raise ConfigError(f"{source}: [stimulus] is not used by scenario = manufactured")

    conv = values["convergence"]
    kw = dict(
        model=run.get("model", "mono"),
        scenario=scenario,
        p=run.get("p", 1),
        sigma=run.get("sigma", 3),
        params=params,
        solver=solver,
        stimulus=stim,
        stride=run.get("stride"),
        snapshot_times=tuple(run.get("snapshot_times", ())),
        out_dir=Path(run.get("out", "results")),
        convergence_kind=conv.get("kind", "h"),
        levels=conv.get("levels", (3, 4, 5)),
        degrees=conv.get("degrees", (1, 2, 3, 4, 5)),
        field_name=conv.get("field", "V"),
    )
    try:
        return RunConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"configuration file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))
