"""Run configuration: flat ``section.key = value`` text files.

Lines starting with ``#`` are comments. Unknown keys are rejected so typos do
not pass silently. Example::

    scenario = desk
    model.alpha = 1.5
    model.beta = 0.4
    drift.name = desk
    drift.eps = 0.5
    grid.points = 128
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .catalogue import cos_mode, desk_drift, desk_level2_drift, smooth_bump, torus_frequency
from .errors import AssumptionError, ConfigError
from .flow import DriftSpec
from .ou import ChainMatrix
from .solver import ProblemData, check_standing_assumptions
from .spacegrid import SpaceGrid
from .stable import LevyModel, SphericalMeasure

DRIFTS = ("zero", "desk", "level2", "constant")
SOURCES = ("none", "desk")
TERMINALS = ("gauss", "cos", "bump")


@dataclass
class RunConfig:
    scenario: str = "desk"
    n: int = 2
    d: int = 1
    alpha: float = 1.5
    beta: float = 0.4
    T: float = 1.0
    coupling: float = 1.0
    measure: str = "canonical"
    measure_atoms: int = 16
    drift: str = "desk"
    drift_eps: float = 0.5
    source: str = "desk"
    terminal: str = "gauss"
    terminal_modes: tuple = (3, 1)
    half_width: float = 16.0
    points: int = 128
    n_time: int = 32
    seed: int = 0
    picard_tol: float = 1e-10
    picard_max_iters: int = 25
    mc_paths: int = 100_000
    mc_steps: int = 200
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be positive")
        check_standing_assumptions(self.alpha, self.beta, self.n)
        for name in ("T", "picard_tol", "half_width", "coupling"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("points", "n_time", "picard_max_iters", "mc_paths", "mc_steps", "measure_atoms"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.drift not in DRIFTS:
            raise ConfigError(f"unknown drift {self.drift!r}; choose from {', '.join(DRIFTS)}")
        if self.source not in SOURCES:
            raise ConfigError(f"unknown source {self.source!r}; choose from {', '.join(SOURCES)}")
        if self.terminal not in TERMINALS:
            raise ConfigError(f"unknown terminal {self.terminal!r}; choose from {', '.join(TERMINALS)}")
        if self.measure not in ("canonical", "uniform"):
            raise ConfigError("measure must be 'canonical' or 'uniform'")
        if self.drift in ("desk", "level2") and (self.n, self.d) != (2, 1):
            raise ConfigError(f"drift {self.drift!r} lives on the n = 2, d = 1 chain")

    # -- construction ---------------------------------------------------------

    @property
    def A(self) -> ChainMatrix:
        return ChainMatrix.scalar_chain(self.n, self.coupling) if self.d == 1 else ChainMatrix(
            self.n, self.d, tuple(self.coupling * np.eye(self.d) for _ in range(self.n - 1)))

    @property
    def model(self) -> LevyModel:
        if self.measure == "canonical":
            mu = SphericalMeasure.canonical(self.d)
        else:
            mu = SphericalMeasure.uniform(self.d, 1.0, self.measure_atoms)
        return LevyModel(self.alpha, mu)

    def grid(self) -> SpaceGrid:
        return SpaceGrid.box([self.half_width] * (self.n * self.d), self.points)

    def drift_spec(self) -> DriftSpec:
        if self.drift == "zero" or self.drift_eps == 0:
            return DriftSpec.zero(self.n, self.d)
        if self.drift == "desk":
            return desk_drift(self.drift_eps, self.alpha, self.beta)
        if self.drift == "level2":
            return desk_level2_drift(self.drift_eps, self.alpha, self.beta)
        return DriftSpec.constant_chain(self.n, self.d, np.full(self.n * self.d, self.drift_eps))

    def problem(self) -> ProblemData:
        nd = self.n * self.d
        if self.terminal == "gauss":
            g = lambda x: np.exp(-np.sum(np.asarray(x, dtype=float) ** 2, axis=-1) / 4.0)  # noqa: E731
        elif self.terminal == "cos":
            modes = np.resize(np.asarray(self.terminal_modes, dtype=float), nd)
            g = cos_mode(torus_frequency(self.grid(), modes))
        else:
            g = smooth_bump(np.zeros(nd), 2.0)
        f = None
        if self.source == "desk":
            def f(t, x):
                x = np.asarray(x, dtype=float)
                return 0.5 * np.cos(x[..., 0]) * np.exp(-np.sum(x * x, axis=-1) / 8.0)
        return ProblemData(self.A, self.model, self.beta, self.T, self.drift_spec(), g, f, self.scenario)

    # -- text form ------------------------------------------------------------

    def to_text(self, include_out: bool = True) -> str:
        lines = []
        for k, v in sorted(asdict(self).items()):
            if k == "out" and not include_out:
                continue
            key = _KEYS_INV[k]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """Short hash of the run-relevant settings (the output directory is excluded)."""
        return hashlib.sha256(self.to_text(include_out=False).encode()).hexdigest()[:16]


# flat key -> field name
_KEYS = {
    "scenario": "scenario",
    "model.n": "n", "model.d": "d", "model.alpha": "alpha", "model.beta": "beta", "model.T": "T",
    "model.coupling": "coupling", "model.measure": "measure", "model.measure_atoms": "measure_atoms",
    "drift.name": "drift", "drift.eps": "drift_eps",
    "source.name": "source",
    "terminal.name": "terminal", "terminal.modes": "terminal_modes",
    "grid.half_width": "half_width", "grid.points": "points", "grid.n_time": "n_time",
    "run.seed": "seed", "run.out": "out",
    "picard.tol": "picard_tol", "picard.max_iters": "picard_max_iters",
    "mc.paths": "mc_paths", "mc.steps": "mc_steps",
}
_KEYS_INV = {v: k for k, v in _KEYS.items()}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name, raw: str):
    kind = _TYPES[name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(int(x) for x in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad value for {_KEYS_INV[name]}: {raw!r}") from exc
    return raw


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse config text; ``overrides`` maps flat keys to raw strings.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys or invalid values.
    AssumptionError
        When ``(alpha, beta, n)`` violates the standing parameter constraints.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[_KEYS[key]] = _convert(_KEYS[key], raw)
    for key, raw in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        values[_KEYS[key]] = _convert(_KEYS[key], str(raw))
    try:
        return RunConfig(**values)
    except AssumptionError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=None) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)
