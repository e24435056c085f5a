"""Strict flat key-value run configuration.

Config files are plain text, one `key = value` per line, `#` comments and
blank lines allowed.  Keys are dotted section paths (domain.a, solver.tol).
Parsing is strict: unknown keys, missing required keys, type errors, and
preset parameters that do not belong to the chosen preset are all errors,
so misconfiguration never passes silently.

Obstacle presets (evaluated at the interior nodes):
    bump      psi(x) = c - d (x - m)^2          keys: obstacle.c, .d, .m
    plateau   psi(x) = c on [l, r], else -c     keys: obstacle.c, .l, .r
    negative  psi(x) = -c                       keys: obstacle.c
    custom    explicit values                   keys: obstacle.values (n floats)

Forcing presets:
    zero      f = 0
    constant  f(x) = c                          keys: forcing.c
    sine      f(x) = amplitude * sin(pi * frequency * (x - a)/(b - a))
                                                keys: forcing.amplitude, .frequency
    custom    explicit values                   keys: forcing.values (n floats)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operator import Grid, assemble_operator
from .solvers import PenaltyParams, ProblemSpec, SolverParams

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text"]


class ConfigError(Exception):
    """Malformed, incomplete, or contradictory run configuration."""


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}") from None


def _parse_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}") from None


def _parse_float_list(raw: str) -> tuple:
    items = [p.strip() for p in raw.split(",") if p.strip()]
    if not items:
        raise ConfigError("expected a comma-separated list of numbers")
    return tuple(_parse_float(p) for p in items)


def _parse_str(raw: str) -> str:
    return raw


# key -> (parser, default); _REQUIRED means the key must be present
# (possibly only when its preset or solver selects it).
_REQUIRED = object()

_BASE_SCHEMA = {
    "domain.a": (_parse_float, 0.0),
    "domain.b": (_parse_float, 1.0),
    "grid.n": (_parse_int, _REQUIRED),
    "operator.s": (_parse_float, _REQUIRED),
    "obstacle.preset": (_parse_str, _REQUIRED),
    "forcing.preset": (_parse_str, "zero"),
    "solver.method": (_parse_str, "psor"),
    "solver.tol": (_parse_float, 1e-10),
    "solver.max_iter": (_parse_int, 200_000),
    "solver.relaxation": (_parse_float, 1.5),
    "solver.active_tol": (_parse_float, 1e-8),
    "sweep.axis": (_parse_str, None),
    "sweep.values": (_parse_float_list, None),
    "verify.samples": (_parse_int, 200),
    "verify.tol": (_parse_float, 1e-8),
    "output.json": (_parse_str, None),
    "output.csv": (_parse_str, None),
    "seed": (_parse_int, 0),
}

_OBSTACLE_KEYS = {
    "bump": {"obstacle.c": _REQUIRED, "obstacle.d": _REQUIRED, "obstacle.m": _REQUIRED},
    "plateau": {"obstacle.c": _REQUIRED, "obstacle.l": _REQUIRED, "obstacle.r": _REQUIRED},
    "negative": {"obstacle.c": _REQUIRED},
    "custom": {"obstacle.values": _REQUIRED},
}

_FORCING_KEYS = {
    "zero": {},
    "constant": {"forcing.c": _REQUIRED},
    "sine": {"forcing.amplitude": _REQUIRED, "forcing.frequency": _REQUIRED},
    "custom": {"forcing.values": _REQUIRED},
}

_PENALTY_SCHEMA = {
    "penalty.epsilon": (_parse_float, 1e-2),
    "penalty.damping": (_parse_float, 1.0),
    "penalty.max_outer": (_parse_int, 500_000),
}

_SOLVER_METHODS = ("psor", "pg", "activeset", "penalty")
_SWEEP_AXES = ("s", "n", "epsilon")


@dataclass
class RunConfig:
    """Typed view of a parsed configuration plus the raw echo."""

    a: float
    b: float
    n: int
    s: float
    obstacle_preset: str
    obstacle_params: dict
    forcing_preset: str
    forcing_params: dict
    solver_method: str
    solver_params: SolverParams
    penalty_params: PenaltyParams | None
    sweep_axis: str | None
    sweep_values: tuple | None
    verify_samples: int
    verify_tol: float
    output_json: str | None
    output_csv: str | None
    seed: int
    echo: dict = field(repr=False)

    def grid(self) -> Grid:
        return Grid(a=self.a, b=self.b, n=self.n)

    def obstacle_vector(self, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.grid()
        x = grid.nodes()
        p = self.obstacle_params
        if self.obstacle_preset == "bump":
            return p["c"] - p["d"] * (x - p["m"]) ** 2
        if self.obstacle_preset == "plateau":
            return np.where((x >= p["l"]) & (x <= p["r"]), p["c"], -p["c"])
        if self.obstacle_preset == "negative":
            return np.full(grid.n, -p["c"])
        values = np.asarray(p["values"], dtype=float)
        if values.shape != (grid.n,):
            raise ConfigError(
                f"obstacle.values has {values.size} entries, grid has {grid.n} nodes")
        return values

    def forcing_vector(self, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.grid()
        x = grid.nodes()
        p = self.forcing_params
        if self.forcing_preset == "zero":
            return np.zeros(grid.n)
        if self.forcing_preset == "constant":
            return np.full(grid.n, p["c"])
        if self.forcing_preset == "sine":
            return p["amplitude"] * np.sin(
                np.pi * p["frequency"] * (x - grid.a) / (grid.b - grid.a))
        values = np.asarray(p["values"], dtype=float)
        if values.shape != (grid.n,):
            raise ConfigError(
                f"forcing.values has {values.size} entries, grid has {grid.n} nodes")
        return values

    def build_problem(self, n: int | None = None, s: float | None = None) -> ProblemSpec:
        """Assemble the ProblemSpec, optionally overriding n or s (sweeps)."""
        grid = Grid(a=self.a, b=self.b, n=self.n if n is None else n)
        op = assemble_operator(grid, self.s if s is None else s)
        return ProblemSpec(op=op, psi=self.obstacle_vector(grid),
                           f=self.forcing_vector(grid))


def _read_pairs(text: str) -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not key or not raw:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = raw
    return pairs


def parse_config_text(text: str) -> RunConfig:
    pairs = _read_pairs(text)

    # The schema is assembled in two passes: preset and solver choices
    # determine which conditional keys are legal.
    obstacle_preset = pairs.get("obstacle.preset")
    if obstacle_preset is None:
        raise ConfigError("missing required key 'obstacle.preset'")
    if obstacle_preset not in _OBSTACLE_KEYS:
        raise ConfigError(
            f"obstacle.preset must be one of {sorted(_OBSTACLE_KEYS)}, got {obstacle_preset!r}")
    forcing_preset = pairs.get("forcing.preset", "zero")
    if forcing_preset not in _FORCING_KEYS:
        raise ConfigError(
            f"forcing.preset must be one of {sorted(_FORCING_KEYS)}, got {forcing_preset!r}")
    solver_method = pairs.get("solver.method", "psor")
    if solver_method not in _SOLVER_METHODS:
        raise ConfigError(
            f"solver.method must be one of {list(_SOLVER_METHODS)}, got {solver_method!r}")
    sweep_axis = pairs.get("sweep.axis")
    if sweep_axis is not None and sweep_axis not in _SWEEP_AXES:
        raise ConfigError(f"sweep.axis must be one of {list(_SWEEP_AXES)}, got {sweep_axis!r}")

    schema = dict(_BASE_SCHEMA)
    for key in _OBSTACLE_KEYS[obstacle_preset]:
        parser = _parse_float_list if key.endswith(".values") else _parse_float
        schema[key] = (parser, _REQUIRED)
    for key in _FORCING_KEYS[forcing_preset]:
        parser = _parse_float_list if key.endswith(".values") else _parse_float
        schema[key] = (parser, _REQUIRED)
    penalty_enabled = solver_method == "penalty" or sweep_axis == "epsilon"
    if penalty_enabled:
        schema.update(_PENALTY_SCHEMA)

    unknown = sorted(set(pairs) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")

    values = {}
    for key, (parser, default) in schema.items():
        if key in pairs:
            try:
                values[key] = parser(pairs[key])
            except ConfigError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from None
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = default

    a, b, n, s = values["domain.a"], values["domain.b"], values["grid.n"], values["operator.s"]
    if not b > a:
        raise ConfigError(f"domain.b must exceed domain.a, got [{a}, {b}]")
    if n < 1:
        raise ConfigError(f"grid.n must be positive, got {n}")
    if not 0.0 < s < 1.0:
        raise ConfigError(f"operator.s must lie in (0, 1), got {s}")

    try:
        solver_params = SolverParams(
            tol=values["solver.tol"], max_iter=values["solver.max_iter"],
            relaxation=values["solver.relaxation"],
            active_tol=values["solver.active_tol"], seed=values["seed"])
        penalty_params = None
        if penalty_enabled:
            penalty_params = PenaltyParams(
                epsilon=values["penalty.epsilon"],
                picard_damping=values["penalty.damping"],
                max_outer=values["penalty.max_outer"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if sweep_axis is not None:
        sv = values["sweep.values"]
        if sv is None:
            raise ConfigError("sweep.axis requires sweep.values")
        if len(sv) < 1:
            raise ConfigError("sweep.values must be nonempty")
        diffs = np.diff(sv)
        if len(sv) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("sweep.values must be strictly monotone")
        if sweep_axis == "n":
            if any(v != int(v) or v < 1 for v in sv):
                raise ConfigError("n-axis sweep.values must be positive integers")
            if obstacle_preset == "custom" or forcing_preset == "custom":
                raise ConfigError("n-axis sweeps cannot use 'custom' presets")
    elif values["sweep.values"] is not None:
        raise ConfigError("sweep.values given without sweep.axis")

    prefix_params = lambda prefix: {
        key.split(".", 1)[1]: values[key]
        for key in schema if key.startswith(prefix) and not key.endswith("preset")}

    return RunConfig(
        a=a, b=b, n=n, s=s,
        obstacle_preset=obstacle_preset,
        obstacle_params=prefix_params("obstacle."),
        forcing_preset=forcing_preset,
        forcing_params=prefix_params("forcing."),
        solver_method=solver_method,
        solver_params=solver_params,
        penalty_params=penalty_params,
        sweep_axis=sweep_axis,
        sweep_values=values["sweep.values"],
        verify_samples=values["verify.samples"],
        verify_tol=values["verify.tol"],
        output_json=values["output.json"],
        output_csv=values["output.csv"],
        seed=values["seed"],
        echo={k: values[k] for k in sorted(values) if values[k] is not None},
    )


def parse_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    return parse_config_text(text)
