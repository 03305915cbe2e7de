"""Run configuration: a flat ``key=value`` document with ``#`` comments."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .flux import FLUX_KINDS
from .grid import build_grid
from .model import ModelParams, SchemeOptions
from .weno import DEFAULT_EPS
from .ssp import INTEGRATORS

#: published reference step, available through ``dt=2.2906e-4``
REFERENCE_DT = 2.2906e-4
WENO_MODES = ("nonlinear", "linear")
SOURCE_MODES = ("tensor", "cell_average")

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    # mesh
    X: float = 1.0
    Y0: float = -1.5
    Y1: float = 1.5
    Nx: int = 50
    Ny: int = 150
    # model
    delta1: float = 0.255
    beta: float = 5.88
    A: float = 22.42
    Gamma: float = 0.135
    Gamma1: float = 1.0
    q1: float = 1.0
    kappa: float = 0.0045
    chi: float = 0.002
    eta: float = 15.0
    epsilon_v: float = 0.001
    sigma_v: float = 0.08
    a: float = 1.0 / 0.3
    cL: float = 1.1
    cL_decay: float = 0.0
    v0_1: float = math.cos(math.pi / 10)
    v0_2: float = math.sin(math.pi / 10)
    v_box: float = 4.0
    # scheme
    integrator: str = "msstep3"
    flux: str = "upwind"
    limiter: bool = True
    weno: str = "nonlinear"
    weno_eps: float = DEFAULT_EPS
    source_mode: str = "tensor"
    dt: float | None = None  # None means automatic
    T_final: float = 0.687
    snapshot_interval: float = 0.1145
    snapshot_times: tuple[float, ...] = ()
    # driver
    out: str = "run_output"
    strict_positivity: bool = False
    threads: int = 1
    seed: int = 0  # reserved; the solver is deterministic

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            build_grid(self.X, self.Y0, self.Y1, self.Nx, self.Ny)
            self.model_params()
            self.scheme_options()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive or 'auto'")
        if not self.T_final > 0:
            raise ConfigError("T_final must be positive")
        if self.snapshot_times:
            bad = [t for t in self.snapshot_times if not 0 <= t <= self.T_final]
            if bad:
                raise ConfigError(f"snapshot times outside [0, T_final]: {bad}")
        elif not self.snapshot_interval > 0:
            raise ConfigError("snapshot_interval must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def grid(self):
        return build_grid(self.X, self.Y0, self.Y1, self.Nx, self.Ny)

    def model_params(self) -> ModelParams:
        names = {f.name for f in fields(ModelParams)} - {"v0"}
        kw = {k: getattr(self, k) for k in names}
        return ModelParams(v0=(self.v0_1, self.v0_2), **kw)

    def scheme_options(self) -> SchemeOptions:
        return SchemeOptions(
            flux=self.flux,
            limiter=self.limiter,
            linear=self.weno == "linear",
            eps=self.weno_eps,
            source_mode=self.source_mode,
            threads=self.threads,
        )

    def output_times(self) -> list[float]:
        """Requested snapshot times; by default every multiple of the interval up to T_final."""
        if self.snapshot_times:
            return sorted(self.snapshot_times)
        n = int(math.floor(self.T_final / self.snapshot_interval + 1e-9))
        return [k * self.snapshot_interval for k in range(1, n + 1)]


_ENUMS = {
    "integrator": INTEGRATORS,
    "flux": FLUX_KINDS,
    "weno": WENO_MODES,
    "source_mode": SOURCE_MODES,
}


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_value(key: str, text: str):
    f = _FIELDS[key]
    if key in _ENUMS:
        if text not in _ENUMS[key]:
            raise ValueError(f"unknown value {text!r} for {key}; choose from {_ENUMS[key]}")
        return text
    if key == "dt":
        return None if text.lower() == "auto" else _parse_float(text)
    if key == "snapshot_times":
        return tuple(_parse_float(s) for s in text.split(",") if s.strip()) if text else ()
    if f.type in ("bool",):
        return _parse_bool(text)
    if f.type in ("int",):
        try:
            return int(text)
        except ValueError:
            raise ValueError(f"expected an integer for {key}, got {text!r}") from None
    if f.type in ("float",):
        return _parse_float(text)
    return text


def _parse_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {text!r}")
    return v


_FIELDS = {f.name: f for f in fields(RunConfig)}


def apply_overrides(base: RunConfig, pairs, line_numbers=None) -> RunConfig:
    """Apply ``(key, text)`` pairs on top of ``base``."""
    values = {}
    for n, (key, text) in enumerate(pairs):
        line = line_numbers[n] if line_numbers else None
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", line)
        try:
            values[key] = _parse_value(key, text)
        except ValueError as exc:
            raise ConfigError(str(exc), line) from None
    try:
        return replace(base, **values)
    except ConfigError as exc:
        raise ConfigError(str(exc), _blame(values, line_numbers)) from None


def _blame(values: dict, line_numbers) -> int | None:
    """Line of the first key that is invalid on its own, else of the last key."""
    if not line_numbers:
        return None
    for n, (key, v) in enumerate(values.items()):
        try:
            replace(RunConfig(), **{key: v})
        except ConfigError:
            return line_numbers[n]
    return line_numbers[-1]


def split_line(line: str, lineno: int | None = None) -> tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"malformed line (expected key=value): {line.strip()!r}", lineno)
    key, _, value = line.partition("=")
    key, value = key.strip(), value.strip()
    if not key:
        raise ConfigError("missing key before '='", lineno)
    return key, value


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    pairs, lines = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        pairs.append(split_line(line, lineno))
        lines.append(lineno)
    seen = {}
    for (key, _), ln in zip(pairs, lines):
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", ln)
        seen[key] = ln
    cfg = base or RunConfig()
    if not pairs:
        return cfg
    return apply_overrides(cfg, pairs, lines)


def format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{f.name}={format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def as_dict(cfg: RunConfig) -> dict:
    return {f.name: format_value(getattr(cfg, f.name)) for f in fields(cfg)}
