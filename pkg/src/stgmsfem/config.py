"""Experiment configuration: a dataclass plus a flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

FIELDS = ("translated", "channels_translated", "channels_rotated", "constant")
LATERAL = ("iid", "constant")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class ExperimentConfig:
    # grid and time
    n_coarse: int = 10
    fine_per_coarse: int = 10
    t_end: float = 1.6
    n_slabs: int = 2
    steps_per_slab: int = 8
    # coefficient
    field: str = "translated"
    contrast: float = 1e6
    motion_x: int = 1
    motion_y: int = 0
    update_period: int = 2
    degrees_per_step: float = 11.25
    n_inclusions: int = 60
    n_channels: int = 8
    geometry_seed: int = 7
    # problem data: f is constant, beta = sin(pi x) sin(pi y) scaled by initial_amplitude
    source: float = 1.0
    initial_amplitude: float = 1.0
    # offline
    L: int = 10
    p_bf: int = 8
    L_list: tuple = (2, 6, 10, 20, 30, 40, 50)
    p_bf_list: tuple = (1, 4, 8, 12, 20, 30, 40)
    space_layers: int = -1  # -1: one coarse layer (fine_per_coarse cells)
    time_extension: int = 2
    lateral_data: str = "iid"
    full_snapshots: bool = False
    corr_min_L: int = 3  # correlation study skips under-resolved L below this
    # online
    sweeps: int = 3
    theta: float | None = None
    # run
    seed: int = 1
    threads: int = 1
    out: str = "out"

    def __post_init__(self):
        self.validate()

    @property
    def layers(self) -> int:
        return self.fine_per_coarse if self.space_layers < 0 else self.space_layers

    def validate(self) -> None:
        positive = ("n_coarse", "fine_per_coarse", "n_slabs", "steps_per_slab", "update_period")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_coarse < 2:
            raise ConfigError("n_coarse must be >= 2 so that interior coarse nodes exist")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.field not in FIELDS:
            raise ConfigError(f"field must be one of {', '.join(FIELDS)}, got {self.field!r}")
        if self.lateral_data not in LATERAL:
            raise ConfigError(f"lateral_data must be one of {', '.join(LATERAL)}")
        if self.contrast <= 0:
            raise ConfigError("contrast must be positive")
        if self.L < 1 or self.p_bf < 0:
            raise ConfigError("need L >= 1 and p_bf >= 0")
        if any(v < 1 for v in self.L_list) or any(v < 0 for v in self.p_bf_list):
            raise ConfigError("L_list entries must be >= 1 and p_bf_list entries >= 0")
        if self.time_extension < 0 or self.sweeps < 0 or self.threads < 0:
            raise ConfigError("time_extension, sweeps and threads must be >= 0")
        if self.theta is not None and not 0 < self.theta <= 1:
            raise ConfigError(f"theta must lie in (0, 1], got {self.theta}")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> list[str]:
        """One ``key = value`` line per field, in declaration order; parseable by :func:`parse`."""
        return [f"{f.name} = {_format(getattr(self, f.name))}" for f in dataclasses.fields(self)]

    def digest(self, exclude=("out", "threads")) -> str:
        """Short hash of everything that can change numbers."""
        lines = [ln for ln in self.echo() if ln.split(" = ")[0] not in exclude]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(name: str, default, text: str):
    text = text.strip()
    try:
        if name == "theta":
            return None if text.lower() in ("none", "") else float(text)
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
    base = base or ExperimentConfig()
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in changes:
            raise ConfigError(f"line {lineno}: {key!r} given twice")
        changes[key] = _convert(key, defaults[key], value)
    try:
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse(text)
    return cfg.replace(**overrides) if overrides else cfg
