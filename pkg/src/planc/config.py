"""Run configuration: typed blocks, YAML parsing with field-path errors."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from .clf import CHANNELS, ChannelWeights
from .reference import ARM_JOINTS, PlannerConfig
from .terrain import FAMILIES

__all__ = [
    "ConfigError",
    "ConfigFileError",
    "ConfigSyntaxError",
    "ConfigKeyError",
    "ConfigRangeError",
    "ClfConfig",
    "TerrainConfig",
    "SimConfig",
    "EvalConfig",
    "Config",
    "parse_config",
    "parse_config_text",
    "config_from_dict",
    "config_to_dict",
    "dump_config",
]


class ConfigError(Exception):
    """Base class; ``path`` names the offending field when there is one."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ConfigFileError(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class ConfigKeyError(ConfigError):
    pass


class ConfigRangeError(ConfigError):
    pass


@dataclass(frozen=True)
class ClfConfig:
    q_pos: float = 1.0
    q_vel: float = 0.1
    r: float = 1.0
    # per-channel overrides: name -> (q_pos, q_vel, r)
    channels: dict = field(default_factory=dict)
    c: float | None = None
    alpha: float = 1.0

    def channel_weights(self) -> tuple[ChannelWeights, ...]:
        default = ChannelWeights(self.q_pos, self.q_vel, self.r)
        return tuple(
            ChannelWeights(*self.channels[name]) if name in self.channels else default
            for name in CHANNELS
        )


@dataclass(frozen=True)
class TerrainConfig:
    kind: str = "flat_stones"
    difficulty: float = 0.0
    n_stones: int = 20
    stone_width: float = 0.4
    seed: int = 0
    path: str = ""  # terrain document to load instead of generating


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    noise: bool = False
    landing_noise: float = 0.01
    vz_noise: float = 0.05
    disturb: bool = False
    disturb_max: float = 0.3
    disturb_cap: float = 0.5
    disturb_count: int = 1
    disturb_duration: float = 0.0
    disturb_window: tuple[float, float] = (0.5, 4.0)
    fall_height: float = 0.3
    lateral_fall: float = 0.5
    max_reach: float = 0.6
    init_p: float | None = None  # null: nominal post-impact position
    init_energy: float = 0.6


@dataclass(frozen=True)
class EvalConfig:
    families: tuple[str, ...] = ("flat_stones", "height_varying")
    difficulties: tuple[float, ...] = (0.5, 1.0)
    seeds: int = 100
    seed_offset: int = 0


@dataclass(frozen=True)
class Config:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    clf: ClfConfig = field(default_factory=ClfConfig)
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_BLOCKS = {
    "planner": PlannerConfig,
    "clf": ClfConfig,
    "terrain": TerrainConfig,
    "sim": SimConfig,
    "eval": EvalConfig,
}

_pos = (lambda v: v > 0, "must be > 0")
_nonneg = (lambda v: v >= 0, "must be >= 0")
_unit_open = (lambda v: 0 < v < 1, "must lie in (0, 1)")
_unit = (lambda v: 0 <= v <= 1, "must lie in [0, 1]")

_RANGES: dict[str, tuple[Callable[[Any], bool], str]] = {
    "planner.epsilon": _unit_open,
    "planner.e_star": _pos,
    "planner.z0": _pos,
    "planner.g": _pos,
    "planner.w_nominal": _nonneg,
    "planner.t_min": _pos,
    "planner.t_max": _pos,
    "planner.swing_clearance_margin": _nonneg,
    "planner.blend_exponent": _pos,
    "planner.foothold_margin": _nonneg,
    "planner.lateral_centering": _unit,
    "planner.arm_swing_gain": _nonneg,
    "planner.arm_nominal": (lambda v: len(v) == len(ARM_JOINTS), f"needs {len(ARM_JOINTS)} entries"),
    "clf.q_pos": _pos,
    "clf.q_vel": _nonneg,
    "clf.r": _pos,
    "clf.c": (lambda v: v is None or v > 0, "must be > 0 or null"),
    "clf.alpha": _pos,
    "terrain.kind": (lambda v: v in FAMILIES, f"must be one of {', '.join(FAMILIES)}"),
    "terrain.difficulty": _unit,
    "terrain.n_stones": (lambda v: v >= 2, "must be >= 2"),
    "terrain.stone_width": _pos,
    "sim.dt": _pos,
    "sim.landing_noise": _nonneg,
    "sim.vz_noise": _nonneg,
    "sim.disturb_max": _nonneg,
    "sim.disturb_cap": _nonneg,
    "sim.disturb_count": _nonneg,
    "sim.disturb_duration": _nonneg,
    "sim.disturb_window": (lambda v: len(v) == 2 and 0 <= v[0] <= v[1], "must be [lo, hi] with 0 <= lo <= hi"),
    "sim.fall_height": _nonneg,
    "sim.lateral_fall": _pos,
    "sim.max_reach": _pos,
    "sim.init_energy": _pos,
    "eval.families": (lambda v: len(v) > 0 and all(f in FAMILIES for f in v), f"entries must be in {', '.join(FAMILIES)}"),
    "eval.difficulties": (lambda v: len(v) > 0 and all(0 <= d <= 1 for d in v), "entries must lie in [0, 1]"),
    "eval.seeds": (lambda v: v >= 1, "must be >= 1"),
    "eval.seed_offset": _nonneg,
}


_NULLABLE = ("clf.c", "sim.init_p")


def _coerce(value: Any, default: Any, path: str) -> Any:
    """Convert a YAML scalar/list to the type of the field default."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float) or (default is None and path in _NULLABLE):
            if value is None:
                return None
            if isinstance(value, bool):
                raise TypeError("expected a number")
            v = float(value)
            if not math.isfinite(v):
                raise TypeError("expected a finite number")
            return v
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError("expected a string")
            return value
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError("expected a list")
            if default and isinstance(default[0], str) or path == "eval.families":
                return tuple(str(v) for v in value)
            out = []
            for v in value:
                if isinstance(v, bool):
                    raise TypeError("expected numbers")
                out.append(float(v))
            return tuple(out)
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise TypeError("expected a mapping")
            out = {}
            for name, triple in value.items():
                if name not in CHANNELS:
                    raise ConfigKeyError(f"unknown channel (known: {', '.join(CHANNELS)})", f"{path}.{name}")
                if not isinstance(triple, (list, tuple)) or len(triple) != 3:
                    raise ConfigRangeError("expected [q_pos, q_vel, r]", f"{path}.{name}")
                q_pos, q_vel, r = (float(x) for x in triple)
                if not (q_pos > 0 and q_vel >= 0 and r > 0):
                    raise ConfigRangeError("need q_pos > 0, q_vel >= 0, r > 0", f"{path}.{name}")
                out[name] = (q_pos, q_vel, r)
            return out
    except (TypeError, ValueError) as exc:
        raise ConfigRangeError(str(exc), path) from None
    return value


def config_from_dict(doc: dict | None) -> Config:
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigSyntaxError("top level must be a mapping")
    blocks = {}
    for key in doc:
        if key not in _BLOCKS:
            raise ConfigKeyError(f"unknown section (known: {', '.join(_BLOCKS)})", str(key))
    for name, cls in _BLOCKS.items():
        section = doc.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigSyntaxError("section must be a mapping", name)
        defaults = cls()
        fields = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in section.items():
            path = f"{name}.{key}"
            if key not in fields:
                raise ConfigKeyError("unknown key", path)
            value = _coerce(raw, getattr(defaults, key), path)
            check = _RANGES.get(path)
            if check is not None and not check[0](value):
                raise ConfigRangeError(f"{check[1]} (got {raw!r})", path)
            values[key] = value
        if name == "planner":
            t_min = values.get("t_min", defaults.t_min)
            t_max = values.get("t_max", defaults.t_max)
            if not t_min < t_max:
                raise ConfigRangeError(f"must exceed planner.t_min ({t_min})", "planner.t_max")
        try:
            blocks[name] = dataclasses.replace(defaults, **values)
        except ValueError as exc:
            raise ConfigRangeError(str(exc), name) from None
    s = blocks["sim"]
    if s.disturb_max > s.disturb_cap:
        raise ConfigRangeError(f"exceeds sim.disturb_cap ({s.disturb_cap})", "sim.disturb_max")
    return Config(**blocks)


def parse_config_text(text: str) -> Config:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(f"malformed YAML: {exc}") from None
    return config_from_dict(doc)


def parse_config(path: str | Path | None) -> Config:
    """Load a YAML config; ``None`` gives all defaults."""
    if path is None:
        return Config()
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigFileError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigFileError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: Config) -> dict:
    return {
        name: {f.name: _plain(getattr(getattr(cfg, name), f.name)) for f in dataclasses.fields(block)}
        for name, block in _BLOCKS.items()
    }


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
