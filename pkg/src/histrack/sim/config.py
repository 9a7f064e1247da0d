"""Flat ``key = value`` configuration files.

Grammar, one statement per line::

    # comment
    key = value        # trailing comments allowed

Values are parsed according to the target dataclass field: integers, reals,
booleans (``true``/``false``/``1``/``0``), strings, and comma-separated
tuples such as ``arena = 640, 480``. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import enum
import typing
from dataclasses import dataclass, fields

from ..association import AssociationConfig


class ConfigError(ValueError):
    pass


class Motion(str, enum.Enum):
    LINEAR = "linear"
    SINUSOIDAL = "sinusoidal"
    CROSSING = "crossing"


@dataclass(frozen=True)
class ScenarioConfig:
    num_objects: int = 6
    num_frames: int = 100
    arena: tuple = (640.0, 480.0)
    motion: Motion = Motion.LINEAR
    pos_noise_sigma: float = 1.0
    miss_prob: float = 0.05
    false_pos_rate: float = 0.5
    conf_mean_hit: float = 0.85
    conf_mean_fp: float = 0.3
    conf_sigma: float = 0.08
    embed_dim: int = 32
    embed_noise_sigma: float = 0.1
    # confidence dips: chance per object-frame that a dip starts, its length,
    # and the mean confidence during it
    dip_prob: float = 0.0
    dip_len: int = 5
    dip_conf: float = 0.35
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "motion", Motion(self.motion))
        object.__setattr__(self, "arena", tuple(float(v) for v in self.arena))
        for name in ("miss_prob", "dip_prob", "conf_mean_hit", "conf_mean_fp", "dip_conf"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.num_objects < 0 or self.num_frames <= 0 or self.embed_dim <= 0 or self.dip_len <= 0:
            raise ConfigError("counts and dimensions must be positive")
        if len(self.arena) != 2 or min(self.arena) <= 0:
            raise ConfigError(f"arena must be (width, height) > 0, got {self.arena}")
        if min(self.pos_noise_sigma, self.false_pos_rate, self.conf_sigma, self.embed_noise_sigma) < 0:
            raise ConfigError("noise levels and rates must be nonnegative")

    @property
    def conf_model(self) -> tuple[float, float, float]:
        return (self.conf_mean_hit, self.conf_mean_fp, self.conf_sigma)


def _convert(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        if tp is tuple or origin is tuple:
            return tuple(float(p) for p in raw.split(",") if p.strip())
        if isinstance(tp, type) and issubclass(tp, enum.Enum):
            return tp(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_kv(text: str, cls, source: str = "<string>"):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(raw, hints[key], key)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_kv(path, cls):
    with open(path) as fh:
        return parse_kv(fh.read(), cls, str(path))


def dump_kv(obj) -> str:
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, enum.Enum):
            v = v.value
        elif isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_scenario_config(path) -> ScenarioConfig:
    return load_kv(path, ScenarioConfig)


def load_association_config(path) -> AssociationConfig:
    return load_kv(path, AssociationConfig)


def override(obj, **changes):
    return dataclasses.replace(obj, **changes)
