"""Flat ``key = value`` config files and the run configuration."""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

_SECTION = "config"


def read_kv(path):
    """Parse a flat ``key = value`` file (``#`` comments, no sections)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser[_SECTION])


def _coerce(name, kind, raw):
    try:
        if kind is bool:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(float(v) for v in str(raw).split(","))
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    mu1: float = 0.65
    mu2: float = 0.55
    mu3: float = 0.92
    gamma_frac: float = 0.01
    alpha1: float = 0.7
    alpha2: float = 0.1
    search_scale: float = 2.0
    core_k: int = 8
    core_scales: tuple = (0.95, 1.0, 1.05)
    cell: int = 8
    mask_colors: int = 2
    seed: int = 0
    weights: str = ""
    enable_mg: bool = True
    enable_dr: bool = True

    def __post_init__(self):
        if not (0 < self.mu2 < self.mu1 < self.mu3 < 1):
            raise ConfigError("need 0 < mu2 < mu1 < mu3 < 1")
        if not self.gamma_frac > 0:
            raise ConfigError("gamma_frac must be positive")
        if not 0 <= self.alpha1 <= 1:
            raise ConfigError("alpha1 is an IOU threshold in [0, 1]")
        if not self.alpha2 > 0:
            raise ConfigError("alpha2 must be positive")
        if not self.search_scale > 1:
            raise ConfigError("search_scale must exceed 1")
        if self.core_k < 1 or self.cell < 1:
            raise ConfigError("core_k and cell must be >= 1")
        if not self.core_scales or min(self.core_scales) <= 0:
            raise ConfigError("core_scales must be positive")
        if self.mask_colors not in (1, 2):
            raise ConfigError("mask_colors must be 1 or 2")

    @classmethod
    def from_mapping(cls, values):
        kinds = {f.name: f.type for f in fields(cls)}
        types = {"float": float, "int": int, "str": str, "bool": bool, "tuple": tuple}
        out = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            out[key] = _coerce(key, types[kinds[key]], raw)
        return cls(**out)

    @classmethod
    def load(cls, path=None, env=None):
        """Defaults, overridden by ``path`` (if given), then by ``TSDM_SEED``."""
        values = read_kv(path) if path else {}
        env = os.environ if env is None else env
        if env.get("TSDM_SEED"):
            values["seed"] = env["TSDM_SEED"]
        return cls.from_mapping(values)

    def to_text(self):
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"
