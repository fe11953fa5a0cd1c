"""Pipeline configuration: a flat dataclass with key = value file I/O."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .geometry import PAIR_MODES


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # PSE
    layers: int = 3
    k: int = 20
    # PFT
    depth: int = 6
    d_model: int = 64
    heads: int = 4
    se_reduction: int = 4
    sw_width: int = 160
    tied_phi: bool = True
    residual_outside_ln: bool = False
    # matching / GMCCE
    temperature: float = 0.1
    normalize_features: bool = True
    k_s: int = 10
    k_m: int = 0  # 0 -> same as k_s
    lam: float = 30.0
    tau: float = 0.5
    # losses
    alpha: float = 0.1
    beta: float = 1.0
    r_inlier: float = 0.05
    literal_losses: bool = False
    # training
    lr: float = 1e-3
    epochs: int = 4
    batch_size: int = 1
    seed: int = 0
    mode: str = "clean"
    # ablations
    no_pse: bool = False
    shallow_wide: bool = False
    no_pos_enc: bool = False
    no_gmcce: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def mink_k(self) -> int:
        return self.k_m or self.k_s

    @property
    def pft_depth(self) -> int:
        return 1 if self.shallow_wide else self.depth

    @property
    def pft_width(self) -> int:
        return self.sw_width if self.shallow_wide else self.d_model

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(1 <= self.layers <= 4, "layers must be in 1..4")
        need(self.k >= 1, "k must be >= 1")
        need(self.depth >= 1, "depth must be >= 1")
        need(self.heads >= 1, "heads must be >= 1")
        need(self.d_model % self.heads == 0, "d_model must be divisible by heads")
        need(self.sw_width % self.heads == 0, "sw_width must be divisible by heads")
        need(self.d_model % self.se_reduction == 0, "se_reduction must divide d_model")
        need(self.sw_width % self.se_reduction == 0, "se_reduction must divide sw_width")
        need(self.temperature > 0, "temperature must be positive")
        need(self.k_s >= 2, "k_s must be >= 2")
        need(0 <= self.k_m <= self.k_s * (self.k_s - 1) // 2, "k_m must be in 0..k_s(k_s-1)/2")
        need(self.lam > 0, "lam must be positive")
        need(0.0 <= self.tau <= 1.0, "tau must be in [0, 1]")
        need(self.alpha >= 0 and self.beta >= 0, "alpha and beta must be non-negative")
        need(self.r_inlier > 0, "r_inlier must be positive")
        need(self.lr >= 0, "lr must be non-negative")
        need(self.epochs >= 0, "epochs must be non-negative")
        need(self.batch_size == 1, "only batch_size = 1 is supported")
        need(self.mode in PAIR_MODES, f"mode must be one of {PAIR_MODES}")

    def replace(self, **changes) -> PipelineConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def coerce(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    text = str(raw).strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults <- config file <- overrides <- ``DIT_SEED`` environment variable."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for key, v in (overrides or {}).items():
        if v is not None:
            values[key] = coerce(key, v) if isinstance(v, str) else v
    if os.environ.get("DIT_SEED"):
        values["seed"] = coerce("seed", os.environ["DIT_SEED"])
    unknown = set(values) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**values)
