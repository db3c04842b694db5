"""Run configuration: dataclasses plus the plain-text ``key = value`` format.

Config files use dotted section keys, one assignment per line::

    data.synthetic_dir = ./syn
    train.iterations = 2000
    freq.anchor_sigmas = 2,4,8

Blank lines and ``#`` comments are ignored. Unknown keys are errors.
"""

from __future__ import annotations

import hashlib
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .exceptions import ConfigurationError
from .imaging import FrequencyConfig, ParamSpec, default_specs
from .losses import LossWeights
from .scheduler import SchedulerConfig


@dataclass
class DataConfig:
    synthetic_dir: str = ""
    real_dir: str = ""
    height: int = 256
    width: int = 256
    batch_size: int = 4
    seed: int = 1234


@dataclass
class ModelConfig:
    base_width: int = 32
    disc_width: int = 32
    res_blocks: int = 9
    embed_dim: int = 64


@dataclass
class LossConfig:
    lambda_gan: float = 1.0
    lambda_nce: float = 1.0
    lambda_id: float = 5.0
    lambda_edit: float = 0.1
    lambda_low: float = 10.0
    nce_tau: float = 0.07
    nce_patches: int = 256

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_gan, self.lambda_nce, self.lambda_id,
                           self.lambda_edit, self.lambda_low)


@dataclass
class EditConfig:
    wb_gain_max: float = 2.0
    ev_max: float = 1.5
    contrast_lo: float = 0.5
    contrast_hi: float = 1.5
    saturation_max: float = 2.0
    blur_sigma_max: float = 3.0
    grain_amp_max: float = 0.15
    grain_sigma_lo: float = 0.5
    grain_sigma_hi: float = 3.0
    disabled: tuple[str, ...] = ()

    def build_specs(self) -> list[ParamSpec]:
        return default_specs(
            wb_gain_max=self.wb_gain_max, ev_max=self.ev_max,
            contrast_lo=self.contrast_lo, contrast_hi=self.contrast_hi,
            saturation_max=self.saturation_max, blur_sigma_max=self.blur_sigma_max,
            grain_amp_max=self.grain_amp_max, grain_sigma_lo=self.grain_sigma_lo,
            grain_sigma_hi=self.grain_sigma_hi, disabled=self.disabled)


@dataclass
class TrainSection:
    iterations: int = 2000
    seed: int = 1234
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    checkpoint_dir: str = "checkpoints"
    metrics_csv: str = "metrics.csv"
    checkpoint_interval: int = 500
    log_every: int = 100


@dataclass
class TrainConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    edit: EditConfig = field(default_factory=EditConfig)
    freq: FrequencyConfig = field(default_factory=FrequencyConfig)
    sched: SchedulerConfig = field(default_factory=SchedulerConfig)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self) -> "TrainConfig":
        if self.train.iterations < 1:
            raise ConfigurationError("train.iterations must be >= 1")
        for name in ("lr_g", "lr_d"):
            if getattr(self.train, name) <= 0:
                raise ConfigurationError(f"train.{name} must be positive")
        if self.data.batch_size < 1:
            raise ConfigurationError("data.batch_size must be >= 1")
        if not self.data.synthetic_dir or not self.data.real_dir:
            raise ConfigurationError("data.synthetic_dir and data.real_dir are required")
        return self


SECTIONS = ("data", "model", "loss", "edit", "freq", "sched", "train")


def _coerce(text: str, typ) -> object:
    origin = typing.get_origin(typ)
    if origin is tuple:
        item = typing.get_args(typ)[0]
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(_coerce(p, item) for p in parts)
    if typ is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"cannot parse boolean from {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text


def parse_config_text(text: str) -> TrainConfig:
    """Parse ``key = value`` lines into a TrainConfig (defaults apply)."""
    overrides: dict[str, dict[str, object]] = {s: {} for s in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if "." not in key:
            raise ConfigurationError(f"line {lineno}: key must be 'section.name', got {key!r}")
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigurationError(f"line {lineno}: unknown section {section!r}")
        overrides[section][name] = value

    cfg = TrainConfig()
    for section, values in overrides.items():
        if not values:
            continue
        target = getattr(cfg, section)
        hints = typing.get_type_hints(type(target))
        known = {f.name for f in fields(target)}
        kwargs = {}
        for name, raw in values.items():
            if name not in known:
                raise ConfigurationError(f"unknown config key {section}.{name}")
            try:
                kwargs[name] = _coerce(raw, hints[name])
            except ConfigurationError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"bad value for {section}.{name}: {raw!r}") from exc
        try:
            setattr(cfg, section, replace(target, **kwargs))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(cfg: TrainConfig) -> str:
    """Deterministic textual dump; parsing it reproduces the config."""
    lines = []
    for section in SECTIONS:
        target = getattr(cfg, section)
        for f in sorted(fields(target), key=lambda f: f.name):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(target, f.name))}")
    return "\n".join(lines) + "\n"


def config_fingerprint(cfg: TrainConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()
