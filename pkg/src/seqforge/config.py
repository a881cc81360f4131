"""Run configuration: one YAML document with renderer/model/trainer/generation sections."""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .models import CascadePlan
from .render.fonts import FONT_DIR_ENV
from .render.synth import RendererConfig
from .train import TrainConfig

SECTIONS = ("renderer", "model", "trainer", "generation")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    batch_size: int = 16
    grayscale: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("generation batch_size must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    renderer: RendererConfig = field(default_factory=RendererConfig)
    model: CascadePlan = field(default_factory=CascadePlan)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)

    def to_dict(self) -> dict:
        return {name: _dump(getattr(self, name)) for name in SECTIONS}

    def replace(self, section: str, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


def _dump(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def _coerce(value, hint, key: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if value is None:
        if type(None) in args:
            return None
        raise ConfigError(f"{key} may not be null")
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} must be a list")
        inner = args[0]
        return tuple(_coerce(v, inner, key) for v in value)
    if origin is typing.Union or (origin is not None and type(None) in args):
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(value, arg, key)
            except ConfigError:
                continue
        raise ConfigError(f"{key}: cannot interpret {value!r}")
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    return value


def _build(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    kwargs = {k: _coerce(v, hints[k], f"{section}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}]: {exc}") from exc


def from_dict(data: dict | None) -> RunConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    classes = {"renderer": RendererConfig, "model": CascadePlan, "trainer": TrainConfig, "generation": GenerationConfig}
    built = {name: _build(classes[name], data.get(name) or {}, name) for name in SECTIONS}
    cfg = RunConfig(**built)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    r, m = cfg.renderer, cfg.model
    if (r.image_height, r.image_width) != (m.image_height, m.image_width):
        raise ConfigError("renderer and model image sizes disagree")
    if r.mode not in ("word", "line", "paragraph"):
        raise ConfigError(f"renderer.mode must be word, line or paragraph, got {r.mode!r}")
    lo, hi = r.scale
    if not 0 < lo <= hi:
        raise ConfigError("renderer.scale must be an increasing pair of positive numbers")
    if r.rotation < 0 or r.shear < 0 or r.perspective < 0:
        raise ConfigError("transform ranges must be non-negative")
    if cfg.trainer.learning_rate <= 0:
        raise ConfigError("trainer.learning_rate must be positive")


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load ``path`` (YAML) or the shipped defaults; $SEQFORGE_FONT_DIR fills an unset font_dir."""
    if path is None:
        text = resources.files("seqforge").joinpath("default.yaml").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    cfg = from_dict(data)
    if cfg.renderer.font_dir is None and os.environ.get(FONT_DIR_ENV):
        cfg = cfg.replace("renderer", font_dir=os.environ[FONT_DIR_ENV])
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
