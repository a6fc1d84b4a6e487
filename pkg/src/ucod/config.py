"""Run configuration: a flat ``key = value`` text file.

Lines starting with ``#`` are comments. Values are parsed as int, float,
bool (true/false) or left as strings. Dotted keys address the backbone
(``backbone.patch_size``) and a few dotted aliases such as
``apm.strategy``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .apm import MIXING_STRATEGIES
from .backbone import BACKBONES, BackboneConfig
from .errors import ConfigError
from .fixed_strategy import STRATEGIES

ALIASES = {
    "apm.strategy": "mixing",
    "apm.disc_input_size": "disc_input_size",
    "fixed.strategy": "fixed_strategy",
    "look_twice.enabled": "look_twice",
    "look_twice.train": "look_twice_train",
    "look_twice.tau": "tau",
    "T": "epochs",
    "eta": "ema_momentum",
}


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 32
    ema_momentum: float = 0.99
    lr_student: float = 1e-4
    lr_disc: float = 1e-4
    tau: float = 0.15
    seed: int = 0
    mixing: str = "apm"
    fixed_strategy: str = "background-seed"
    null_value: int = 0
    perlin_threshold: float = 0.5
    similarity_threshold: float = 0.0
    look_twice: bool = True
    look_twice_train: bool = True
    cc_threshold: float = 0.5
    decoder_output: str = "sigmoid"
    w_seg: float = 1.0
    w_orth: float = 1.0
    w_dis: float = 1.0
    disc_input_size: int = 64
    image_size: int = 224
    data_dir: str = ""
    backbone: BackboneConfig = field(default_factory=BackboneConfig)

    def __post_init__(self):
        if self.epochs <= 0:
            raise ConfigError("epochs must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError("ema_momentum must lie in [0, 1]")
        if self.mixing not in MIXING_STRATEGIES:
            raise ConfigError(f"unknown mixing strategy {self.mixing!r}; choose from {MIXING_STRATEGIES}")
        if self.fixed_strategy not in STRATEGIES:
            raise ConfigError(f"unknown fixed strategy {self.fixed_strategy!r}; choose from {STRATEGIES}")
        if self.decoder_output not in ("sigmoid", "logits"):
            raise ConfigError("decoder_output must be 'sigmoid' or 'logits'")
        if self.backbone.name not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone.name!r}")
        if self.image_size < self.backbone.patch_size:
            raise ConfigError("image_size must be at least one patch")

    @property
    def loss_weights(self) -> tuple[float, float, float]:
        return self.w_seg, self.w_orth, self.w_dis

    def replace(self, **changes) -> "TrainConfig":
        backbone_changes = {k[len("backbone."):]: v for k, v in changes.items() if k.startswith("backbone.")}
        rest = {k: v for k, v in changes.items() if not k.startswith("backbone.")}
        if backbone_changes:
            rest["backbone"] = dataclasses.replace(self.backbone, **backbone_changes)
        return dataclasses.replace(self, **rest)

    def to_flat(self) -> dict:
        flat = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "backbone"}
        for f in dataclasses.fields(self.backbone):
            flat[f"backbone.{f.name}"] = getattr(self.backbone, f.name)
        return flat

    @classmethod
    def from_flat(cls, values: dict) -> "TrainConfig":
        top = {f.name: f for f in dataclasses.fields(cls)}
        bb = {f.name: f for f in dataclasses.fields(BackboneConfig)}
        kwargs, bb_kwargs = {}, {}
        for key, value in values.items():
            key = ALIASES.get(key, key)
            if key.startswith("backbone."):
                name = key[len("backbone."):]
                if name not in bb:
                    raise ConfigError(f"unknown config key {key!r}")
                bb_kwargs[name] = _coerce(value, bb[name].type, key)
            elif key in top and key != "backbone":
                kwargs[key] = _coerce(value, top[key].type, key)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**kwargs, backbone=BackboneConfig(**bb_kwargs))


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def _coerce(value, type_name, key):
    type_name = str(type_name)
    if value is None:
        if "None" in type_name:
            return None
        if type_name == "str":
            return ""
        raise ConfigError(f"{key}: value required")
    try:
        if type_name.startswith("bool"):
            if isinstance(value, bool):
                return value
            raise ValueError(value)
        if type_name.startswith("int"):
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError(value)
            return int(value)
        if type_name.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type_name}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = _parse_scalar(value)
    return values


def load_config(path: str) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return TrainConfig.from_flat(parse_config_text(text))


def dump_config(config: TrainConfig) -> str:
    lines = []
    for key, value in config.to_flat().items():
        lines.append(f"{key} = {'none' if value is None else str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"
