"""Flat ``key = value`` configuration files."""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import get_type_hints

from .model import ModelConfig


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 6e-4
    label_smoothing: float = 0.9
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 1
    eval_batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")


# file keys that differ from the dataclass field names
ALIASES = {
    "trm_layers": "layers",
    "trm_hidden_dim": "dim",
    "trm_heads": "heads",
    "trm_input_dropout": "input_dropout",
    "trm_hidden_dropout": "hidden_dropout",
    "moe_experts": "experts",
    "moe_top_experts": "top_experts",
    "embedding_dim": "dim",
}


def _convert(raw: str, typ):
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    names = str(typ)
    if "bool" in names:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if "int" in names:
        return int(text)
    if "float" in names:
        return float(text)
    return text


def parse_config_text(text: str) -> tuple[ModelConfig, TrainConfig]:
    model_types = get_type_hints(ModelConfig)
    train_types = get_type_hints(TrainConfig)
    model_kw, train_kw = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        name = ALIASES.get(key, key)
        if name == "seed":
            model_kw["seed"] = train_kw["seed"] = int(value)
        elif name in train_types:
            train_kw[name] = _convert(value, train_types[name])
        elif name in model_types:
            model_kw[name] = _convert(value, model_types[name])
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def load_config(path: str | os.PathLike) -> tuple[ModelConfig, TrainConfig]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def dump_config(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(train_cfg, f.name)}" for f in fields(train_cfg) if f.name != "seed"]
    lines += [f"{f.name} = {getattr(model_cfg, f.name)}" for f in fields(model_cfg)]
    return "\n".join(lines) + "\n"
