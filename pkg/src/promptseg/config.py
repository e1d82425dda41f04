"""TOML configuration: schema mirroring TrainConfig, plus dotted-key overrides.

Sections: [run], [model], [train], [freeze], [loss], [augment], [data],
[data.synthetic], [serve]. Unknown keys anywhere are configuration errors.
Overrides use dotted paths ("loss.gamma=2"), applied after file parsing;
values are parsed as TOML scalars.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import AugmentationPolicy
from .errors import ConfigurationError
from .losses import LossWeights
from .peft import FreezePolicy
from .training import SyntheticDataConfig, TrainConfig

_SCHEMA = {
    "run": {"seed", "geometry", "out_dir", "precision"},
    "model": {"num_classes", "tokens_per_class"},
    "train": {"max_steps", "batch_size", "lr_ppn", "lr_decoder", "weight_decay",
              "checkpoint_every", "manual_prompt_sim"},
    "freeze": {"mode", "lora_rank", "lora_alpha"},
    "loss": {"lambda1", "lambda2", "lambda3", "gamma", "alpha"},
    "augment": {"enabled", "p_flip_h", "p_flip_v", "p_translate", "p_rotate",
                "p_crop", "translate_frac", "rotate_range", "crop_scale"},
    "data": {"root", "synthetic"},
    "data.synthetic": {"seed", "count", "empty_fraction", "train_count", "test_count"},
    "serve": {"port", "checkpoint", "session_ttl_seconds"},
}


@dataclass
class ServeConfig:
    port: int = 8000
    checkpoint: str | None = None
    session_ttl_seconds: float = 3600.0


def _check_keys(section: str, table: dict) -> None:
    allowed = _SCHEMA.get(section)
    if allowed is None:
        raise ConfigurationError(f"unknown config section [{section}]")
    for key in table:
        if isinstance(table[key], dict):
            _check_keys(f"{section}.{key}", table[key])
        elif key not in allowed:
            raise ConfigurationError(f"unknown config key '{section}.{key}'")


def parse_override(text: str) -> tuple[list[str], object]:
    """'loss.gamma=2.5' -> (['loss', 'gamma'], 2.5) with TOML value parsing."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    path, raw = text.split("=", 1)
    path = path.strip()
    if not path:
        raise ConfigurationError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return path.split("."), value


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    for text in overrides:
        path, value = parse_override(text)
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {text!r} traverses a scalar")
        node[path[-1]] = value
    return tree


def config_from_dict(tree: dict) -> tuple[TrainConfig, ServeConfig]:
    for section, table in tree.items():
        if not isinstance(table, dict):
            raise ConfigurationError(f"top-level config key '{section}' must be a section")
        _check_keys(section, table)

    run = tree.get("run", {})
    model = tree.get("model", {})
    tr = tree.get("train", {})
    freeze = tree.get("freeze", {})
    loss = tree.get("loss", {})
    aug = dict(tree.get("augment", {}))
    data = tree.get("data", {})
    synth = data.get("synthetic", {})
    serve = tree.get("serve", {})

    enabled = aug.pop("enabled", True)
    if "rotate_range" in aug:
        aug["rotate_range"] = tuple(aug["rotate_range"])
    if "crop_scale" in aug:
        aug["crop_scale"] = tuple(aug["crop_scale"])

    config = TrainConfig(
        seed=int(run.get("seed", 0)),
        geometry=run.get("geometry", "desk"),
        out_dir=run.get("out_dir", "runs/default"),
        precision=run.get("precision", "float32"),
        num_classes=int(model.get("num_classes", 1)),
        tokens_per_class=int(model.get("tokens_per_class", 8)),
        max_steps=int(tr.get("max_steps", 2000)),
        batch_size=int(tr.get("batch_size", 4)),
        lr_ppn=float(tr.get("lr_ppn", 1e-4)),
        lr_decoder=float(tr.get("lr_decoder", 1e-5)),
        weight_decay=float(tr.get("weight_decay", 0.1)),
        checkpoint_every=int(tr.get("checkpoint_every", 500)),
        manual_prompt_sim=tr.get("manual_prompt_sim", "auto"),
        data_root=data.get("root"),
        synthetic=SyntheticDataConfig(**synth),
        freeze=FreezePolicy(**freeze),
        loss=LossWeights(**loss),
        augment=AugmentationPolicy(**aug),
        augment_enabled=bool(enabled),
    )
    serve_config = ServeConfig(
        port=int(serve.get("port", 8000)),
        checkpoint=serve.get("checkpoint"),
        session_ttl_seconds=float(serve.get("session_ttl_seconds", 3600.0)),
    )
    return config, serve_config


def load_config(path: str | Path, overrides: list[str] | None = None
                ) -> tuple[TrainConfig, ServeConfig]:
    with open(path, "rb") as fh:
        try:
            tree = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"cannot parse {path}: {e}") from e
    if overrides:
        apply_overrides(tree, overrides)
    return config_from_dict(tree)
