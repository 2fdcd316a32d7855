"""Run configuration: flat dotted keys with documented defaults.

Values come from a TOML file (nested tables are flattened to dotted keys)
and can be overridden by CLI flags; flags win. Unknown keys are rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# dotted key -> (field name, type tag, default, allowed values or None)
SCHEMA: dict[str, tuple[str, str, object, tuple | None]] = {
    "data.path": ("data_path", "str", "", None),
    "data.format": ("data_format", "str", "3col", ("3col", "4col")),
    "data.gap_seconds": ("data_gap_seconds", "int", 28800, None),
    "data.segmentation": ("data_segmentation", "str", "all-prefixes", ("all-prefixes", "last-only")),
    "graph.S": ("graph_s", "int", 8, None),
    "graph.K": ("graph_k", "int", 10, None),
    "graph.self_loops": ("graph_self_loops", "bool", True, None),
    "model.d": ("model_d", "int", 128, None),
    "model.layers": ("model_layers", "int", 2, None),
    "train.lr": ("train_lr", "float", 0.001, None),
    "train.batch": ("train_batch", "int", 512, None),
    "train.epochs": ("train_epochs", "int", 30, None),
    "train.seed": ("train_seed", "int", 42, None),
    "train.val_fraction": ("train_val_fraction", "float", 0.1, None),
    "encoder.Lmax": ("encoder_lmax", "int", 20, None),
    "loss.mode": ("loss_mode", "str", "literal", ("literal", "categorical")),
    "eval.ks": ("eval_ks", "intlist", (5, 10), None),
    "eval.per_user": ("eval_per_user", "bool", False, None),
}

_POSITIVE_INT_KEYS = (
    "data.gap_seconds", "graph.S", "graph.K", "model.d",
    "train.batch", "train.epochs", "encoder.Lmax",
)


@dataclass
class Config:
    data_path: str = ""
    data_format: str = "3col"
    data_gap_seconds: int = 28800
    data_segmentation: str = "all-prefixes"
    graph_s: int = 8
    graph_k: int = 10
    graph_self_loops: bool = True
    model_d: int = 128
    model_layers: int = 2
    train_lr: float = 0.001
    train_batch: int = 512
    train_epochs: int = 30
    train_seed: int = 42
    train_val_fraction: float = 0.1
    encoder_lmax: int = 20
    loss_mode: str = "literal"
    eval_ks: tuple = (5, 10)
    eval_per_user: bool = False

    def to_dict(self) -> dict:
        """Dotted-key snapshot (stored in checkpoints, echoed to disk)."""
        out = {}
        for key, (attr, _t, _d, _allowed) in SCHEMA.items():
            value = getattr(self, attr)
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    def resolved_text(self) -> str:
        lines = []
        for key in sorted(SCHEMA):
            value = self.to_dict()[key]
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(key: str, type_tag: str, raw):
    try:
        if type_tag == "int":
            if isinstance(raw, bool):
                raise ValueError("bool is not an int")
            return int(raw)
        if type_tag == "float":
            return float(raw)
        if type_tag == "bool":
            if isinstance(raw, bool):
                return raw
            if isinstance(raw, str):
                if raw.lower() in ("true", "1", "yes"):
                    return True
                if raw.lower() in ("false", "0", "no"):
                    return False
            raise ValueError(f"not a bool: {raw!r}")
        if type_tag == "str":
            return str(raw)
        if type_tag == "intlist":
            if isinstance(raw, str):
                raw = [p for p in raw.split(",") if p]
            return tuple(int(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key}: bad value {raw!r} ({exc})") from exc
    raise ConfigError(f"config key {key}: unknown type {type_tag}")


def _flatten(table: dict, prefix: str = "") -> dict:
    flat = {}
    for name, value in table.items():
        key = f"{prefix}{name}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{key}."))
        else:
            flat[key] = value
    return flat


def validate(config: Config):
    snapshot = config.to_dict()
    for key in _POSITIVE_INT_KEYS:
        if snapshot[key] < 1:
            raise ConfigError(f"config key {key} must be >= 1, got {snapshot[key]}")
    if config.model_layers < 0:
        raise ConfigError("model.layers must be >= 0")
    if config.train_lr <= 0:
        raise ConfigError("train.lr must be positive")
    if not 0.0 <= config.train_val_fraction < 1.0:
        raise ConfigError("train.val_fraction must be in [0, 1)")
    if not config.eval_ks or any(k < 1 for k in config.eval_ks):
        raise ConfigError("eval.ks must be positive integers")
    for key, (attr, _t, _d, allowed) in SCHEMA.items():
        if allowed is not None and getattr(config, attr) not in allowed:
            raise ConfigError(
                f"config key {key}: {getattr(config, attr)!r} not in {allowed}"
            )


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Build a validated Config from an optional TOML file plus overrides
    given as a {dotted key: raw value} mapping (flags win over the file)."""
    merged: dict[str, object] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                merged.update(_flatten(tomllib.load(fh)))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from exc
    merged.update(overrides or {})

    config = Config()
    for key, raw in merged.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        attr, type_tag, _default, _allowed = SCHEMA[key]
        setattr(config, attr, _coerce(key, type_tag, raw))
    validate(config)
    return config


def config_from_dict(snapshot: dict) -> Config:
    """Rebuild a Config from a checkpoint's stored dotted-key snapshot."""
    return load_config(overrides=snapshot)
