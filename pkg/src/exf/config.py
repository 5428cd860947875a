"""Experiment configuration: JSON schema, validation, and conversion to run objects."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .data import AugmentConfig, generate_clusters, load_dataset, split_by_class, split_by_sample
from .errors import ConfigError, ExfError
from .losses import LossConfig
from .transfer import MODES, TRANSFER_LOSSES, OptimConfig, TransferConfig

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}
_dims = {"type": "array", "items": _count, "minItems": 2}

_augment = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "noise_std": _nonneg,
        "feature_dropout_prob": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "views": _count,
    },
}

_optim_props = {
    "lr": _pos,
    "weight_decay": _nonneg,
    "warmup_epochs": {"type": "integer", "minimum": 0},
    "min_lr": _nonneg,
    "batch_size": {"type": "integer", "minimum": 3},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "exf experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "source", "output"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "deterministic": {"type": "boolean"},
        "dataset": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "generate"},
                        "classes": {"type": "integer", "minimum": 2},
                        "per_class": _count,
                        "dim": _count,
                        "separation": _pos,
                        "noise": _nonneg,
                        "split": {"enum": ["class", "sample"]},
                        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "path"],
                    "properties": {
                        "kind": {"const": "load"},
                        "path": {"type": "string"},
                        "format": {"enum": ["csv", "bin"]},
                        "split": {"enum": ["class", "sample"]},
                        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    },
                },
            ]
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dims"],
            "properties": {
                "kind": {"enum": ["embedding", "classifier"]},
                "dims": _dims,
                "epochs": {"type": "integer", "minimum": 0},
                "delta": _pos,
                "checkpoint": {"type": "string"},
                "augment": _augment,
                **_optim_props,
            },
        },
        "transfer": {
            "type": "object",
            "additionalProperties": False,
            "required": ["target_dims"],
            "properties": {
                "mode": {"enum": list(MODES)},
                "loss": {"enum": list(TRANSFER_LOSSES)},
                "target_dims": _dims,
                "epochs": {"type": "integer", "minimum": 0},
                "delta": _pos,
                "sigma": _pos,
                "alpha": _pos,
                "beta": _pos,
                "temperature": _pos,
                "lambda_hkd": _nonneg,
                "lambda_rc": _nonneg,
                "augment": _augment,
                **_optim_props,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma": {"type": "array", "items": _pos, "minItems": 1},
                "delta": {"type": "array", "items": _pos, "minItems": 1},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_values": {"type": "array", "items": _count, "minItems": 1},
                "pair_top": _count,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dir"],
            "properties": {"dir": {"type": "string"}},
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "deterministic": True,
    "dataset": {
        "classes": 8, "per_class": 32, "dim": 16, "separation": 4.0, "noise": 0.8,
        "split": "class", "train_fraction": 0.5,
    },
    "source": {
        "kind": "embedding", "epochs": 40, "delta": 1.0, "lr": 1e-3, "weight_decay": 1e-4,
        "warmup_epochs": 0, "min_lr": 0.0, "batch_size": 32,
        "augment": {"noise_std": 0.0, "feature_dropout_prob": 0.0, "views": 1},
    },
    "transfer": {
        "mode": "self", "loss": "relaxed_contrastive", "epochs": 60, "delta": 1.0, "sigma": 1.0,
        "alpha": 1.0, "beta": 4.0, "temperature": 4.0, "lambda_hkd": 1.0, "lambda_rc": 1.0,
        "lr": 3e-3, "weight_decay": 1e-4, "warmup_epochs": 0, "min_lr": 0.0, "batch_size": 32,
        "augment": {"noise_std": 0.1, "feature_dropout_prob": 0.0, "views": 2},
    },
    "eval": {"k_values": [1, 2, 4, 8], "pair_top": 5},
}


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def validate(raw: dict) -> dict:
    """Check ``raw`` against :data:`SCHEMA` and fill defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = _merge({k: v for k, v in DEFAULTS.items()}, raw)
    if raw["dataset"]["kind"] == "load":
        for key in ("classes", "per_class", "dim", "separation", "noise"):
            cfg["dataset"].pop(key, None)
    return cfg


def load(path, base_dir=None) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    cfg = validate(raw)
    cfg["_base_dir"] = str(base_dir or path.parent)
    return cfg


def resolve(cfg, rel) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else Path(cfg.get("_base_dir", ".")) / p


def build_dataset(cfg):
    """Returns ``(train, test)`` per the dataset section."""
    ds_cfg = cfg["dataset"]
    seed = cfg["seed"]
    if ds_cfg["kind"] == "generate":
        ds = generate_clusters(
            ds_cfg["classes"], ds_cfg["per_class"], ds_cfg["dim"], ds_cfg["separation"],
            ds_cfg["noise"], seed,
        )
    else:
        path = resolve(cfg, ds_cfg["path"])
        if not path.exists():
            raise ConfigError(f"dataset file not found: {path}")
        ds = load_dataset(path, ds_cfg.get("format"))
    split = split_by_class if ds_cfg["split"] == "class" else split_by_sample
    return split(ds, ds_cfg["train_fraction"], seed)


def _augment(section):
    return AugmentConfig(**section)


def optim_config(section) -> OptimConfig:
    return OptimConfig(
        lr=section["lr"], weight_decay=section["weight_decay"],
        warmup_epochs=section["warmup_epochs"], min_lr=section["min_lr"],
    )


def source_augment(cfg) -> AugmentConfig:
    return _augment(cfg["source"]["augment"])


def transfer_config(cfg, sigma=None, delta=None) -> TransferConfig:
    t = cfg["transfer"]
    try:
        loss_cfg = LossConfig(
            delta=t["delta"] if delta is None else delta,
            sigma=t["sigma"] if sigma is None else sigma,
            alpha=t["alpha"], beta=t["beta"], temperature=t["temperature"],
        )
        tc = TransferConfig(
            mode=t["mode"], loss=t["loss"], loss_cfg=loss_cfg,
            source_dims=tuple(cfg["source"]["dims"]), target_dims=tuple(t["target_dims"]),
            epochs=t["epochs"], batch_size=t["batch_size"], seed=cfg["seed"],
            optim=optim_config(t), augment=_augment(t["augment"]),
            lambda_hkd=t["lambda_hkd"], lambda_rc=t["lambda_rc"],
        )
    except ExfError as exc:
        raise ConfigError(str(exc)) from None
    if tc.mode != "classifier_distill":
        tc.validate()
    return tc
