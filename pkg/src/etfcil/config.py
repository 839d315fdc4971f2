"""Experiment configuration: one JSON file, every field defaulted, unknown fields rejected."""

from __future__ import annotations

import copy
from pathlib import Path

from . import layer_peeled, serialize
from .data import SessionPlan
from .fscil_engine import ModelDims, TrainConfig
from .losses import parse_loss_kind

SCHEMA_VERSION = "1"

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "etf": {"dim": 16, "classes": 10, "seed": 0},
    "layer_peeled": {
        "dim": 16,
        "sessions": [{"classes": 6, "samples_per_class": 4}],
        "loss": "dr",
        # null means: resolve per loss (dr: 5e4 lr / 5000 steps, ce: 1.0 / 50000)
        "steps": None,
        "lr": None,
        "seed": 0,
        "etf_seed": 0,
    },
    "fscil": {
        "plan": {
            "input_dim": 20,
            "base_classes": 6,
            "incremental_sessions": 2,
            "ways": 2,
            "shots": 5,
            "base_train_per_class": 50,
            "test_per_class": 25,
            "seed": 0,
        },
        "data": {"r_mean": 6.0, "sigma_noise": 1.0},
        "model": {"hidden": 64, "feature_mid": 32, "hidden_g": 64, "feature_dim": 16},
        "train": {
            "epochs_base": 200,
            "iters_incremental": 150,
            "batch_base": 32,
            "batch_incremental": 10,
            "lr_base": 0.3,
            "lr_incremental": 0.02,
            "momentum": 0.9,
            "loss": "dr",
            "ce_scale": 16.0,
            "classifier_mode": "etf",
            "seed": 0,
            "normalize_ce_features": True,
            "freeze_old_prototypes": False,
        },
        "ablation": {"seeds": [0, 1, 2, 3, 4]},
        "etf_seed": 0,
    },
    "metrics": {"scope": "accumulate", "split": "test", "use_intermediate": False},
}


def merge_with_defaults(given: dict, defaults: dict, path: str = "") -> dict:
    """Recursively fill defaults; any key absent from the schema is an error."""
    merged = {}
    for key, default in defaults.items():
        here = f"{path}.{key}" if path else key
        if key not in given:
            merged[key] = copy.deepcopy(default)
        elif isinstance(default, dict) and isinstance(given[key], dict):
            merged[key] = merge_with_defaults(given[key], default, here)
        else:
            merged[key] = copy.deepcopy(given[key])
    unknown = set(given) - set(defaults)
    if unknown:
        where = path or "top level"
        raise ValueError(f"unknown config field(s) {sorted(unknown)} at {where}")
    return merged


def load_experiment_config(path) -> dict:
    """Full experiment config with defaults applied and version checked."""
    raw = serialize.read_json(path)
    cfg = merge_with_defaults(raw, DEFAULTS)
    if cfg["version"] != SCHEMA_VERSION:
        raise ValueError(
            f"config version {cfg['version']!r} unsupported (this build reads {SCHEMA_VERSION!r})"
        )
    return cfg


def load_section(path, section: str) -> dict:
    """Section config from either a full experiment file or a bare section object."""
    raw = serialize.read_json(Path(path))
    if section in raw:
        return load_experiment_config(path)[section]
    if "version" in raw and set(raw) <= set(DEFAULTS):
        return load_experiment_config(path)[section]
    cfg = merge_with_defaults(raw, DEFAULTS[section], section)
    return cfg


def layer_peeled_problem(cfg: dict):
    """(problem, steps, lr, seed) from a layer_peeled section."""
    from .etf_geometry import make_etf

    kind = parse_loss_kind(cfg["loss"], default_ce_scale=1.0)
    sessions = tuple(
        layer_peeled.session_spec(int(s["classes"]), s["samples_per_class"])
        for s in cfg["sessions"]
    )
    total = sum(s.num_classes for s in sessions)
    protos = make_etf(int(cfg["dim"]), total, int(cfg["etf_seed"]))
    problem = layer_peeled.LayerPeeledProblem(
        dim=int(cfg["dim"]), sessions=sessions, protos=protos, loss=kind
    )
    steps = int(cfg["steps"]) if cfg["steps"] is not None else layer_peeled.default_steps(kind)
    lr = float(cfg["lr"]) if cfg["lr"] is not None else layer_peeled.default_lr(kind)
    return problem, steps, lr, int(cfg["seed"])


def session_plan(cfg: dict) -> SessionPlan:
    return SessionPlan(
        input_dim=int(cfg["input_dim"]),
        base_classes=int(cfg["base_classes"]),
        incremental_sessions=int(cfg["incremental_sessions"]),
        ways=int(cfg["ways"]),
        shots=int(cfg["shots"]),
        base_train_per_class=int(cfg["base_train_per_class"]),
        test_per_class=int(cfg["test_per_class"]),
        seed=int(cfg["seed"]),
    )


def model_dims(cfg: dict, input_dim: int) -> ModelDims:
    return ModelDims(
        input_dim=input_dim,
        hidden=int(cfg["hidden"]),
        feature_mid=int(cfg["feature_mid"]),
        hidden_g=int(cfg["hidden_g"]),
        feature_dim=int(cfg["feature_dim"]),
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs_base=int(cfg["epochs_base"]),
        iters_incremental=int(cfg["iters_incremental"]),
        batch_base=int(cfg["batch_base"]),
        batch_incremental=int(cfg["batch_incremental"]),
        lr_base=float(cfg["lr_base"]),
        lr_incremental=float(cfg["lr_incremental"]),
        momentum=float(cfg["momentum"]),
        loss=parse_loss_kind(cfg["loss"], default_ce_scale=float(cfg["ce_scale"])),
        classifier_mode=str(cfg["classifier_mode"]),
        seed=int(cfg["seed"]),
        normalize_ce_features=bool(cfg["normalize_ce_features"]),
        freeze_old_prototypes=bool(cfg["freeze_old_prototypes"]),
    )
