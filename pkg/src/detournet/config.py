"""Run configuration: parsing, validation, defaults, canonical echo.

Configs are nested JSON. Validation errors name the offending field with a
dotted path (e.g. "dataset.path") so the CLI's exit-2 messages are
actionable. Every resolver also produces a fully-defaulted echo dict;
re-running from an echo reproduces results bit-identically.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .datasets import Dataset, blob_arrays, generate_blobs, load_csv, normalize
from .errors import ConfigError
from .netsim import SimConfig
from .routing import FailoutConfig, HyperWeightScheme, Scheme, parse_scheme
from .topology import (
    DistributedModel, FailureSetting, PartitionPlan, failure_setting, get_plan,
    validate_plan,
)

TRAIN_DEFAULTS = {
    "scheme": "gated-skip",
    "failout": {"mode": "fixed", "rate": 0.1},
    "hyper_weights": {"kind": "one"},
    "failure_setting": "normal",
    "epochs": 10,
    "batch_size": 1024,
    "learning_rate": 0.001,
    "optimizer": "adam",
    "momentum": 0.9,
    "precision": 32,
    "seed": 0,
}

SIM_PRESETS = {
    # backbone-grade nodes: MTBF 3521 h, MTTR 71 h, second-scale detection
    "normal": {
        "mtbf_hours": 3521.0,
        "mttr_hours": 71.0,
        "heartbeat_interval_s": 1.0,
        "detection_timeout_intervals": 3,
        "request_rate_per_hour": 0.01,
        "horizon_hours": 2.0e6,
        "windows": 20,
    },
}


def load_config_file(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc


def resolve_plan(spec) -> PartitionPlan:
    if isinstance(spec, str):
        plan = get_plan(spec)
    elif isinstance(spec, dict):
        plan = PartitionPlan.from_dict(spec)
    else:
        raise ConfigError("plan: expected a preset name or an inline plan object")
    problems = validate_plan(plan)
    if problems:
        raise ConfigError("plan: " + "; ".join(problems))
    return plan


def resolve_setting(spec, node_count: int) -> FailureSetting:
    if isinstance(spec, str):
        return failure_setting(spec, node_count)
    if isinstance(spec, dict):
        probs = spec.get("probs")
        if not isinstance(probs, list):
            raise ConfigError("failure_setting.probs: required list (deepest-first)")
        return FailureSetting(name=str(spec.get("name", "custom")),
                              probs_deepest_first=tuple(float(p) for p in probs))
    raise ConfigError("failure_setting: expected a preset name or {name, probs}")


def echo_setting(spec) -> object:
    if isinstance(spec, str):
        return spec
    return {"name": str(spec.get("name", "custom")),
            "probs": [float(p) for p in spec.get("probs", [])]}


def resolve_failout(spec, node_count: int) -> FailoutConfig:
    if not isinstance(spec, dict):
        raise ConfigError("failout: expected an object with a 'mode' key")
    mode = spec.get("mode", "fixed")
    if mode == "off":
        return FailoutConfig(mode="off")
    if mode == "fixed":
        rate = spec.get("rate", 0.1)
        if not isinstance(rate, (int, float)) or not (0.0 <= rate <= 1.0):
            raise ConfigError(f"failout.rate: {rate!r} must be a number in [0, 1]")
        return FailoutConfig(mode="fixed", rate=float(rate))
    if mode == "match-failure":
        setting = resolve_setting(spec.get("setting", "normal"), node_count)
        return FailoutConfig(mode="match-failure", setting=setting)
    raise ConfigError(f"failout.mode: unknown value {mode!r}")


def echo_failout(spec) -> dict:
    mode = spec.get("mode", "fixed")
    if mode == "off":
        return {"mode": "off"}
    if mode == "fixed":
        return {"mode": "fixed", "rate": float(spec.get("rate", 0.1))}
    return {"mode": "match-failure", "setting": echo_setting(spec.get("setting", "normal"))}


def resolve_weight_scheme(spec) -> HyperWeightScheme:
    if not isinstance(spec, dict):
        raise ConfigError("hyper_weights: expected an object with a 'kind' key")
    kind = spec.get("kind", "one")
    if kind == "uniform-random":
        return HyperWeightScheme(kind=kind, low=float(spec.get("low", 0.0)),
                                 high=float(spec.get("high", 1.0)))
    return HyperWeightScheme(kind=kind)


def echo_weight_scheme(spec) -> dict:
    kind = spec.get("kind", "one")
    if kind == "uniform-random":
        return {"kind": kind, "low": float(spec.get("low", 0.0)),
                "high": float(spec.get("high", 1.0))}
    return {"kind": kind}


def echo_dataset_spec(spec, seed: int) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError("dataset: expected an object with a 'kind' key")
    kind = spec.get("kind")
    split = list(spec.get("split", (0.8, 0.1, 0.1)))
    if kind == "blobs":
        return {
            "kind": "blobs",
            "features": int(spec.get("features", 23)),
            "classes": int(spec.get("classes", 12)),
            "samples_per_class": int(spec.get("samples_per_class", 200)),
            "spread": float(spec.get("spread", 1.0)),
            "center_scale": float(spec.get("center_scale", 3.0)),
            "seed": int(spec.get("seed", seed)),
            "split": split,
            "normalize": bool(spec.get("normalize", False)),
        }
    if kind == "csv":
        if "path" not in spec:
            raise ConfigError("dataset.path: required for csv datasets")
        return {
            "kind": "csv",
            "path": str(spec["path"]),
            "label_column": str(spec.get("label_column", "label")),
            "drop_labels": list(spec.get("drop_labels") or []),
            "seed": int(spec.get("seed", seed)),
            "split": split,
        }
    raise ConfigError(f"dataset.kind: unknown value {kind!r} (blobs or csv)")


def resolve_dataset(spec, seed: int) -> Dataset:
    spec = echo_dataset_spec(spec, seed)
    split = tuple(spec["split"])
    if len(split) != 3:
        raise ConfigError("dataset.split: expected three fractions")
    if spec["kind"] == "blobs":
        data = generate_blobs(
            features=spec["features"], classes=spec["classes"],
            samples_per_class=spec["samples_per_class"], spread=spec["spread"],
            center_scale=spec["center_scale"], seed=spec["seed"], split=split)
        return normalize(data) if spec["normalize"] else data
    return load_csv(path=spec["path"], label_column=spec["label_column"],
                    drop_labels=spec["drop_labels"] or None, split=split,
                    seed=spec["seed"])


def resolve_train_config(raw: dict) -> dict:
    """Fill every default and validate; returns the canonical echo dict."""
    cfg = dict(TRAIN_DEFAULTS)
    cfg.update(raw)
    if "plan" not in cfg:
        raise ConfigError("plan: required")
    if "dataset" not in cfg:
        raise ConfigError("dataset: required")
    if not isinstance(cfg["seed"], int):
        raise ConfigError(f"seed: expected integer, got {cfg['seed']!r}")
    plan = resolve_plan(cfg["plan"])
    parse_scheme(str(cfg["scheme"]))
    resolve_failout(cfg["failout"], plan.node_count)
    resolve_weight_scheme(cfg["hyper_weights"])
    for field, lo in (("epochs", 1), ("batch_size", 1)):
        v = cfg[field]
        if not isinstance(v, int) or v < lo:
            raise ConfigError(f"{field}: expected integer >= {lo}, got {v!r}")
    lr = cfg["learning_rate"]
    if not isinstance(lr, (int, float)) or lr <= 0 or not math.isfinite(lr):
        raise ConfigError(f"learning_rate: {lr!r} must be a positive number")
    if cfg["optimizer"] not in ("adam", "sgd-momentum"):
        raise ConfigError(f"optimizer: unknown value {cfg['optimizer']!r}")
    if cfg["precision"] not in (32, 64):
        raise ConfigError(f"precision: {cfg['precision']!r} must be 32 or 64")

    echo = {
        "plan": plan.name if isinstance(cfg["plan"], str) else plan.to_dict(),
        "scheme": str(cfg["scheme"]),
        "failout": echo_failout(cfg["failout"]),
        "hyper_weights": echo_weight_scheme(cfg["hyper_weights"]),
        "failure_setting": echo_setting(cfg["failure_setting"]),
        "epochs": cfg["epochs"],
        "batch_size": cfg["batch_size"],
        "learning_rate": float(lr),
        "optimizer": cfg["optimizer"],
        "momentum": float(cfg["momentum"]),
        "precision": cfg["precision"],
        "seed": cfg["seed"],
        "dataset": echo_dataset_spec(cfg["dataset"], cfg["seed"]),
    }
    return echo


def resolve_sim_config(spec, model: DistributedModel, seed: int) -> SimConfig:
    if isinstance(spec, str):
        name = spec.removesuffix(".sim")
        if name not in SIM_PRESETS:
            raise ConfigError(
                f"sim: unknown preset {spec!r}; presets: {sorted(SIM_PRESETS)}")
        spec = dict(SIM_PRESETS[name])
    if not isinstance(spec, dict):
        raise ConfigError("sim: expected a preset name or an object")
    compute = [n.name for n in model.nodes if not n.is_cloud]

    def per_node(field: str) -> dict[str, float]:
        v = spec.get(field)
        if v is None:
            raise ConfigError(f"sim.{field}: required")
        if isinstance(v, dict):
            return {k: _parse_hours(field, val) for k, val in v.items()}
        return {name: _parse_hours(field, v) for name in compute}

    return SimConfig(
        mtbf_hours=per_node("mtbf_hours"),
        mttr_hours=per_node("mttr_hours"),
        heartbeat_interval_s=float(spec.get("heartbeat_interval_s", 1.0)),
        detection_timeout_intervals=int(spec.get("detection_timeout_intervals", 3)),
        request_rate_per_hour=float(spec.get("request_rate_per_hour", 0.0)),
        horizon_hours=float(spec.get("horizon_hours", 1000.0)),
        seed=int(spec.get("seed", seed)),
        windows=int(spec.get("windows", 20)),
    )


def echo_sim_config(config: SimConfig) -> dict:
    def enc(d):
        return {k: ("inf" if math.isinf(v) else v) for k, v in sorted(d.items())}
    return {
        "mtbf_hours": enc(config.mtbf_hours),
        "mttr_hours": enc(config.mttr_hours),
        "heartbeat_interval_s": config.heartbeat_interval_s,
        "detection_timeout_intervals": config.detection_timeout_intervals,
        "request_rate_per_hour": config.request_rate_per_hour,
        "horizon_hours": config.horizon_hours,
        "seed": config.seed,
        "windows": config.windows,
    }


def _parse_hours(field: str, v) -> float:
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"sim.{field}: expected a number or 'inf', got {v!r}")
    if not isinstance(v, (int, float)):
        raise ConfigError(f"sim.{field}: expected a number, got {v!r}")
    return float(v)
