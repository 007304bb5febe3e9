"""Model artifacts and report files.

Both are canonical JSON (sorted keys, fixed indent) so reruns diff cleanly
and byte-identical reproducibility is testable. Arrays are embedded as
base64 of their raw little-endian bytes.
"""

from __future__ import annotations

import base64
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ArtifactError
from .topology import DistributedModel, PartitionPlan, build_model

SCHEMA_MAJOR = 1
SCHEMA_VERSION = "1.0"
TOOL_VERSION = "0.1.0"


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder == ">":
        a = a.astype(a.dtype.newbyteorder("<"))
    return {
        "shape": list(a.shape),
        "dtype": a.dtype.name,
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(d["data"])
        arr = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"corrupt array record: {exc}") from exc
    return arr.copy()


def save_model(model: DistributedModel, path: str | Path, scheme: str,
               extra: dict | None = None) -> None:
    arrays = {}
    for slot, arr in model.param_slots().items():
        arrays["/".join(str(p) for p in slot)] = _encode_array(arr)
    doc = {
        "format": "detournet-model",
        "schema_major": SCHEMA_MAJOR,
        "tool_version": TOOL_VERSION,
        "plan": model.plan.to_dict(),
        "scheme": scheme,
        "dtype": np.dtype(model.dtype).name,
        "edge_weights": [e.weight for e in model.edges],
        "arrays": arrays,
        "extra": extra or {},
    }
    Path(path).write_text(canonical_json(doc))


def load_model(path: str | Path) -> tuple[DistributedModel, dict]:
    """Rebuild a model from its artifact; returns (model, metadata)."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ArtifactError(f"cannot read model artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"model artifact {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != "detournet-model":
        raise ArtifactError(f"{path} is not a model artifact")
    if doc.get("schema_major") != SCHEMA_MAJOR:
        raise ArtifactError(
            f"unsupported model schema major {doc.get('schema_major')}, "
            f"this build reads {SCHEMA_MAJOR}")
    try:
        plan = PartitionPlan.from_dict(doc["plan"])
        dtype = np.dtype(doc["dtype"]).type
        model = build_model(plan, dtype=dtype)
        slots = model.param_slots()
        for key, record in doc["arrays"].items():
            parts = key.split("/")
            slot = (parts[0], int(parts[1]), int(parts[2]), parts[3]) \
                if parts[0] == "node" else (parts[0], int(parts[1]), parts[2])
            if slot not in slots:
                raise ArtifactError(f"unknown parameter slot {key}")
            arr = _decode_array(record)
            if arr.shape != slots[slot].shape:
                raise ArtifactError(
                    f"slot {key}: shape {arr.shape} != expected {slots[slot].shape}")
            slots[slot][...] = arr.astype(dtype)
        weights = doc["edge_weights"]
        if len(weights) != len(model.edges):
            raise ArtifactError(
                f"{len(weights)} edge weights for {len(model.edges)} edges")
        for e, w in zip(model.edges, weights):
            e.weight = float(w)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"corrupt model artifact {path}: {exc}") from exc
    meta = {"scheme": doc.get("scheme"), "extra": doc.get("extra", {})}
    return model, meta


def write_report(path: str | Path, kind: str, config: dict, results: dict,
                 seed: int, timing_s: float | None = None) -> dict:
    """Emit the common report schema; `results` is the reproducible payload."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": config,
        "results": results,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "tool_version": TOOL_VERSION,
    }
    if timing_s is not None:
        doc["timing_s"] = timing_s
    Path(path).write_text(canonical_json(doc))
    return doc


def load_report(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read report {path}: {exc}") from exc
    version = str(doc.get("schema_version", ""))
    major = version.split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise ArtifactError(
            f"report schema {version!r} unsupported; this build reads major "
            f"{SCHEMA_VERSION.split('.', 1)[0]}")
    return doc
