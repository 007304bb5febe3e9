"""Routing schemes, failout mask sampling, and the gated graph forward pass.

Four schemes share one model:

- vanilla: simple hyperconnections only; skips never carry traffic.
- static-skip: skips always active, additive joins, trained without failout.
- gated-skip: skips carry traffic only while a node they bypass is down;
  trained with failout so the detour weights are useful when needed.
- additive-skip: skips always active (additive joins) and trained with failout.

A node that is down, or alive with no incoming data, emits Absent (None).
An Absent prediction at the cloud means no information path survived and the
caller falls back to chance-level guessing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import nn
from .errors import ConfigError, DimensionError, ValidationError
from .topology import (
    INPUT, SIMPLE, SKIP, AliveMask, DistributedModel, FailureSetting,
    Hyperconnection, all_alive,
)


class Scheme(str, Enum):
    VANILLA = "vanilla"
    STATIC_SKIP = "static-skip"
    GATED_SKIP = "gated-skip"
    ADDITIVE_SKIP = "additive-skip"

    @property
    def uses_skips(self) -> bool:
        return self is not Scheme.VANILLA

    @property
    def skips_always_on(self) -> bool:
        return self in (Scheme.STATIC_SKIP, Scheme.ADDITIVE_SKIP)

    @property
    def trains_with_failout(self) -> bool:
        return self in (Scheme.GATED_SKIP, Scheme.ADDITIVE_SKIP)


def parse_scheme(value: str) -> Scheme:
    try:
        return Scheme(value)
    except ValueError:
        raise ConfigError(
            f"scheme: unknown value {value!r}; one of {[s.value for s in Scheme]}") from None


# --- failout ------------------------------------------------------------------

FAILOUT_OFF = "off"
FAILOUT_FIXED = "fixed"
FAILOUT_MATCH = "match-failure"


@dataclass(frozen=True)
class FailoutConfig:
    """Training-time node-drop policy. One fresh mask is drawn per batch."""

    mode: str = FAILOUT_FIXED
    rate: float = 0.1
    setting: FailureSetting | None = None

    def __post_init__(self):
        if self.mode not in (FAILOUT_OFF, FAILOUT_FIXED, FAILOUT_MATCH):
            raise ConfigError(f"failout.mode: unknown value {self.mode!r}")
        if self.mode == FAILOUT_FIXED and not (0.0 <= self.rate <= 1.0):
            raise ConfigError(f"failout.rate: {self.rate} outside [0, 1]")
        if self.mode == FAILOUT_MATCH and self.setting is None:
            raise ConfigError("failout.setting: required for match-failure mode")

    @property
    def enabled(self) -> bool:
        return self.mode != FAILOUT_OFF


def sample_failout_mask(config: FailoutConfig, model: DistributedModel,
                        rng: np.random.Generator) -> AliveMask:
    """Draw one alive mask: each compute node survives with probability 1-f.

    The cloud is forced alive; INPUT is never part of the mask.
    """
    if not config.enabled:
        raise ConfigError("failout is off; no mask to sample")
    if config.mode == FAILOUT_FIXED:
        rates = {n.id: config.rate for n in model.nodes}
    else:
        rates = config.setting.prob_by_node(model)  # type: ignore[union-attr]
    bits = []
    for node in model.nodes:
        if node.is_cloud:
            bits.append(True)
            continue
        bits.append(bool(rng.random() >= rates[node.id]))
    return AliveMask(bits=tuple(bits), origin="failout-draw")


# --- payload combination --------------------------------------------------------

Payload = Optional[np.ndarray]


def combine_inputs(primary: Payload, detour: Payload, scheme: Scheme) -> Payload:
    """Join one branch's simple payload with its detour payload.

    Selective schemes (vanilla, gated-skip) take the primary when present and
    fall back to the detour; additive schemes sum, treating Absent as zero.
    Absent in, Absent out only when every input is Absent.
    """
    if primary is not None and detour is not None and primary.shape != detour.shape:
        raise DimensionError(
            f"payload shapes differ at join: {primary.shape} vs {detour.shape}")
    if scheme.skips_always_on:
        if primary is None:
            return detour
        if detour is None:
            return primary
        return primary + detour
    return primary if primary is not None else detour


def skip_active(edge: Hyperconnection, mask: AliveMask, scheme: Scheme) -> bool:
    """A skip carries traffic per scheme; simple edges always may."""
    if edge.kind == SIMPLE:
        return True
    if scheme is Scheme.VANILLA:
        return False
    if scheme.skips_always_on:
        return True
    # gated: only while the simple path it shadows is broken
    return any(not mask.alive(b) for b in edge.bypassed)


@dataclass
class NodeTrace:
    """Which edges composed a node's input (for backprop and bandwidth)."""

    node_id: int
    used_edges: list[int]
    x: Payload
    y: Payload
    caches: list[nn.LayerCache] | None = None


@dataclass
class GraphRun:
    logits: Payload
    traces: dict[int, NodeTrace]
    payloads: dict[int, Payload]


def _edge_payload(model: DistributedModel, edge: Hyperconnection,
                  payloads: dict[int, Payload]) -> Payload:
    y = payloads.get(edge.src)
    if y is None:
        return None
    w = model.effective_weight(edge)
    if edge.projection is not None:
        return w * (y @ edge.projection.T)
    return w * y if w != 1.0 else y


def contributing_edges(model: DistributedModel, node_id: int, mask: AliveMask,
                       scheme: Scheme, payloads: dict) -> list[Hyperconnection]:
    """Edges whose payloads compose this node's input under the scheme.

    payloads maps source id -> payload-or-None; only presence is inspected,
    so bandwidth accounting can pass sentinels instead of arrays.
    """
    incoming = model.incoming(node_id)
    simples = [e for e in incoming if e.kind == SIMPLE]
    skips = [e for e in incoming if e.kind == SKIP and skip_active(e, mask, scheme)]

    def has_data(e: Hyperconnection) -> bool:
        return payloads.get(e.src) is not None

    if scheme.skips_always_on:
        return [e for e in simples + skips if has_data(e)]

    # Selective join: each simple-parent branch takes its own payload when
    # present, else the active skips that bypass that parent.
    used: list[Hyperconnection] = []
    seen: set[int] = set()
    for se in simples:
        if has_data(se):
            used.append(se)
            continue
        for ke in skips:
            if se.src in ke.bypassed and has_data(ke) and ke.id not in seen:
                used.append(ke)
                seen.add(ke.id)
    # An active skip not shadowing any direct parent still provides a branch.
    parent_ids = {se.src for se in simples}
    for ke in skips:
        if ke.id not in seen and has_data(ke) and not (set(ke.bypassed) & parent_ids):
            used.append(ke)
            seen.add(ke.id)
    return used


def run_graph(model: DistributedModel, mask: AliveMask, scheme: Scheme,
              x: np.ndarray, collect_cache: bool = False) -> GraphRun:
    """Evaluate every node in topological order under an alive mask.

    Dead nodes emit Absent; alive nodes with no present input emit Absent.
    The result's logits are Absent exactly when no information path reached
    the cloud.
    """
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"input shape {x.shape} incompatible with input_dim {model.input_dim}")
    if len(mask.bits) != model.n_nodes:
        raise ValidationError(f"mask covers {len(mask.bits)} nodes, model has {model.n_nodes}")
    x = np.ascontiguousarray(x, dtype=model.dtype)

    payloads: dict[int, Payload] = {INPUT: x}
    traces: dict[int, NodeTrace] = {}
    for node in sorted(model.nodes, key=lambda n: (n.depth, n.id)):
        if not mask.alive(node.id):
            payloads[node.id] = None
            continue
        used = contributing_edges(model, node.id, mask, scheme, payloads)
        xin: Payload = None
        for e in used:
            p = _edge_payload(model, e, payloads)
            xin = p if xin is None else xin + p
        if xin is None:
            payloads[node.id] = None
            continue
        if collect_cache:
            y, caches = xin, []
            for layer in model.stacks[node.id]:
                y, cache = nn.dense_forward_cached(layer, y)
                caches.append(cache)
            traces[node.id] = NodeTrace(node.id, [e.id for e in used], xin, y, caches)
        else:
            y = xin
            for layer in model.stacks[node.id]:
                y = nn.dense_forward(layer, y)
            traces[node.id] = NodeTrace(node.id, [e.id for e in used], xin, y)
        payloads[node.id] = y

    return GraphRun(logits=payloads.get(model.cloud_id), traces=traces, payloads=payloads)


def gated_forward(model: DistributedModel, mask: AliveMask, scheme: Scheme,
                  x: np.ndarray) -> Payload:
    """Class scores [B, C], or Absent (None) when no path survived."""
    return run_graph(model, mask, scheme, x).logits


def predict(model: DistributedModel, mask: AliveMask, scheme: Scheme,
            x: np.ndarray) -> Optional[np.ndarray]:
    logits = gated_forward(model, mask, scheme, x)
    return None if logits is None else np.argmax(logits, axis=1)


# --- hyperconnection weight schemes --------------------------------------------

WEIGHT_ONE = "one"
WEIGHT_RELIABILITY = "reliability"
WEIGHT_RELATIVE = "relative-reliability"
WEIGHT_UNIFORM = "uniform-random"


@dataclass(frozen=True)
class HyperWeightScheme:
    """Fixed scalar weights for hyperconnections; assigned once, never trained."""

    kind: str = WEIGHT_ONE
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in (WEIGHT_ONE, WEIGHT_RELIABILITY, WEIGHT_RELATIVE, WEIGHT_UNIFORM):
            raise ConfigError(f"hyper_weights.kind: unknown value {self.kind!r}")
        if self.low > self.high:
            raise ConfigError(f"hyper_weights: low {self.low} > high {self.high}")


def assign_hyperconnection_weights(model: DistributedModel, scheme: HyperWeightScheme,
                                   setting: FailureSetting | None = None,
                                   rng: np.random.Generator | None = None) -> DistributedModel:
    """Set the scalar carried by every hyperconnection (simple and skip).

    Reliability heuristics need a failure setting to read r = 1 - p from;
    INPUT counts as perfectly reliable.
    """
    if scheme.kind == WEIGHT_ONE:
        for e in model.edges:
            e.weight = 1.0
        return model
    if scheme.kind == WEIGHT_UNIFORM:
        if rng is None:
            raise ConfigError("hyper_weights: uniform-random needs an rng")
        for e in model.edges:
            e.weight = float(rng.uniform(scheme.low, scheme.high))
        return model
    if setting is None:
        raise ConfigError(f"hyper_weights: {scheme.kind} needs a failure setting")
    survival = setting.survival_by_node(model)
    survival[INPUT] = 1.0
    if scheme.kind == WEIGHT_RELIABILITY:
        for e in model.edges:
            e.weight = survival[e.src]
        return model
    # relative reliability: normalize over each destination's incoming sources
    for node in model.nodes:
        incoming = model.incoming(node.id)
        total = sum(survival[e.src] for e in incoming)
        for e in incoming:
            e.weight = survival[e.src] / total if total > 0 else 0.0
    return model


def set_inference_scaling(model: DistributedModel, setting: FailureSetting,
                          on: bool) -> DistributedModel:
    """Optionally multiply each edge weight by its source's survival probability.

    Off by default: trained hyperconnection weights are used verbatim at
    inference, unlike standard dropout's survival scaling.
    """
    if not on:
        model.inference_scaling = None
        return model
    survival = setting.survival_by_node(model)
    survival[INPUT] = 1.0
    model.inference_scaling = survival
    return model
