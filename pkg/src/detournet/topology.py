"""Physical nodes, partition plans, hyperconnections, and reachability.

A model is a DAG of physical nodes ordered by depth. Depth 0 sits right
after the data source (INPUT, always available); the single deepest node is
the cloud and never fails. Simple hyperconnections link consecutive depths;
skip hyperconnections bypass one or more nodes and provide the detour used
when a bypassed node is down.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .errors import ValidationError

INPUT = -1  # virtual source id; always alive

SIMPLE = "simple"
SKIP = "skip"


@dataclass(frozen=True)
class PhysicalNode:
    id: int
    name: str
    depth: int
    layer_count: int
    is_cloud: bool = False


@dataclass(frozen=True)
class SkipSpec:
    """Skip edge request: src/dst node ids (src may be INPUT).

    bypassed defaults to every node strictly between the two depths; the
    branching presets narrow it to the one node the edge detours around.
    """

    src: int
    dst: int
    bypassed: tuple[int, ...] | None = None


@dataclass(frozen=True)
class PartitionPlan:
    """Layer counts per node plus skip placement.

    partition entries are hidden-layer counts, one per node ordered from the
    data source toward the cloud; a tuple entry places parallel nodes at the
    same depth (horizontally distributed stage).
    """

    name: str
    partition: tuple
    hidden_width: int
    input_dim: int
    classes: int
    skips: tuple[SkipSpec, ...] = ()

    def depth_groups(self) -> list[tuple[int, ...]]:
        groups = []
        for entry in self.partition:
            if isinstance(entry, (tuple, list)):
                groups.append(tuple(int(v) for v in entry))
            else:
                groups.append((int(entry),))
        return groups

    @property
    def node_count(self) -> int:
        return sum(len(g) for g in self.depth_groups())

    def to_dict(self) -> dict:
        skips = []
        for s in self.skips:
            if s.bypassed is None:
                skips.append([s.src, s.dst])
            else:
                skips.append([s.src, s.dst, list(s.bypassed)])
        partition = [list(e) if isinstance(e, (tuple, list)) else e for e in self.partition]
        return {
            "name": self.name,
            "partition": partition,
            "hidden_width": self.hidden_width,
            "input_dim": self.input_dim,
            "classes": self.classes,
            "skips": skips,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionPlan":
        try:
            partition = tuple(
                tuple(int(v) for v in e) if isinstance(e, (tuple, list)) else int(e)
                for e in d["partition"]
            )
            skips = []
            for s in d.get("skips", []):
                if len(s) == 2:
                    skips.append(SkipSpec(int(s[0]), int(s[1])))
                else:
                    skips.append(SkipSpec(int(s[0]), int(s[1]), tuple(int(b) for b in s[2])))
            return cls(
                name=str(d.get("name", "inline")),
                partition=partition,
                hidden_width=int(d["hidden_width"]),
                input_dim=int(d["input_dim"]),
                classes=int(d["classes"]),
                skips=tuple(skips),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed plan: {exc}") from exc


@dataclass(frozen=True)
class AliveMask:
    """Per-node alive bits, index = node id. Cloud and INPUT are always alive."""

    bits: tuple[bool, ...]
    origin: str = "scenario"  # failout-draw | scenario | sim-event

    def __post_init__(self):
        if not self.bits or not self.bits[-1]:
            raise ValidationError("cloud bit must be alive in every mask")

    def alive(self, node_id: int) -> bool:
        return True if node_id == INPUT else self.bits[node_id]

    @property
    def failed_ids(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if not b)

    def label(self) -> str:
        failed = self.failed_ids
        return "none" if not failed else ",".join(f"n{i + 1}" for i in failed)


def all_alive(n_nodes: int, origin: str = "scenario") -> AliveMask:
    return AliveMask(bits=(True,) * n_nodes, origin=origin)


def mask_with_failed(n_nodes: int, failed: Iterable[int], origin: str = "scenario") -> AliveMask:
    failed = set(failed)
    return AliveMask(bits=tuple(i not in failed for i in range(n_nodes)), origin=origin)


@dataclass
class Hyperconnection:
    """A typed physical link carrying one activation vector per inference."""

    id: int
    src: int            # node id, or INPUT
    dst: int
    kind: str           # SIMPLE | SKIP
    bypassed: tuple[int, ...] = ()
    weight: float = 1.0
    projection: np.ndarray | None = None  # [dst_dim, src_dim] when dims differ

    @property
    def span(self) -> int:
        return len(self.bypassed)


@dataclass
class DistributedModel:
    """Partitioned dense network bound to physical nodes and hyperconnections."""

    plan: PartitionPlan
    nodes: list[PhysicalNode]
    stacks: list[list[nn.DenseLayer]]      # per node; cloud stack ends in the classifier
    edges: list[Hyperconnection]
    dtype: type = np.float32
    # survival probability per source id when inference scaling is on, else None
    inference_scaling: dict[int, float] | None = None

    def __post_init__(self):
        self._incoming: dict[int, list[Hyperconnection]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            self._incoming[e.dst].append(e)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def cloud_id(self) -> int:
        return self.nodes[-1].id

    @property
    def classes(self) -> int:
        return self.plan.classes

    @property
    def input_dim(self) -> int:
        return self.plan.input_dim

    def incoming(self, node_id: int) -> list[Hyperconnection]:
        return self._incoming[node_id]

    def expected_input_dim(self, node: PhysicalNode) -> int:
        return self.plan.input_dim if node.depth == 0 else self.plan.hidden_width

    def source_dim(self, src: int) -> int:
        return self.plan.input_dim if src == INPUT else self.plan.hidden_width

    def effective_weight(self, edge: Hyperconnection) -> float:
        if self.inference_scaling is None:
            return edge.weight
        return edge.weight * self.inference_scaling.get(edge.src, 1.0)

    def param_slots(self) -> dict:
        """Deterministically ordered parameter arrays keyed by slot tuples."""
        slots: dict = {}
        for node in self.nodes:
            for li, layer in enumerate(self.stacks[node.id]):
                slots[("node", node.id, li, "W")] = layer.weights
                slots[("node", node.id, li, "b")] = layer.bias
        for e in self.edges:
            if e.projection is not None:
                slots[("edge", e.id, "P")] = e.projection
        return slots

    def node_slots(self, node_id: int) -> list:
        return [k for k in self.param_slots() if k[0] == "node" and k[1] == node_id]


def validate_plan(plan: PartitionPlan) -> list[str]:
    """Collect every structural violation (empty list means valid)."""
    problems = []
    groups = plan.depth_groups()
    if not groups:
        problems.append("partition is empty")
        return problems
    for d, group in enumerate(groups):
        if not group:
            problems.append(f"depth {d} hosts no node")
        for count in group:
            if count < 1:
                problems.append(f"depth {d} has a node hosting {count} layers (must be >= 1)")
    if len(groups[-1]) != 1:
        problems.append("the deepest stage must host exactly one node (the cloud)")
    if plan.hidden_width < 1:
        problems.append(f"hidden_width {plan.hidden_width} must be >= 1")
    if plan.input_dim < 1:
        problems.append(f"input_dim {plan.input_dim} must be >= 1")
    if plan.classes < 2:
        problems.append(f"classes {plan.classes} must be >= 2")

    depth_of = {}
    nid = 0
    for d, group in enumerate(groups):
        for _ in group:
            depth_of[nid] = d
            nid += 1
    n_nodes = nid
    max_depth = len(groups) - 1

    seen = set()
    for s in plan.skips:
        if s.src != INPUT and s.src not in depth_of:
            problems.append(f"skip {s.src}->{s.dst}: unknown source node {s.src}")
            continue
        if s.dst not in depth_of:
            if s.dst >= n_nodes:
                problems.append(f"skip {s.src}->{s.dst}: crosses past the cloud (only {n_nodes} nodes)")
            else:
                problems.append(f"skip {s.src}->{s.dst}: unknown destination node {s.dst}")
            continue
        src_depth = -1 if s.src == INPUT else depth_of[s.src]
        dst_depth = depth_of[s.dst]
        if dst_depth - src_depth < 2:
            problems.append(f"skip {s.src}->{s.dst}: span must be >= 1 (got depth gap {dst_depth - src_depth})")
        if (s.src, s.dst) in seen:
            problems.append(f"skip {s.src}->{s.dst}: duplicated")
        seen.add((s.src, s.dst))
        if s.bypassed is not None:
            for b in s.bypassed:
                if b not in depth_of:
                    problems.append(f"skip {s.src}->{s.dst}: bypassed node {b} unknown")
                elif not (src_depth < depth_of[b] < dst_depth):
                    problems.append(f"skip {s.src}->{s.dst}: node {b} is not between its endpoints")
                elif depth_of[b] == max_depth:
                    problems.append(f"skip {s.src}->{s.dst}: cannot bypass the cloud")
    return problems


def build_model(plan: PartitionPlan, rng: np.random.Generator | None = None,
                dtype=np.float32, seed: int = 0) -> DistributedModel:
    """Instantiate per-node layer stacks, simple edges, skips, and projections."""
    problems = validate_plan(plan)
    if problems:
        raise ValidationError("invalid plan: " + "; ".join(problems))
    if rng is None:
        rng = nn.stream_rng(seed, "init")

    groups = plan.depth_groups()
    nodes: list[PhysicalNode] = []
    nid = 0
    for d, group in enumerate(groups):
        for count in group:
            nodes.append(PhysicalNode(
                id=nid, name=f"n{nid + 1}", depth=d, layer_count=count,
                is_cloud=(d == len(groups) - 1),
            ))
            nid += 1

    stacks: list[list[nn.DenseLayer]] = []
    width = plan.hidden_width
    for node in nodes:
        in_dim = plan.input_dim if node.depth == 0 else width
        stack = [nn.init_layer(in_dim, width, rng, nn.RELU, dtype)]
        for _ in range(node.layer_count - 1):
            stack.append(nn.init_layer(width, width, rng, nn.RELU, dtype))
        if node.is_cloud:
            stack.append(nn.init_layer(width, plan.classes, rng, nn.IDENTITY, dtype))
        stacks.append(stack)

    by_depth: dict[int, list[PhysicalNode]] = {}
    for node in nodes:
        by_depth.setdefault(node.depth, []).append(node)

    edges: list[Hyperconnection] = []
    eid = 0

    def add_edge(src: int, dst: int, kind: str, bypassed: tuple[int, ...]) -> None:
        nonlocal eid
        src_dim = plan.input_dim if src == INPUT else width
        dst_dim = plan.input_dim if nodes[dst].depth == 0 else width
        proj = None
        if src_dim != dst_dim:
            bound = np.sqrt(6.0 / src_dim)
            proj = rng.uniform(-bound, bound, size=(dst_dim, src_dim)).astype(dtype)
        edges.append(Hyperconnection(id=eid, src=src, dst=dst, kind=kind,
                                     bypassed=bypassed, projection=proj))
        eid += 1

    for node in nodes:
        if node.depth == 0:
            add_edge(INPUT, node.id, SIMPLE, ())
        else:
            for parent in by_depth[node.depth - 1]:
                add_edge(parent.id, node.id, SIMPLE, ())

    depth_of = {n.id: n.depth for n in nodes}
    for s in plan.skips:
        src_depth = -1 if s.src == INPUT else depth_of[s.src]
        dst_depth = depth_of[s.dst]
        if s.bypassed is not None:
            bypassed = tuple(s.bypassed)
        else:
            bypassed = tuple(n.id for n in nodes if src_depth < n.depth < dst_depth)
        add_edge(s.src, s.dst, SKIP, bypassed)

    return DistributedModel(plan=plan, nodes=nodes, stacks=stacks, edges=edges, dtype=dtype)


def reachability(model: DistributedModel, mask: AliveMask) -> bool:
    """True iff data can still flow INPUT -> cloud.

    Simple edges need both endpoints alive; skip edges need their src and dst
    alive (the bypassed node is by definition being routed around).
    """
    if len(mask.bits) != model.n_nodes:
        raise ValidationError(f"mask covers {len(mask.bits)} nodes, model has {model.n_nodes}")
    reached = {INPUT}
    frontier = [INPUT]
    while frontier:
        nxt = []
        for src in frontier:
            for e in model.edges:
                if e.src != src or e.dst in reached:
                    continue
                if mask.alive(e.src) and mask.alive(e.dst):
                    reached.add(e.dst)
                    nxt.append(e.dst)
        frontier = nxt
    return model.cloud_id in reached


# --- failure settings --------------------------------------------------------

_PRESET_PROBS = {
    # deepest-first (cloud first), matching the reliability tables
    ("normal", 4): (0.0, 0.01, 0.04, 0.08),
    ("poor", 4): (0.0, 0.05, 0.09, 0.13),
    ("hazardous", 4): (0.0, 0.15, 0.20, 0.22),
    ("normal", 3): (0.0, 0.02, 0.04),
    ("poor", 3): (0.0, 0.05, 0.10),
    ("hazardous", 3): (0.0, 0.15, 0.20),
}

PRESET_SETTING_NAMES = ("normal", "poor", "hazardous")


@dataclass(frozen=True)
class FailureSetting:
    """Named vector of per-node failure probabilities, ordered deepest-first."""

    name: str
    probs_deepest_first: tuple[float, ...]

    def __post_init__(self):
        probs = self.probs_deepest_first
        if not probs:
            raise ValidationError("failure setting needs at least one probability")
        if probs[0] != 0.0:
            raise ValidationError("cloud failure probability must be 0")
        for p in probs:
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"failure probability {p} outside [0, 1]")

    @property
    def node_count(self) -> int:
        return len(self.probs_deepest_first)

    def prob_by_node(self, model: DistributedModel) -> dict[int, float]:
        """Map node id -> failure probability for this model."""
        if model.n_nodes != self.node_count:
            raise ValidationError(
                f"setting {self.name!r} has {self.node_count} probabilities, "
                f"model has {model.n_nodes} nodes")
        order = sorted(model.nodes, key=lambda n: (-n.depth, -n.id))
        return {node.id: self.probs_deepest_first[i] for i, node in enumerate(order)}

    def survival_by_node(self, model: DistributedModel) -> dict[int, float]:
        return {nid: 1.0 - p for nid, p in self.prob_by_node(model).items()}


def failure_setting(name: str, node_count: int) -> FailureSetting:
    key = (name.lower(), node_count)
    if key not in _PRESET_PROBS:
        raise ValidationError(
            f"no preset failure setting {name!r} for {node_count} nodes; "
            f"presets exist for 3- and 4-node chains, otherwise give explicit probabilities")
    return FailureSetting(name=name.lower(), probs_deepest_first=_PRESET_PROBS[key])


# --- canonical plans ----------------------------------------------------------

HEALTH = PartitionPlan(
    name="health", partition=(1, 2, 3, 4), hidden_width=250, input_dim=23, classes=12,
    skips=(SkipSpec(INPUT, 1), SkipSpec(0, 2), SkipSpec(1, 3)),
)

CHAIN3 = PartitionPlan(
    name="chain3", partition=(4, 4, 5), hidden_width=32, input_dim=16, classes=10,
    skips=(SkipSpec(INPUT, 1), SkipSpec(0, 2)),
)

HEALTH_ALT = PartitionPlan(
    name="health-alt", partition=(1, 2, 3, 2, 3), hidden_width=250, input_dim=23, classes=12,
    skips=(SkipSpec(INPUT, 1), SkipSpec(0, 2), SkipSpec(1, 3), SkipSpec(2, 4)),
)

CHAIN4_ALT = PartitionPlan(
    name="chain4-alt", partition=(2, 2, 4, 6), hidden_width=250, input_dim=23, classes=12,
    skips=(SkipSpec(INPUT, 1), SkipSpec(0, 2), SkipSpec(1, 3)),
)

# Minimal instances of the three basic hyperconnection configurations:
# (a) chain, (b) a join where the detoured node is not its parent's only
# child, (c) a branch where the detoured node feeds more than one child.
CONFIG_A = PartitionPlan(
    name="config-a", partition=(1, 1, 1), hidden_width=8, input_dim=6, classes=3,
    skips=(SkipSpec(0, 2),),
)

CONFIG_B = PartitionPlan(
    name="config-b", partition=(1, (1, 1), 2), hidden_width=8, input_dim=6, classes=3,
    skips=(SkipSpec(0, 3, bypassed=(2,)),),
)

CONFIG_C = PartitionPlan(
    name="config-c", partition=(1, 1, (1, 1), 1), hidden_width=8, input_dim=6, classes=3,
    skips=(SkipSpec(0, 2, bypassed=(1,)), SkipSpec(0, 3, bypassed=(1,))),
)

_PLANS = {p.name: p for p in
          (HEALTH, CHAIN3, HEALTH_ALT, CHAIN4_ALT, CONFIG_A, CONFIG_B, CONFIG_C)}


def canonical_plans() -> list[PartitionPlan]:
    return list(_PLANS.values())


def get_plan(name: str) -> PartitionPlan:
    try:
        return _PLANS[name]
    except KeyError:
        raise ValidationError(
            f"unknown plan {name!r}; available: {', '.join(sorted(_PLANS))}") from None


def with_overrides(plan: PartitionPlan, **kwargs) -> PartitionPlan:
    return replace(plan, **kwargs)
