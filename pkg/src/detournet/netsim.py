"""Discrete-event simulation of crash/repair dynamics with heartbeat detection.

Up and down durations are exponential with the configured MTBF/MTTR means.
Heartbeats are evaluated lazily: a crash at t whose last heartbeat fired at
h is detected at h + timeout, so per-tick events never enter the queue and
multi-million-hour horizons stay cheap. Requests route under the *detected*
alive mask; payloads that reach a node that is actually down are lost and
the request falls back to a sampled uniform guess.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from . import nn
from .errors import ConfigError
from .routing import Scheme, contributing_edges, gated_forward
from .topology import INPUT, AliveMask, DistributedModel

# Tie order at equal timestamps: repairs land before crashes, detection
# before traffic.
_RANK = {"repair": 0, "crash": 1, "heartbeat": 2, "request": 3}

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class SimConfig:
    mtbf_hours: dict[str, float]      # per node name; math.inf = never fails
    mttr_hours: dict[str, float]
    heartbeat_interval_s: float = 1.0
    detection_timeout_intervals: int = 3
    request_rate_per_hour: float = 0.0
    horizon_hours: float = 1000.0
    seed: int = 0
    windows: int = 20

    def __post_init__(self):
        for name, v in self.mtbf_hours.items():
            if v <= 0:
                raise ConfigError(f"sim.mtbf_hours.{name}: must be > 0")
        for name, v in self.mttr_hours.items():
            if v <= 0:
                raise ConfigError(f"sim.mttr_hours.{name}: must be > 0")
        if self.heartbeat_interval_s <= 0:
            raise ConfigError("sim.heartbeat_interval_s: must be > 0")
        if self.detection_timeout_intervals < 2:
            raise ConfigError("sim.detection_timeout_intervals: must be >= 2 intervals")
        if self.request_rate_per_hour < 0:
            raise ConfigError("sim.request_rate_per_hour: must be >= 0")
        if self.horizon_hours < 0:
            raise ConfigError("sim.horizon_hours: must be >= 0")
        if self.windows < 1:
            raise ConfigError("sim.windows: must be >= 1")

    @classmethod
    def uniform(cls, model: DistributedModel, mtbf: float, mttr: float,
                **kwargs) -> "SimConfig":
        names = [n.name for n in model.nodes if not n.is_cloud]
        return cls(mtbf_hours={n: mtbf for n in names},
                   mttr_hours={n: mttr for n in names}, **kwargs)


@dataclass
class TrafficLedger:
    """Cumulative scalars that crossed each hyperconnection."""

    per_edge: dict[int, int] = field(default_factory=dict)
    total: int = 0
    static_reference_total: int = 0  # what always-on skips would have cost

    def add(self, edge_id: int, scalars: int) -> None:
        self.per_edge[edge_id] = self.per_edge.get(edge_id, 0) + scalars
        self.total += scalars

    @property
    def savings_ratio(self) -> float:
        if self.static_reference_total == 0:
            return 0.0
        return 1.0 - self.total / self.static_reference_total


@dataclass
class SimReport:
    scheme: str
    horizon_hours: float
    seed: int
    availability: dict[str, float] = field(default_factory=dict)
    mean_detection_latency_s: float = 0.0
    detections: int = 0
    requests: int = 0
    requests_correct: int = 0
    requests_lost_undetected: int = 0
    requests_chance_fallback: int = 0
    stream_accuracy: float = 0.0
    windows: list[dict] = field(default_factory=list)
    bandwidth: dict = field(default_factory=dict)
    events_processed: int = 0

    def results_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "horizon_hours": self.horizon_hours,
            "availability": self.availability,
            "mean_detection_latency_s": self.mean_detection_latency_s,
            "detections": self.detections,
            "requests": self.requests,
            "requests_correct": self.requests_correct,
            "requests_lost_undetected": self.requests_lost_undetected,
            "requests_chance_fallback": self.requests_chance_fallback,
            "stream_accuracy": self.stream_accuracy,
            "windows": self.windows,
            "bandwidth": self.bandwidth,
            "events_processed": self.events_processed,
        }


def bandwidth_per_inference(model: DistributedModel, scheme: Scheme,
                            mask: AliveMask) -> int:
    """Scalars crossing every hyperconnection for one forward pass.

    An edge carries its source dimension whenever the receiving node would
    use its payload under the scheme's activation rule and the mask.
    """
    payloads: dict[int, object] = {INPUT: True}
    total = 0
    for node in sorted(model.nodes, key=lambda n: (n.depth, n.id)):
        if not mask.alive(node.id):
            payloads[node.id] = None
            continue
        used = contributing_edges(model, node.id, mask, scheme, payloads)
        if not used:
            payloads[node.id] = None
            continue
        for e in used:
            total += model.source_dim(e.src)
        payloads[node.id] = True
    return total


class _NodeState:
    __slots__ = ("up", "detected_up", "up_since", "down_since", "uptime")

    def __init__(self):
        self.up = True
        self.detected_up = True
        self.up_since = 0.0
        self.down_since = None
        self.uptime = 0.0


def run_sim(config: SimConfig, model: DistributedModel, scheme: Scheme,
            x_test: np.ndarray, y_test: np.ndarray,
            trace: Optional[IO[str]] = None) -> SimReport:
    """Simulate crash/repair/heartbeat/request dynamics over the horizon.

    Test samples feed the request stream round-robin, so in a fully detected
    steady state the stream accuracy converges to the per-scenario accuracy
    of the prevailing mask.
    """
    report = SimReport(scheme=scheme.value, horizon_hours=config.horizon_hours,
                       seed=config.seed)
    compute = [n for n in model.nodes if not n.is_cloud]
    for name in list(config.mtbf_hours) + list(config.mttr_hours):
        if name not in {n.name for n in compute}:
            raise ConfigError(f"sim.mtbf_hours.{name}: no such compute node")

    horizon = config.horizon_hours
    if horizon == 0:
        report.availability = {n.name: 1.0 for n in model.nodes}
        return report

    iv = config.heartbeat_interval_s / SECONDS_PER_HOUR
    timeout = config.detection_timeout_intervals * iv
    fail_rng = {n.id: nn.stream_rng(config.seed, "sim-failures", n.id) for n in compute}
    arrival_rng = nn.stream_rng(config.seed, "sim-arrivals")
    chance_rng = nn.stream_rng(config.seed, "sim-chance")

    states = {n.id: _NodeState() for n in compute}
    heap: list[tuple] = []
    seq = 0

    def push(time: float, kind: str, node_id: int, ref: float = 0.0):
        nonlocal seq
        if time <= horizon:
            heapq.heappush(heap, (time, _RANK[kind], node_id, seq, kind, ref))
            seq += 1

    for n in compute:
        mtbf = config.mtbf_hours.get(n.name, math.inf)
        if math.isfinite(mtbf):
            push(fail_rng[n.id].exponential(mtbf), "crash", n.id)
    if config.request_rate_per_hour > 0 and len(x_test) > 0:
        push(arrival_rng.exponential(1.0 / config.request_rate_per_hour), "request", -1)

    latencies: list[float] = []
    window_len = horizon / config.windows
    win_hits = [0] * config.windows
    win_total = [0] * config.windows
    ledger = TrafficLedger()
    sample_cursor = 0
    topo_order = sorted(model.nodes, key=lambda n: (n.depth, n.id))

    # The detected/actual state pair repeats for long stretches, so routing
    # outcomes and whole-test-set predictions are cached per state.
    route_cache: dict[tuple, tuple] = {}
    pred_cache: dict[tuple, Optional[np.ndarray]] = {}

    def current_bits() -> tuple[tuple, tuple]:
        detected, actual = [], []
        for node in model.nodes:
            st = states.get(node.id)
            detected.append(node.is_cloud or st.detected_up)
            actual.append(node.is_cloud or st.up)
        return tuple(detected), tuple(actual)

    def route_outcome(detected: tuple, actual: tuple) -> tuple:
        """(lost, reachable, traffic_per_edge, static_ref) for one request."""
        mask = AliveMask(bits=detected, origin="sim-event")
        payloads: dict[int, object] = {INPUT: True}
        lost = False
        traffic: list[tuple[int, int]] = []
        for node in topo_order:
            if not mask.alive(node.id):
                payloads[node.id] = None
                continue
            used = contributing_edges(model, node.id, mask, scheme, payloads)
            if not used:
                payloads[node.id] = None
                continue
            for e in used:
                traffic.append((e.id, model.source_dim(e.src)))
            if actual[node.id]:
                payloads[node.id] = True
            else:
                payloads[node.id] = None
                lost = True
        reachable = payloads.get(model.cloud_id) is not None
        static_ref = bandwidth_per_inference(model, Scheme.STATIC_SKIP, mask)
        return lost, reachable, tuple(traffic), static_ref

    def route_request(t: float, sample_idx: int) -> None:
        detected, actual = current_bits()
        key = (detected, actual)
        if key not in route_cache:
            route_cache[key] = route_outcome(detected, actual)
        lost, reachable, traffic, static_ref = route_cache[key]
        for eid, scalars in traffic:
            ledger.add(eid, scalars)
        ledger.static_reference_total += static_ref

        label = int(y_test[sample_idx])
        if lost or not reachable:
            guess = int(chance_rng.integers(0, model.classes))
            correct = guess == label
            report.requests_chance_fallback += 1
            if lost:
                report.requests_lost_undetected += 1
        else:
            if detected not in pred_cache:
                mask = AliveMask(bits=detected, origin="sim-event")
                logits = gated_forward(model, mask, scheme, x_test)
                pred_cache[detected] = (
                    None if logits is None else np.argmax(logits, axis=1))
            preds = pred_cache[detected]
            if preds is None:  # defensive; routing walk said reachable
                guess = int(chance_rng.integers(0, model.classes))
                correct = guess == label
                report.requests_chance_fallback += 1
            else:
                correct = int(preds[sample_idx]) == label
        report.requests += 1
        report.requests_correct += int(correct)
        w = min(int(t / window_len), config.windows - 1)
        win_total[w] += 1
        win_hits[w] += int(correct)

    while heap:
        t, _, node_id, _, kind, ref = heapq.heappop(heap)
        report.events_processed += 1
        if trace is not None:
            trace.write(f"{t:.9f},{kind},{node_id}\n")
        if kind == "crash":
            st = states[node_id]
            st.uptime += t - st.up_since
            st.up = False
            st.down_since = t
            name = model.nodes[node_id].name
            push(t + fail_rng[node_id].exponential(config.mttr_hours.get(name, 1.0)),
                 "repair", node_id)
            k = math.floor(t / iv)
            if k * iv >= t:  # crash exactly on a tick: that beat never went out
                k -= 1
            push(max(k, 0) * iv + timeout, "heartbeat", node_id, ref=t)
        elif kind == "repair":
            st = states[node_id]
            st.up = True
            st.up_since = t
            st.down_since = None
            name = model.nodes[node_id].name
            mtbf = config.mtbf_hours.get(name, math.inf)
            if math.isfinite(mtbf):
                push(t + fail_rng[node_id].exponential(mtbf), "crash", node_id)
            if not st.detected_up:
                push(math.ceil(t / iv) * iv, "heartbeat", node_id, ref=-t)
        elif kind == "heartbeat":
            st = states[node_id]
            if ref >= 0:  # missed-heartbeat check scheduled at crash time ref
                if not st.up and st.down_since == ref:
                    st.detected_up = False
                    latencies.append(t - ref)
            else:  # first heartbeat after the repair at -ref
                if st.up and st.up_since == -ref:
                    st.detected_up = True
        else:  # request
            route_request(t, sample_cursor % len(x_test))
            sample_cursor += 1
            push(t + arrival_rng.exponential(1.0 / config.request_rate_per_hour),
                 "request", -1)

    for node in model.nodes:
        if node.is_cloud:
            report.availability[node.name] = 1.0
            continue
        st = states[node.id]
        uptime = st.uptime + (horizon - st.up_since if st.up else 0.0)
        report.availability[node.name] = uptime / horizon
    report.detections = len(latencies)
    report.mean_detection_latency_s = (
        float(np.mean(latencies)) * SECONDS_PER_HOUR if latencies else 0.0)
    report.stream_accuracy = (
        report.requests_correct / report.requests if report.requests else 0.0)
    report.windows = [
        {"start_hours": i * window_len, "end_hours": (i + 1) * window_len,
         "requests": win_total[i],
         "accuracy": (win_hits[i] / win_total[i]) if win_total[i] else None}
        for i in range(config.windows)
    ]
    report.bandwidth = {
        "per_edge": {str(eid): count for eid, count in sorted(ledger.per_edge.items())},
        "total_scalars": ledger.total,
        "static_skip_reference": ledger.static_reference_total,
        "savings_ratio": ledger.savings_ratio,
    }
    return report


def analytic_availability(mtbf: float, mttr: float) -> float:
    return mtbf / (mtbf + mttr)
