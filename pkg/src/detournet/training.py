"""Training loop: per-batch failout masks, gated backprop, masked updates.

Only parameters that actually carried gradient in a batch are stepped, so a
node dropped by failout (or starved of input) stays bit-identical through
that batch even under stateful optimizers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, UsageError
from .routing import FailoutConfig, GraphRun, Scheme, run_graph, sample_failout_mask
from .topology import INPUT, AliveMask, DistributedModel, all_alive


def graph_backward(model: DistributedModel, run: GraphRun, labels: np.ndarray,
                   ) -> tuple[float, dict]:
    """Loss plus gradients keyed by parameter slot, exact through the joins.

    Every used edge passes the destination's input gradient straight through
    (joins are sums), scaled by the edge weight and projection if present.
    """
    if run.logits is None:
        raise UsageError("cannot backprop an Absent prediction")
    loss, dlogits = nn.cross_entropy(run.logits, labels)

    d_out: dict[int, np.ndarray] = {model.cloud_id: dlogits}
    grads: dict = {}
    for node in sorted(model.nodes, key=lambda n: (n.depth, n.id), reverse=True):
        dy = d_out.get(node.id)
        trace = run.traces.get(node.id)
        if dy is None or trace is None:
            continue
        layer_grads, dx = nn.stack_backward(model.stacks[node.id], trace.caches, dy)
        for li, (dw, db) in enumerate(layer_grads):
            grads[("node", node.id, li, "W")] = dw
            grads[("node", node.id, li, "b")] = db
        for eid in trace.used_edges:
            edge = model.edges[eid]
            w = model.effective_weight(edge)
            y_src = run.payloads[edge.src]
            if edge.projection is not None:
                pkey = ("edge", eid, "P")
                dp = w * (dx.T @ y_src)
                grads[pkey] = grads.get(pkey, 0.0) + dp
                d_src = w * (dx @ edge.projection)
            else:
                d_src = w * dx if w != 1.0 else dx
            if edge.src != INPUT:
                prev = d_out.get(edge.src)
                d_out[edge.src] = d_src if prev is None else prev + d_src
    return loss, grads


@dataclass
class TrainingHistory:
    epochs: list[dict] = field(default_factory=list)
    skipped_batches: int = 0  # batches whose failout mask severed every path

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "skipped_batches": self.skipped_batches}


def accuracy(model: DistributedModel, x: np.ndarray, y: np.ndarray,
             scheme: Scheme, mask: AliveMask | None = None) -> float:
    """Share of correct argmax predictions under a mask (default all alive)."""
    if mask is None:
        mask = all_alive(model.n_nodes)
    logits = run_graph(model, mask, scheme, x).logits
    if logits is None:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == y))


def check_failout_consistency(scheme: Scheme, failout: FailoutConfig) -> None:
    if scheme.trains_with_failout and not failout.enabled:
        raise ConfigError(
            f"failout.mode: scheme {scheme.value!r} trains with failout; mode 'off' is inconsistent")
    if not scheme.trains_with_failout and failout.enabled:
        raise ConfigError(
            f"failout.mode: scheme {scheme.value!r} trains without failout"
            + (" (no detour exists for dropped nodes)" if scheme is Scheme.VANILLA else ""))


def train(model: DistributedModel, x_train: np.ndarray, y_train: np.ndarray,
          scheme: Scheme, failout: FailoutConfig, epochs: int, seed: int,
          batch_size: int = 1024, learning_rate: float = 0.001,
          optimizer: str = "adam", momentum: float = 0.9,
          val: tuple[np.ndarray, np.ndarray] | None = None) -> TrainingHistory:
    """Train the distributed model in place; returns the per-epoch history.

    Each batch draws a fresh alive mask when failout is on; batches whose
    mask leaves no input-to-cloud path carry no information and are skipped.
    """
    if len(x_train) == 0:
        raise ConfigError("dataset: training split is empty")
    check_failout_consistency(scheme, failout)

    x_train = np.ascontiguousarray(x_train, dtype=model.dtype)
    y_train = np.asarray(y_train)
    shuffle_rng = nn.stream_rng(seed, "shuffle")
    failout_rng = nn.stream_rng(seed, "failout")
    opt = nn.make_optimizer(optimizer, learning_rate, momentum)
    slots = model.param_slots()
    full_mask = all_alive(model.n_nodes)
    history = TrainingHistory()

    n = len(x_train)
    for epoch in range(epochs):
        perm = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            xb, yb = x_train[idx], y_train[idx]
            if failout.enabled:
                mask = sample_failout_mask(failout, model, failout_rng)
            else:
                mask = full_mask
            run = run_graph(model, mask, scheme, xb, collect_cache=True)
            if run.logits is None:
                history.skipped_batches += 1
                continue
            loss, grads = graph_backward(model, run, yb)
            opt.step(slots, grads)
            losses.append(loss)
        row = {
            "epoch": epoch,
            "loss": float(np.mean(losses)) if losses else float("nan"),
            "train_accuracy": accuracy(model, x_train, y_train, scheme),
        }
        if val is not None and len(val[0]) > 0:
            row["val_accuracy"] = accuracy(
                model, np.ascontiguousarray(val[0], dtype=model.dtype), val[1], scheme)
        history.epochs.append(row)
    return history
