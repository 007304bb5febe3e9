"""Exact expected-accuracy evaluation over enumerated failure scenarios.

Per-node failures are independent, so a scenario's probability is the
product of alive/dead factors. The exact evaluator credits chance (1/C)
whenever no path survives; the Monte Carlo evaluator samples masks and
uniform guesses instead, and exists to cross-check the exact path.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .errors import CapacityError, UsageError, ValidationError
from .routing import (
    FailoutConfig, HyperWeightScheme, Scheme, assign_hyperconnection_weights,
    gated_forward, run_graph,
)
from .topology import (
    INPUT, AliveMask, DistributedModel, FailureSetting, PartitionPlan,
    build_model, mask_with_failed,
)
from .training import accuracy, train

ENUMERATION_LIMIT = 20  # non-cloud nodes; beyond this use monte_carlo_accuracy


@dataclass(frozen=True)
class FailureScenario:
    mask: AliveMask
    probability: float
    label: str


def enumerate_scenarios(model: DistributedModel, setting: FailureSetting,
                        ) -> list[FailureScenario]:
    """All 2^(V-1) failure scenarios with exact probabilities, most likely first."""
    free = [n for n in model.nodes if not n.is_cloud]
    if len(free) > ENUMERATION_LIMIT:
        raise CapacityError(
            f"{len(free)} non-cloud nodes would enumerate 2^{len(free)} scenarios; "
            "use monte_carlo_accuracy instead")
    probs = setting.prob_by_node(model)
    scenarios = []
    for failed_flags in itertools.product((False, True), repeat=len(free)):
        failed = [n.id for n, f in zip(free, failed_flags) if f]
        p = 1.0
        for node in free:
            p *= probs[node.id] if node.id in failed else 1.0 - probs[node.id]
        mask = mask_with_failed(model.n_nodes, failed)
        scenarios.append(FailureScenario(mask=mask, probability=p, label=mask.label()))
    scenarios.sort(key=lambda s: (-s.probability, s.label))
    return scenarios


def evaluate_scenario(model: DistributedModel, scenario: FailureScenario,
                      x: np.ndarray, y: np.ndarray, scheme: Scheme) -> float:
    """Accuracy under one mask; an Absent prediction scores chance exactly."""
    if len(x) == 0:
        raise UsageError("empty test set")
    logits = gated_forward(model, scenario.mask, scheme, x)
    if logits is None:
        return 1.0 / model.classes
    return float(np.mean(np.argmax(logits, axis=1) == y))


def expected_accuracy(scenarios: list[FailureScenario], accuracies: list[float]) -> float:
    """Probability-weighted mean accuracy over aligned scenario lists."""
    if len(scenarios) != len(accuracies):
        raise ValidationError(
            f"{len(scenarios)} scenarios but {len(accuracies)} accuracies")
    total = sum(s.probability for s in scenarios)
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"scenario probabilities sum to {total!r}, not 1")
    return float(sum(s.probability * a for s, a in zip(scenarios, accuracies)))


@dataclass
class EvaluationReport:
    scheme: str
    setting: str
    mode: str
    scenarios: list[dict]
    expected_accuracy: float
    clean_accuracy: float
    chance: float
    seed: int
    timing_s: float = 0.0
    stderr: float | None = None
    draws: int | None = None

    def results_dict(self) -> dict:
        out = {
            "scheme": self.scheme,
            "setting": self.setting,
            "mode": self.mode,
            "scenarios": self.scenarios,
            "expected_accuracy": self.expected_accuracy,
            "clean_accuracy": self.clean_accuracy,
            "chance": self.chance,
        }
        if self.stderr is not None:
            out["stderr"] = self.stderr
            out["draws"] = self.draws
        return out


def evaluate_exact(model: DistributedModel, setting: FailureSetting, scheme: Scheme,
                   x: np.ndarray, y: np.ndarray, seed: int = 0,
                   workers: int = 1) -> EvaluationReport:
    """Exact expected accuracy: every scenario evaluated, chance for Absent."""
    start = time.perf_counter()
    scenarios = enumerate_scenarios(model, setting)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            accs = list(pool.map(
                lambda s: evaluate_scenario(model, s, x, y, scheme), scenarios))
    else:
        accs = [evaluate_scenario(model, s, x, y, scheme) for s in scenarios]
    expected = expected_accuracy(scenarios, accs)
    rows = [
        {"label": s.label, "probability": s.probability, "accuracy": a}
        for s, a in zip(scenarios, accs)
    ]
    clean = next(a for s, a in zip(scenarios, accs) if s.label == "none")
    return EvaluationReport(
        scheme=scheme.value, setting=setting.name, mode="exact", scenarios=rows,
        expected_accuracy=expected, clean_accuracy=clean, chance=1.0 / model.classes,
        seed=seed, timing_s=time.perf_counter() - start)


def monte_carlo_accuracy(model: DistributedModel, setting: FailureSetting,
                         scheme: Scheme, x: np.ndarray, y: np.ndarray,
                         draws: int, rng: np.random.Generator,
                         ) -> tuple[float, float]:
    """Sampled estimate (mean, stderr) of the expected accuracy.

    Masks are sampled from the setting; Absent predictions resolve by a
    sampled uniform guess rather than the analytic 1/C.
    """
    if draws < 1:
        raise UsageError("draws must be >= 1")
    if len(x) == 0:
        raise UsageError("empty test set")
    probs = setting.prob_by_node(model)
    free = [n.id for n in model.nodes if not n.is_cloud]
    p_vec = np.array([probs[i] for i in free])

    # all randomness drawn up front so grouping by mask cannot change results;
    # test items cycle round-robin, removing resampling variance entirely
    alive = rng.random((draws, len(free))) >= p_vec
    sample_idx = np.arange(draws) % len(x)
    guesses = rng.integers(0, model.classes, size=draws)

    correct = np.zeros(draws, dtype=bool)
    keys = [tuple(row) for row in alive]
    for key in sorted(set(keys)):
        rows = np.array([i for i, k in enumerate(keys) if k == key])
        failed = [nid for nid, a in zip(free, key) if not a]
        mask = mask_with_failed(model.n_nodes, failed)
        idx = sample_idx[rows]
        logits = gated_forward(model, mask, scheme, x[idx])
        if logits is None:
            correct[rows] = guesses[rows] == y[idx]
        else:
            correct[rows] = np.argmax(logits, axis=1) == y[idx]
    mean = float(correct.mean())
    stderr = float(correct.std(ddof=1) / np.sqrt(draws)) if draws > 1 else float("nan")
    return mean, stderr


def evaluate_mc(model: DistributedModel, setting: FailureSetting, scheme: Scheme,
                x: np.ndarray, y: np.ndarray, draws: int, seed: int) -> EvaluationReport:
    start = time.perf_counter()
    rng = nn.stream_rng(seed, "monte-carlo")
    mean, stderr = monte_carlo_accuracy(model, setting, scheme, x, y, draws, rng)
    clean = accuracy(model, x, y, scheme)
    return EvaluationReport(
        scheme=scheme.value, setting=setting.name, mode="mc", scenarios=[],
        expected_accuracy=mean, clean_accuracy=clean, chance=1.0 / model.classes,
        seed=seed, timing_s=time.perf_counter() - start, stderr=stderr, draws=draws)


# --- ablation sweeps -----------------------------------------------------------

AXIS_FAILOUT_RATE = "failout-rate"
AXIS_WEIGHTS = "weights"
AXIS_SKIP_CONFIG = "skip-config"

FAILOUT_RATE_LEVELS = ("failure", 0.05, 0.10, 0.30, 0.50)
WEIGHT_LEVELS = (
    HyperWeightScheme("one"),
    HyperWeightScheme("reliability"),
    HyperWeightScheme("relative-reliability"),
    HyperWeightScheme("uniform-random", 0.0, 1.0),
)


def skip_subsets(plan: PartitionPlan) -> list[tuple[str, tuple]]:
    """All skip-edge subsets, smallest first, deeper sources before shallower.

    Labels name the skip sources ("i" for INPUT), "none" and "all" at the ends.
    """
    depth_of = {}
    nid = 0
    for d, group in enumerate(plan.depth_groups()):
        for _ in group:
            depth_of[nid] = d
            nid += 1

    def src_depth(s):
        return -1 if s.src == INPUT else depth_of[s.src]

    def src_name(s):
        return "i" if s.src == INPUT else f"n{s.src + 1}"

    subsets = []
    skips = list(plan.skips)
    for r in range(len(skips) + 1):
        for combo in itertools.combinations(skips, r):
            depths = tuple(sorted((src_depth(s) for s in combo), reverse=True))
            subsets.append((combo, (r, tuple(-d for d in depths))))
    subsets.sort(key=lambda item: item[1])

    out = []
    for combo, _ in subsets:
        if not combo:
            label = "none"
        elif len(combo) == len(skips):
            label = "all"
        else:
            named = sorted(combo, key=lambda s: (s.src == INPUT, s.src))
            label = ",".join(src_name(s) for s in named)
        out.append((label, tuple(combo)))
    return out


@dataclass
class AblationGrid:
    axis: str
    levels: list[str]
    repeats: int
    cells: list[dict] = field(default_factory=list)

    def results_dict(self) -> dict:
        return {"axis": self.axis, "levels": self.levels,
                "repeats": self.repeats, "cells": self.cells}


def _grid_settings(model: DistributedModel, names: list[str]) -> list[FailureSetting]:
    from .topology import failure_setting
    return [failure_setting(n, model.n_nodes) for n in names]


def sweep(plan: PartitionPlan, data, axis: str, seed: int,
          scheme: Scheme = Scheme.GATED_SKIP,
          setting_names: list[str] | None = None,
          repeats: int = 1, epochs: int = 10, batch_size: int = 128,
          learning_rate: float = 0.001, failout_rate: float = 0.1,
          dtype=np.float32, workers: int = 1) -> AblationGrid:
    """Train/evaluate one cell per (level, repeat) with paired seeds.

    `data` carries train/test splits (see datasets.Dataset). Seeds are shared
    across levels within a repeat so comparisons isolate the swept factor.
    """
    setting_names = setting_names or ["normal"]

    if axis == AXIS_FAILOUT_RATE:
        levels = [("failure" if lv == "failure" else f"{int(lv * 100)}%", lv)
                  for lv in FAILOUT_RATE_LEVELS]
    elif axis == AXIS_WEIGHTS:
        levels = [(w.kind, w) for w in WEIGHT_LEVELS]
    elif axis == AXIS_SKIP_CONFIG:
        levels = skip_subsets(plan)
    else:
        raise ValidationError(f"unknown sweep axis {axis!r}")

    grid = AblationGrid(axis=axis, levels=[l for l, _ in levels], repeats=repeats)
    for repeat in range(repeats):
        cell_seed = seed + repeat
        for label, value in levels:
            cell_plan = plan
            failout = FailoutConfig(mode="fixed", rate=failout_rate)
            weight_scheme = HyperWeightScheme("one")
            if axis == AXIS_FAILOUT_RATE:
                if value == "failure":
                    ref = _grid_settings_for_failout(plan, setting_names)
                    failout = FailoutConfig(mode="match-failure", setting=ref)
                else:
                    failout = FailoutConfig(mode="fixed", rate=float(value))
            elif axis == AXIS_WEIGHTS:
                weight_scheme = value
            elif axis == AXIS_SKIP_CONFIG:
                cell_plan = replace(plan, skips=value, name=f"{plan.name}[{label}]")

            model = build_model(cell_plan, dtype=dtype, seed=cell_seed)
            settings = _grid_settings(model, setting_names)
            assign_hyperconnection_weights(
                model, weight_scheme, setting=settings[0],
                rng=nn.stream_rng(cell_seed, "weights"))
            train(model, data.x_train, data.y_train, scheme, failout,
                  epochs=epochs, seed=cell_seed, batch_size=batch_size,
                  learning_rate=learning_rate)
            cell = {"level": label, "repeat": repeat,
                    "clean_accuracy": accuracy(model, data.x_test, data.y_test, scheme),
                    "expected_accuracy": {}}
            for setting in settings:
                report = evaluate_exact(model, setting, scheme,
                                        data.x_test, data.y_test,
                                        seed=cell_seed, workers=workers)
                cell["expected_accuracy"][setting.name] = report.expected_accuracy
                cell.setdefault("scenarios", {})[setting.name] = report.scenarios
            grid.cells.append(cell)
    return grid


def _grid_settings_for_failout(plan: PartitionPlan, names: list[str]) -> FailureSetting:
    from .topology import failure_setting
    return failure_setting(names[0], plan.node_count)


def weight_scheme_spread(grid: AblationGrid, setting_name: str) -> float:
    """Standard deviation of expected accuracy across weight-scheme cells."""
    vals = [c["expected_accuracy"][setting_name] for c in grid.cells]
    return float(np.std(vals))
