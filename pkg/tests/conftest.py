"""Shared fixtures: small plans and the desk-scale trained-model bundle."""

from __future__ import annotations

import numpy as np
import pytest

from detournet import (
    FailoutConfig, Scheme, build_model, failure_setting, get_plan, train,
)
from detournet.datasets import generate_blobs
from detournet.topology import PartitionPlan, SkipSpec, with_overrides

DESK_SEEDS = (0, 1, 2)
DESK_EPOCHS = 15
DESK_BATCH = 128


def mini_plan(width: int = 5, input_dim: int = 4, classes: int = 3) -> PartitionPlan:
    return PartitionPlan(
        name="mini", partition=(1, 2, 1), hidden_width=width, input_dim=input_dim,
        classes=classes, skips=(SkipSpec(-1, 1), SkipSpec(0, 2)))


@pytest.fixture(scope="session")
def desk_plan():
    # health partition at desk width: full topology, tractable training
    return with_overrides(get_plan("health"), hidden_width=64, name="health-desk")


@pytest.fixture(scope="session")
def desk_bundle(desk_plan):
    """Per-seed blobs datasets plus trained vanilla and gated-skip models."""
    bundle = {}
    for seed in DESK_SEEDS:
        data = generate_blobs(features=23, classes=12, samples_per_class=200,
                              spread=1.0, seed=seed + 100)
        vanilla = build_model(desk_plan, seed=seed)
        train(vanilla, data.x_train, data.y_train, Scheme.VANILLA,
              FailoutConfig(mode="off"), epochs=DESK_EPOCHS, seed=seed,
              batch_size=DESK_BATCH)
        gated = build_model(desk_plan, seed=seed)
        train(gated, data.x_train, data.y_train, Scheme.GATED_SKIP,
              FailoutConfig(mode="fixed", rate=0.1), epochs=DESK_EPOCHS,
              seed=seed, batch_size=DESK_BATCH)
        bundle[seed] = {"data": data, "vanilla": vanilla, "gated": gated}
    return bundle


@pytest.fixture(scope="session")
def normal_setting():
    return failure_setting("normal", 4)
