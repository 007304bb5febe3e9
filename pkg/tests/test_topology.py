"""Plans, presets, validation, reachability, and failure settings."""

import numpy as np
import pytest

from detournet import (
    INPUT, AliveMask, ValidationError, all_alive, build_model, canonical_plans,
    failure_setting, get_plan, mask_with_failed, reachability,
)
from detournet.topology import (
    SIMPLE, SKIP, PartitionPlan, SkipSpec, validate_plan, with_overrides,
)


def test_health_preset_structure():
    model = build_model(get_plan("health"), seed=0)
    assert [n.layer_count for n in model.nodes] == [1, 2, 3, 4]
    assert model.nodes[-1].is_cloud and sum(n.is_cloud for n in model.nodes) == 1
    skips = [(e.src, e.dst) for e in model.edges if e.kind == SKIP]
    assert skips == [(INPUT, 1), (0, 2), (1, 3)]
    # only the input->n2 skip mismatches dimensions (23 vs 250)
    projected = [e for e in model.edges if e.projection is not None]
    assert [(e.src, e.dst) for e in projected] == [(INPUT, 1)]
    assert projected[0].projection.shape == (250, 23)


def test_chain3_preset_has_two_skips():
    model = build_model(get_plan("chain3"), seed=0)
    skips = [(e.src, e.dst) for e in model.edges if e.kind == SKIP]
    assert skips == [(INPUT, 1), (0, 2)]


def test_skip_span_is_bypassed_count():
    model = build_model(get_plan("health"), seed=0)
    depth = {n.id: n.depth for n in model.nodes}
    depth[INPUT] = -1
    for e in model.edges:
        if e.kind == SKIP:
            assert e.span == depth[e.dst] - depth[e.src] - 1
            assert all(depth[e.src] < depth[b] < depth[e.dst] for b in e.bypassed)


def test_skip_crossing_cloud_is_rejected():
    plan = with_overrides(get_plan("health"),
                          skips=(SkipSpec(2, 5),), name="bad")
    problems = validate_plan(plan)
    assert any("crosses past the cloud" in p for p in problems)
    with pytest.raises(ValidationError):
        build_model(plan)


def test_validation_lists_every_violation():
    plan = PartitionPlan(name="bad", partition=(1, 0), hidden_width=0,
                         input_dim=0, classes=1,
                         skips=(SkipSpec(0, 1), SkipSpec(0, 1)))
    problems = validate_plan(plan)
    assert len(problems) >= 5
    joined = " ".join(problems)
    assert "hidden_width" in joined and "classes" in joined


def test_every_canonical_plan_builds():
    for plan in canonical_plans():
        assert validate_plan(plan) == []
        model = build_model(plan, seed=0)
        assert model.nodes[-1].is_cloud


def test_config_b_has_an_additive_join_node():
    model = build_model(get_plan("config-b"), seed=0)
    cloud_in = model.incoming(model.cloud_id)
    simples = [e for e in cloud_in if e.kind == SIMPLE]
    assert len(simples) == 2


def test_health_alt_partition_has_five_nodes():
    model = build_model(get_plan("health-alt"), seed=0)
    assert model.n_nodes == 5
    assert [n.layer_count for n in model.nodes] == [1, 2, 3, 2, 3]


def test_reachability_all_alive():
    model = build_model(get_plan("health"), seed=0)
    assert reachability(model, all_alive(4))


HEALTH_UNREACHABLE = {(0, 1), (1, 2), (0, 1, 2)}


def test_reachability_exhaustive_health_masks():
    # unreachable exactly when two consecutive compute nodes both fail
    model = build_model(get_plan("health"), seed=0)
    for bits in range(8):
        failed = tuple(i for i in range(3) if bits & (1 << i))
        mask = mask_with_failed(4, failed)
        assert reachability(model, mask) == (failed not in HEALTH_UNREACHABLE)


def test_reachability_is_monotone():
    model = build_model(get_plan("health"), seed=0)
    for bits in range(8):
        failed = {i for i in range(3) if bits & (1 << i)}
        if not reachability(model, mask_with_failed(4, failed)):
            continue
        for extra in list(failed):
            revived = failed - {extra}
            assert reachability(model, mask_with_failed(4, revived))


def test_mask_requires_live_cloud():
    with pytest.raises(ValidationError):
        AliveMask(bits=(True, True, True, False))


def test_mask_labels():
    assert mask_with_failed(4, []).label() == "none"
    assert mask_with_failed(4, [0, 2]).label() == "n1,n3"


def test_failure_setting_presets():
    s = failure_setting("normal", 4)
    model = build_model(get_plan("health"), seed=0)
    probs = s.prob_by_node(model)
    assert probs == {0: 0.08, 1: 0.04, 2: 0.01, 3: 0.0}
    hazardous = failure_setting("hazardous", 3).probs_deepest_first
    assert hazardous == (0.0, 0.15, 0.20)


def test_failure_setting_unknown_size():
    with pytest.raises(ValidationError):
        failure_setting("normal", 7)


def test_failure_setting_rejects_failing_cloud():
    from detournet import FailureSetting
    with pytest.raises(ValidationError):
        FailureSetting(name="bad", probs_deepest_first=(0.5, 0.1))


def test_plan_roundtrip_through_dict():
    plan = get_plan("health")
    again = PartitionPlan.from_dict(plan.to_dict())
    assert again == plan
