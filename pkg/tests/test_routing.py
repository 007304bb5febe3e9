"""Scheme semantics: combine operators, gating, failout masks, edge weights."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detournet import (
    FailoutConfig, HyperWeightScheme, Scheme, all_alive,
    assign_hyperconnection_weights, build_model, combine_inputs, failure_setting,
    gated_forward, get_plan, mask_with_failed, reachability,
    sample_failout_mask, set_inference_scaling,
)
from detournet.errors import ConfigError
from detournet.nn import stream_rng
from detournet.routing import skip_active
from detournet.topology import SKIP


@pytest.fixture(scope="module")
def health_model():
    return build_model(get_plan("health"), seed=2)


def test_combine_selective_prefers_primary():
    out = combine_inputs(np.array([1.0, 2.0]), np.array([9.0, 9.0]),
                         Scheme.GATED_SKIP)
    assert np.array_equal(out, [1.0, 2.0])


def test_combine_selective_falls_back_to_detour():
    out = combine_inputs(None, np.array([9.0, 9.0]), Scheme.GATED_SKIP)
    assert np.array_equal(out, [9.0, 9.0])


def test_combine_additive_identity():
    out = combine_inputs(np.array([1.0, 2.0]), np.array([0.0, 0.0]),
                         Scheme.ADDITIVE_SKIP)
    assert np.array_equal(out, [1.0, 2.0])


def test_combine_both_absent():
    assert combine_inputs(None, None, Scheme.GATED_SKIP) is None
    assert combine_inputs(None, None, Scheme.ADDITIVE_SKIP) is None


vectors = st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6)


@settings(max_examples=200, deadline=None)
@given(primary=st.one_of(st.none(), vectors), detour=st.one_of(st.none(), vectors))
def test_combine_algebra(primary, detour):
    p = None if primary is None else np.array(primary)
    d = None if detour is None else np.array(detour)
    if p is not None and d is not None and p.shape != d.shape:
        d = np.resize(d, p.shape)
    sel = combine_inputs(p, d, Scheme.GATED_SKIP)
    add = combine_inputs(p, d, Scheme.ADDITIVE_SKIP)
    if p is None and d is None:
        assert sel is None and add is None
    else:
        # additive treats Absent as zero; selective never mixes
        want_add = (p if p is not None else 0) + (d if d is not None else 0)
        assert np.array_equal(add, want_add)
        assert np.array_equal(sel, p if p is not None else d)


def test_skip_activation_per_scheme(health_model):
    skip = next(e for e in health_model.edges
                if e.kind == SKIP and e.bypassed == (1,))
    alive = all_alive(4)
    n2_dead = mask_with_failed(4, [1])
    assert not skip_active(skip, alive, Scheme.VANILLA)
    assert not skip_active(skip, n2_dead, Scheme.VANILLA)
    assert skip_active(skip, alive, Scheme.STATIC_SKIP)
    assert skip_active(skip, alive, Scheme.ADDITIVE_SKIP)
    assert not skip_active(skip, alive, Scheme.GATED_SKIP)
    assert skip_active(skip, n2_dead, Scheme.GATED_SKIP)


def test_all_alive_gated_equals_vanilla(health_model):
    x = stream_rng(0, "data").normal(size=(6, 23)).astype(np.float32)
    a = gated_forward(health_model, all_alive(4), Scheme.GATED_SKIP, x)
    b = gated_forward(health_model, all_alive(4), Scheme.VANILLA, x)
    assert np.allclose(a, b, atol=1e-6)


def test_n2_failure_vanilla_absent_gated_present(health_model):
    x = stream_rng(0, "data").normal(size=(4, 23)).astype(np.float32)
    mask = mask_with_failed(4, [1])
    assert gated_forward(health_model, mask, Scheme.VANILLA, x) is None
    assert gated_forward(health_model, mask, Scheme.GATED_SKIP, x) is not None


def test_consecutive_failures_absent_for_every_scheme(health_model):
    x = stream_rng(0, "data").normal(size=(4, 23)).astype(np.float32)
    mask = mask_with_failed(4, [0, 1])
    for scheme in Scheme:
        assert gated_forward(health_model, mask, scheme, x) is None


@pytest.mark.parametrize("scheme", [Scheme.GATED_SKIP, Scheme.STATIC_SKIP,
                                    Scheme.ADDITIVE_SKIP])
def test_absent_iff_unreachable_exhaustive(health_model, scheme):
    x = stream_rng(0, "data").normal(size=(3, 23)).astype(np.float32)
    for bits in range(8):
        failed = [i for i in range(3) if bits & (1 << i)]
        mask = mask_with_failed(4, failed)
        absent = gated_forward(health_model, mask, scheme, x) is None
        assert absent == (not reachability(health_model, mask))


def test_vanilla_absent_iff_any_internal_failure(health_model):
    x = stream_rng(0, "data").normal(size=(3, 23)).astype(np.float32)
    for bits in range(8):
        failed = [i for i in range(3) if bits & (1 << i)]
        mask = mask_with_failed(4, failed)
        absent = gated_forward(health_model, mask, Scheme.VANILLA, x) is None
        assert absent == bool(failed)


def test_branching_join_sums_and_detours():
    # config-b: cloud adds both branches; the detoured branch falls back to
    # the skip payload when its node dies, and the join keeps working
    model = build_model(get_plan("config-b"), seed=4)
    x = stream_rng(1, "data").normal(size=(5, 6)).astype(np.float32)
    full = gated_forward(model, all_alive(4), Scheme.GATED_SKIP, x)
    detoured = gated_forward(model, mask_with_failed(4, [2]), Scheme.GATED_SKIP, x)
    assert full is not None and detoured is not None
    assert not np.allclose(full, detoured)
    # the untouched branch node (1) dying has no detour: join still present
    other = gated_forward(model, mask_with_failed(4, [1]), Scheme.GATED_SKIP, x)
    assert other is not None


def test_failout_mask_fixed_extremes(health_model):
    rng = stream_rng(0, "failout")
    zero = sample_failout_mask(FailoutConfig(mode="fixed", rate=0.0),
                               health_model, rng)
    assert zero.bits == (True,) * 4
    one = sample_failout_mask(FailoutConfig(mode="fixed", rate=1.0),
                              health_model, rng)
    assert one.bits == (False, False, False, True)
    assert one.origin == "failout-draw"


def test_failout_mask_frequency_three_sigma(health_model):
    # binomial bound: |freq - f| <= 3*sqrt(f(1-f)/N) per node
    draws = 100_000
    rate = 0.1
    rng = stream_rng(7, "failout")
    cfg = FailoutConfig(mode="fixed", rate=rate)
    dead = np.zeros(4)
    for _ in range(draws):
        mask = sample_failout_mask(cfg, health_model, rng)
        dead += [not b for b in mask.bits]
    bound = 3 * np.sqrt(rate * (1 - rate) / draws)
    for node in range(3):
        assert abs(dead[node] / draws - rate) <= bound
    assert dead[3] == 0  # cloud never dropped


def test_failout_match_failure_uses_setting(health_model):
    setting = failure_setting("hazardous", 4)
    cfg = FailoutConfig(mode="match-failure", setting=setting)
    rng = stream_rng(3, "failout")
    draws = 40_000
    dead = np.zeros(4)
    for _ in range(draws):
        dead += [not b for b in sample_failout_mask(cfg, health_model, rng).bits]
    for node, p in setting.prob_by_node(health_model).items():
        bound = 3 * np.sqrt(max(p * (1 - p), 1e-12) / draws)
        assert abs(dead[node] / draws - p) <= bound


def test_failout_config_validation():
    with pytest.raises(ConfigError):
        FailoutConfig(mode="fixed", rate=1.5)
    with pytest.raises(ConfigError):
        FailoutConfig(mode="match-failure")


def test_weights_one(health_model):
    assign_hyperconnection_weights(health_model, HyperWeightScheme("one"))
    assert all(e.weight == 1.0 for e in health_model.edges)


def test_weights_reliability():
    model = build_model(get_plan("health"), seed=0)
    setting = failure_setting("normal", 4)
    assign_hyperconnection_weights(model, HyperWeightScheme("reliability"),
                                   setting=setting)
    for e in model.edges:
        want = 1.0 if e.src == -1 else 1.0 - setting.prob_by_node(model)[e.src]
        assert e.weight == pytest.approx(want)
    # source with failure probability 0.08 carries weight 0.92
    n1_out = next(e for e in model.edges if e.src == 0)
    assert n1_out.weight == pytest.approx(0.92)


def test_weights_relative_reliability():
    model = build_model(get_plan("health"), seed=0)
    setting = failure_setting("normal", 4)
    assign_hyperconnection_weights(
        model, HyperWeightScheme("relative-reliability"), setting=setting)
    # node n3's feeders: simple from n2 (r=0.96) and skip from n1 (r=0.92)
    incoming = model.incoming(2)
    by_src = {e.src: e.weight for e in incoming}
    assert by_src[1] == pytest.approx(0.96 / 1.88)
    assert by_src[0] == pytest.approx(0.92 / 1.88)
    assert sum(by_src.values()) == pytest.approx(1.0)


def test_weights_uniform_random_range():
    model = build_model(get_plan("health"), seed=0)
    assign_hyperconnection_weights(
        model, HyperWeightScheme("uniform-random", 0.25, 0.75),
        rng=stream_rng(0, "weights"))
    assert all(0.25 <= e.weight <= 0.75 for e in model.edges)


def test_inference_scaling_off_uses_trained_weights():
    model = build_model(get_plan("health"), seed=0)
    setting = failure_setting("normal", 4)
    set_inference_scaling(model, setting, on=False)
    for e in model.edges:
        assert model.effective_weight(e) == e.weight


def test_inference_scaling_on_multiplies_by_survival():
    model = build_model(get_plan("health"), seed=0)
    setting = failure_setting("normal", 4)
    set_inference_scaling(model, setting, on=True)
    n1_out = next(e for e in model.edges if e.src == 0)
    assert model.effective_weight(n1_out) == pytest.approx(0.92 * n1_out.weight)
    input_edge = next(e for e in model.edges if e.src == -1)
    assert model.effective_weight(input_edge) == pytest.approx(input_edge.weight)


def test_selected_join_scales_linearly_with_common_weight():
    # selection never mixes payloads: a common factor on the weights feeding
    # one join scales that join's input by exactly that factor (gated path)
    from detournet.routing import run_graph
    model = build_model(get_plan("health"), seed=1)
    x = stream_rng(2, "data").normal(size=(2, 23)).astype(np.float32)
    mask = mask_with_failed(4, [1])
    cloud = model.cloud_id
    base = run_graph(model, mask, Scheme.GATED_SKIP, x).traces[cloud].x
    for e in model.edges:
        if e.dst == cloud:
            e.weight *= 2.0
    doubled = run_graph(model, mask, Scheme.GATED_SKIP, x).traces[cloud].x
    assert np.allclose(doubled, 2.0 * base, rtol=1e-6)
