"""Training loop: learning sanity, determinism, failout gradient isolation."""

import numpy as np
import pytest

from detournet import ConfigError, FailoutConfig, Scheme, build_model, train
from detournet.datasets import generate_blobs
from detournet.nn import cross_entropy, make_optimizer
from detournet.routing import run_graph
from detournet.topology import all_alive, mask_with_failed
from detournet.training import accuracy, graph_backward
from conftest import mini_plan


def test_vanilla_learns_separable_blobs():
    data = generate_blobs(features=4, classes=2, samples_per_class=80,
                          spread=0.5, seed=1)
    model = build_model(mini_plan(width=8, input_dim=4, classes=2), seed=1)
    train(model, data.x_train, data.y_train, Scheme.VANILLA,
          FailoutConfig(mode="off"), epochs=50, seed=1, batch_size=32)
    assert accuracy(model, data.x_train, data.y_train, Scheme.VANILLA) >= 0.99


def test_same_seed_identical_weights():
    data = generate_blobs(features=4, classes=3, samples_per_class=40,
                          spread=1.0, seed=2)

    def run():
        model = build_model(mini_plan(), seed=5)
        train(model, data.x_train, data.y_train, Scheme.GATED_SKIP,
              FailoutConfig(mode="fixed", rate=0.2), epochs=4, seed=5,
              batch_size=16)
        return model

    a, b = run(), run()
    for slot, arr in a.param_slots().items():
        assert np.array_equal(arr, b.param_slots()[slot]), slot


def test_failed_out_node_params_bit_identical():
    model = build_model(mini_plan(), seed=3)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 4)).astype(np.float32)
    y = rng.integers(0, 3, size=8)
    mask = mask_with_failed(3, [0])  # n1 dropped this batch
    before = {s: a.copy() for s, a in model.param_slots().items()}

    run = run_graph(model, mask, Scheme.GATED_SKIP, x, collect_cache=True)
    loss, grads = graph_backward(model, run, y)
    assert not any(slot[0] == "node" and slot[1] == 0 for slot in grads)
    opt = make_optimizer("adam", 0.01)
    opt.step(model.param_slots(), grads)
    for slot, arr in model.param_slots().items():
        if slot[0] == "node" and slot[1] == 0:
            assert np.array_equal(arr, before[slot])
        elif slot in grads:
            assert not np.array_equal(arr, before[slot])


def test_detour_projection_receives_gradient():
    # n1 down forces input->n2 through the projected skip; it must train
    model = build_model(mini_plan(), seed=3)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(8, 4)).astype(np.float32)
    y = rng.integers(0, 3, size=8)
    run = run_graph(model, mask_with_failed(3, [0]), Scheme.GATED_SKIP, x,
                    collect_cache=True)
    _, grads = graph_backward(model, run, y)
    proj_slots = [s for s in grads if s[0] == "edge"]
    assert proj_slots


def test_scheme_failout_consistency():
    model = build_model(mini_plan(), seed=0)
    x = np.zeros((4, 4), np.float32)
    y = np.zeros(4, np.int64)
    with pytest.raises(ConfigError):
        train(model, x, y, Scheme.VANILLA, FailoutConfig(mode="fixed", rate=0.1),
              epochs=1, seed=0)
    with pytest.raises(ConfigError):
        train(model, x, y, Scheme.GATED_SKIP, FailoutConfig(mode="off"),
              epochs=1, seed=0)
    with pytest.raises(ConfigError):
        train(model, x, y, Scheme.STATIC_SKIP, FailoutConfig(mode="fixed", rate=0.1),
              epochs=1, seed=0)


def test_severed_batches_are_skipped_without_updates():
    model = build_model(mini_plan(), seed=4)
    before = {s: a.copy() for s, a in model.param_slots().items()}
    rng = np.random.default_rng(2)
    x = rng.normal(size=(20, 4)).astype(np.float32)
    y = rng.integers(0, 3, size=20)
    history = train(model, x, y, Scheme.GATED_SKIP,
                    FailoutConfig(mode="fixed", rate=1.0), epochs=2, seed=4,
                    batch_size=10)
    assert history.skipped_batches == 4
    for slot, arr in model.param_slots().items():
        assert np.array_equal(arr, before[slot])


def test_empty_dataset_rejected():
    model = build_model(mini_plan(), seed=0)
    with pytest.raises(ConfigError):
        train(model, np.zeros((0, 4), np.float32), np.zeros(0, np.int64),
              Scheme.VANILLA, FailoutConfig(mode="off"), epochs=1, seed=0)


def test_graph_backward_matches_finite_differences():
    # end-to-end oracle over the whole gated graph, detours active
    model = build_model(mini_plan(), seed=3, dtype=np.float64)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, size=6)
    for failed in ([], [0], [1]):
        mask = mask_with_failed(3, failed)
        run = run_graph(model, mask, Scheme.GATED_SKIP, x, collect_cache=True)
        _, grads = graph_backward(model, run, y)
        slots = model.param_slots()
        h = 1e-6
        for slot, g in grads.items():
            flat = slots[slot].reshape(-1)
            gflat = np.asarray(g).reshape(-1)
            for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + h
                up = cross_entropy(
                    run_graph(model, mask, Scheme.GATED_SKIP, x,
                              collect_cache=True).logits, y)[0]
                flat[i] = orig - h
                down = cross_entropy(
                    run_graph(model, mask, Scheme.GATED_SKIP, x,
                              collect_cache=True).logits, y)[0]
                flat[i] = orig
                fd = (up - down) / (2 * h)
                assert abs(fd - gflat[i]) <= 1e-4 * max(1.0, abs(fd))


def test_history_records_every_epoch():
    data = generate_blobs(features=4, classes=3, samples_per_class=30,
                          spread=1.0, seed=9)
    model = build_model(mini_plan(), seed=9)
    history = train(model, data.x_train, data.y_train, Scheme.ADDITIVE_SKIP,
                    FailoutConfig(mode="fixed", rate=0.1), epochs=3, seed=9,
                    batch_size=16, val=(data.x_val, data.y_val))
    assert len(history.epochs) == 3
    assert all({"epoch", "loss", "train_accuracy", "val_accuracy"}
               <= set(row) for row in history.epochs)
