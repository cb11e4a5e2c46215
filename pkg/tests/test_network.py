import json
import math

import numpy as np
import pytest

from extraction_lab.network import (
    AdamState,
    CheckpointError,
    EpochStats,
    Gradients,
    Network,
    NetworkSpec,
    TrainConfig,
    adam_step,
    backward,
    cross_entropy,
    forward,
    forward_batch,
    load_checkpoint,
    mean_cross_entropy,
    save_checkpoint,
    softmax,
    step_decay_lr,
    train_until_convergence,
    xavier_init,
)

from conftest import random_network


# ---------------------------------------------------------------- specs


def test_spec_validation():
    NetworkSpec(input_dim=1, hidden_sizes=(1,), num_classes=2)  # minimal ok
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=0, hidden_sizes=(4,), num_classes=2)
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=2, hidden_sizes=(), num_classes=2)
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=2, hidden_sizes=(4, 0), num_classes=3)
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=2, hidden_sizes=(4,), num_classes=1)
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=2, hidden_sizes=(4,), num_classes=2, activation="tanh")


def test_layer_dims_chain():
    spec = NetworkSpec(input_dim=5, hidden_sizes=(7, 3), num_classes=4)
    assert spec.layer_dims() == [(5, 7), (7, 3), (3, 4)]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=11, max_epochs=10)
    with pytest.raises(ValueError):
        TrainConfig(lr_gamma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_gamma=1.5)


# ---------------------------------------------------------------- init


def test_xavier_variance_matches_fan_sum():
    # fan_in=3, fan_out=5 -> per-entry variance 2/(3+5) = 0.25
    spec = NetworkSpec(input_dim=3, hidden_sizes=(5,), num_classes=2)
    draws = []
    for seed in range(200):
        net = xavier_init(spec, np.random.default_rng(seed))
        draws.append(net.weights[0].ravel())
    draws = np.concatenate(draws)  # 200 * 15 = 3000 entries
    assert abs(draws.var() - 0.25) / 0.25 < 0.10
    se = math.sqrt(0.25 / len(draws))
    assert abs(draws.mean()) < 3 * se


def test_xavier_unit_fans_give_unit_variance():
    spec = NetworkSpec(input_dim=1, hidden_sizes=(1,), num_classes=2)
    rng = np.random.default_rng(7)
    draws = np.array([xavier_init(spec, rng).weights[0][0, 0] for _ in range(100_000)])
    assert abs(draws.var() - 1.0) < 0.05
    assert abs(draws.mean()) < 3 * math.sqrt(1.0 / len(draws))


def test_xavier_biases_zero_and_shapes():
    spec = NetworkSpec(input_dim=4, hidden_sizes=(6, 3), num_classes=5)
    net = xavier_init(spec, np.random.default_rng(0))
    assert [w.shape for w in net.weights] == [(6, 4), (3, 6), (5, 3)]
    assert all(not b.any() for b in net.biases)


# ---------------------------------------------------------------- forward


def test_forward_zero_network_outputs_zero():
    spec = NetworkSpec(input_dim=3, hidden_sizes=(4,), num_classes=2)
    net = Network(spec, [np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
    out = forward(net, np.array([1.0, -2.0, 3.0]))
    assert not out.logits.any()
    assert not out.latent.any()


def test_forward_identity_chain():
    # single unit weights of 1, zero bias: input 2 -> latent [2] -> logits [2, 2]
    spec = NetworkSpec(input_dim=1, hidden_sizes=(1,), num_classes=2)
    net = Network(spec, [np.array([[1.0]]), np.array([[1.0], [1.0]])], [np.zeros(1), np.zeros(2)])
    out = forward(net, np.array([2.0]))
    assert out.latent.tolist() == [2.0]
    assert out.logits.tolist() == [2.0, 2.0]


def test_forward_relu_gates_latent():
    spec = NetworkSpec(input_dim=1, hidden_sizes=(2,), num_classes=2)
    w0 = np.array([[1.0], [-1.0]])
    net = Network(spec, [w0, np.ones((2, 2))], [np.zeros(2), np.zeros(2)])
    out = forward(net, np.array([3.0]))
    assert out.latent.tolist() == [3.0, 0.0]  # second unit clipped at zero


def test_forward_matches_hand_rolled_products(rng):
    net = random_network(rng, input_dim=4, hidden=(8,), num_classes=3)
    x = rng.standard_normal(4)
    h = np.maximum(net.weights[0] @ x + net.biases[0], 0.0)
    logits = net.weights[1] @ h + net.biases[1]
    out = forward(net, x)
    assert np.allclose(out.latent, h, atol=1e-12, rtol=0)
    assert np.allclose(out.logits, logits, atol=1e-12, rtol=0)


def test_forward_dimension_mismatch():
    net = random_network(np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(net, np.zeros(5))
    with pytest.raises(ValueError):
        forward_batch(net, np.zeros((3, 5)))


def test_forward_batch_agrees_with_single(rng):
    net = random_network(rng, input_dim=5, hidden=(7, 4), num_classes=3)
    x = rng.standard_normal((11, 5))
    logits, latents = forward_batch(net, x)
    for i in range(11):
        single = forward(net, x[i])
        assert np.allclose(logits[i], single.logits, rtol=1e-12, atol=1e-12)
        assert np.allclose(latents[i], single.latent, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------- softmax / loss


def test_softmax_uniform_on_equal_logits():
    assert np.allclose(softmax(np.zeros(3)), np.full(3, 1 / 3), atol=1e-15)


def test_softmax_extreme_logits_stay_finite():
    p = softmax(np.array([1000.0, 0.0, 0.0]))
    assert np.isfinite(p).all()
    assert p[0] > 1 - 1e-12
    assert (p > 0).all()


def test_softmax_known_values():
    # independent high-precision evaluation of e^x / sum(e^x) for [1, 2, 3]
    expected = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219]
    assert np.allclose(softmax(np.array([1.0, 2.0, 3.0])), expected, atol=1e-15, rtol=0)


def test_softmax_random_logits_normalized_and_positive(rng):
    for _ in range(500):
        n = int(rng.integers(2, 12))
        scale = 10.0 ** rng.uniform(-2, 3)  # magnitudes up to 1e3
        p = softmax(rng.standard_normal(n) * scale)
        assert abs(p.sum() - 1.0) < 1e-9
        assert (p > 0).all()


def test_softmax_floor_keeps_strict_positivity():
    # a 2000-gap would underflow exp to 0 without the floor
    p = softmax(np.array([0.0, -2000.0]))
    assert p[1] > 0


def test_cross_entropy_perfect_one_hot_is_zero():
    assert cross_entropy(np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0])) == 0.0


def test_cross_entropy_uniform_two_classes_is_ln2():
    value = cross_entropy(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert abs(value - math.log(2)) < 1e-9


def test_cross_entropy_hard_label_equals_standard_form(rng):
    p = softmax(rng.standard_normal(4))
    target = np.zeros(4)
    target[2] = 1.0
    assert abs(cross_entropy(p, target) - (-math.log(p[2] + 1e-12))) < 1e-12


def test_cross_entropy_non_negative_fuzz(rng):
    for _ in range(200):
        n = int(rng.integers(2, 8))
        p = softmax(rng.standard_normal(n) * 5)
        t = softmax(rng.standard_normal(n) * 5)
        assert cross_entropy(p, t) >= 0.0


# ---------------------------------------------------------------- gradients


def _flatten_params(net):
    return np.concatenate([p.ravel() for p in net.weights + net.biases])


def _finite_difference_gradients(net, x, targets, h=1e-5):
    grads = []
    for p in net.weights + net.biases:
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = mean_cross_entropy(net, x, targets)
            flat[i] = orig - h
            down = mean_cross_entropy(net, x, targets)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def test_backward_matches_finite_differences(rng):
    net = random_network(rng, input_dim=4, hidden=(8,), num_classes=3)
    x = rng.standard_normal((5, 4))
    targets = softmax(rng.standard_normal((5, 3)))
    _, analytic = backward(net, x, targets)
    numeric = _finite_difference_gradients(net, x, targets)
    a = np.concatenate([g.ravel() for g in analytic.weights + analytic.biases])
    f = np.concatenate([g.ravel() for g in numeric])
    rel = np.linalg.norm(a - f) / max(np.linalg.norm(a), np.linalg.norm(f), 1e-12)
    assert rel < 1e-4


def test_backward_zero_gradient_at_matched_targets(rng):
    # if targets equal the model's own softmax, the output delta vanishes
    net = random_network(rng)
    x = rng.standard_normal((6, 4))
    logits, _ = forward_batch(net, x)
    _, grads = backward(net, x, softmax(logits))
    norm = max(np.abs(g).max() for g in grads.weights + grads.biases)
    assert norm < 1e-6


def test_backward_mean_invariance_under_duplication(rng):
    net = random_network(rng)
    x = rng.standard_normal((1, 4))
    t = softmax(rng.standard_normal((1, 3)))
    _, single = backward(net, x, t)
    _, doubled = backward(net, np.vstack([x, x]), np.vstack([t, t]))
    for a, b in zip(single.weights + single.biases, doubled.weights + doubled.biases):
        assert np.allclose(a, b, atol=1e-15, rtol=0)


def test_backward_shape_errors(rng):
    net = random_network(rng)
    with pytest.raises(ValueError):
        backward(net, np.zeros((2, 5)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        backward(net, np.zeros((2, 4)), np.zeros((2, 2)))


# ---------------------------------------------------------------- optimizer


def test_adam_first_step_closed_form():
    spec = NetworkSpec(input_dim=1, hidden_sizes=(1,), num_classes=2)
    net = Network(
        spec,
        [np.array([[0.5]]), np.array([[0.3], [-0.2]])],
        [np.array([0.1]), np.array([0.0, 0.0])],
    )
    before = [p.copy() for p in net.weights + net.biases]
    grads = Gradients(
        weights=[np.array([[0.7]]), np.array([[-1.2], [0.4]])],
        biases=[np.array([2.0]), np.array([0.0, -3.0])],
    )
    state = AdamState.for_network(net)
    lr = 1e-3
    adam_step(net, grads, state, lr)
    assert state.step_count == 1
    # first step collapses to lr * g / (|g| + eps) per parameter
    for p0, p1, g in zip(
        before, net.weights + net.biases, grads.weights + grads.biases
    ):
        expected = p0 - lr * g / (np.abs(g) + 1e-8)
        # zero-gradient entries: update is exactly zero
        expected[g == 0] = p0[g == 0]
        assert np.allclose(p1, expected, atol=1e-10, rtol=0)


def test_adam_zero_gradient_is_identity(rng):
    net = random_network(rng)
    before = [p.copy() for p in net.weights + net.biases]
    state = AdamState.for_network(net)
    zero = Gradients(
        weights=[np.zeros_like(w) for w in net.weights],
        biases=[np.zeros_like(b) for b in net.biases],
    )
    for _ in range(5):
        adam_step(net, zero, state, 0.1)
    for p0, p1 in zip(before, net.weights + net.biases):
        assert np.array_equal(p0, p1)
    assert state.step_count == 5


def test_adam_updates_are_elementwise(rng):
    net = random_network(rng)
    state = AdamState.for_network(net)
    grads = Gradients(
        weights=[np.zeros_like(w) for w in net.weights],
        biases=[np.zeros_like(b) for b in net.biases],
    )
    grads.weights[0][0, 0] = 1.0  # only one coordinate has gradient
    before = [p.copy() for p in net.weights + net.biases]
    adam_step(net, grads, state, 1e-2)
    assert net.weights[0][0, 0] != before[0][0, 0]
    touched = np.zeros_like(net.weights[0], dtype=bool)
    touched[0, 0] = True
    assert np.array_equal(net.weights[0][~touched], before[0][~touched])
    for p0, p1 in zip(before[1:], (net.weights + net.biases)[1:]):
        assert np.array_equal(p0, p1)


def test_step_decay_schedule_values():
    for epoch in range(20):
        assert step_decay_lr(9e-4, 20, 0.95, epoch) == 9e-4
    assert abs(step_decay_lr(9e-4, 20, 0.95, 20) - 8.55e-4) < 1e-18
    assert step_decay_lr(9e-4, 20, 0.95, 40) == 9e-4 * 0.95**2


def test_step_decay_gamma_one_is_constant():
    assert all(step_decay_lr(1e-3, 5, 1.0, e) == 1e-3 for e in range(100))


def test_step_decay_non_increasing(rng):
    for _ in range(50):
        lr0 = float(10.0 ** rng.uniform(-5, -1))
        step = int(rng.integers(1, 10))
        gamma = float(rng.uniform(0.5, 1.0))
        values = [step_decay_lr(lr0, step, gamma, e) for e in range(60)]
        assert all(b <= a for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        step_decay_lr(1e-3, 5, 0.9, -1)


# ---------------------------------------------------------------- training


def _separable_two_class(rng, n=200):
    half = n // 2
    x = np.vstack(
        [
            rng.standard_normal((half, 2)) * 0.3 + np.array([2.0, 2.0]),
            rng.standard_normal((n - half, 2)) * 0.3 + np.array([-2.0, -2.0]),
        ]
    )
    labels = np.array([0] * half + [1] * (n - half))
    targets = np.zeros((n, 2))
    targets[np.arange(n), labels] = 1.0
    return x, labels, targets


def test_training_fits_separable_data(rng):
    x, labels, targets = _separable_two_class(rng)
    spec = NetworkSpec(input_dim=2, hidden_sizes=(8,), num_classes=2)
    net = xavier_init(spec, np.random.default_rng(0))
    cfg = TrainConfig(learning_rate=5e-3, batch_size=32, max_epochs=100, patience=100)
    history = train_until_convergence(net, x, targets, cfg, np.random.default_rng(1))
    logits, _ = forward_batch(net, x)
    accuracy = np.mean(np.argmax(logits, axis=1) == labels)
    assert accuracy >= 0.99
    assert len(history) <= 100


def test_training_without_validation_runs_all_epochs(rng):
    x = rng.standard_normal((10, 3))
    targets = softmax(rng.standard_normal((10, 2)))
    spec = NetworkSpec(input_dim=3, hidden_sizes=(4,), num_classes=2)
    net = xavier_init(spec, np.random.default_rng(0))
    cfg = TrainConfig(max_epochs=17, patience=1)
    history = train_until_convergence(net, x, targets, cfg, np.random.default_rng(2))
    assert len(history) == 17
    assert all(s.val_loss is None for s in history)


def test_training_identical_seeds_identical_weights(rng):
    x = rng.standard_normal((30, 3))
    targets = softmax(rng.standard_normal((30, 2)))
    spec = NetworkSpec(input_dim=3, hidden_sizes=(5,), num_classes=2)
    cfg = TrainConfig(max_epochs=12, patience=12, batch_size=8)

    runs = []
    for _ in range(2):
        net = xavier_init(spec, np.random.default_rng(5))
        train_until_convergence(net, x, targets, cfg, np.random.default_rng(6))
        runs.append([p.copy() for p in net.weights + net.biases])
    for a, b in zip(*runs):
        assert np.array_equal(a, b)


def test_early_stopping_restores_best_snapshot(rng):
    # validation labels are flipped relative to training, so validation loss
    # climbs as the model fits and patience must trip well before max_epochs
    x, _, targets = _separable_two_class(rng, n=60)
    flipped = targets[:, ::-1].copy()
    spec = NetworkSpec(input_dim=2, hidden_sizes=(6,), num_classes=2)
    net = xavier_init(spec, np.random.default_rng(3))
    cfg = TrainConfig(
        learning_rate=5e-3, batch_size=16, max_epochs=100, patience=5
    )
    history = train_until_convergence(
        net, x, targets, cfg, np.random.default_rng(4), val_x=x, val_targets=flipped
    )
    assert len(history) < 100  # ran out of patience
    best = min(s.val_loss for s in history)
    # restored weights reproduce the best recorded validation loss
    assert mean_cross_entropy(net, x, flipped) == best


def test_loss_decreases_under_full_batch_adam(rng):
    x, _, targets = _separable_two_class(rng, n=16)
    spec = NetworkSpec(input_dim=2, hidden_sizes=(4,), num_classes=2)
    net = xavier_init(spec, np.random.default_rng(9))
    state = AdamState.for_network(net)
    loss0, grads = backward(net, x, targets)
    for _ in range(200):
        _, grads = backward(net, x, targets)
        adam_step(net, grads, state, 1e-2)
    loss_end, _ = backward(net, x, targets)
    assert loss_end < loss0


def test_batch_size_clamped_to_dataset(rng):
    x = rng.standard_normal((3, 2))
    targets = softmax(rng.standard_normal((3, 2)))
    spec = NetworkSpec(input_dim=2, hidden_sizes=(3,), num_classes=2)
    net = xavier_init(spec, np.random.default_rng(0))
    cfg = TrainConfig(batch_size=64, max_epochs=2, patience=1)
    history = train_until_convergence(net, x, targets, cfg, np.random.default_rng(1))
    assert len(history) == 2


def test_empty_training_set_rejected():
    spec = NetworkSpec(input_dim=2, hidden_sizes=(3,), num_classes=2)
    net = xavier_init(spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        train_until_convergence(
            net, np.zeros((0, 2)), np.zeros((0, 2)), TrainConfig(), np.random.default_rng(0)
        )


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_bitwise(tmp_path, rng):
    net = random_network(rng, input_dim=5, hidden=(6, 4), num_classes=3)
    path = tmp_path / "net.json"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == net.spec
    for a, b in zip(net.weights + net.biases, loaded.weights + loaded.biases):
        assert np.array_equal(a, b)


def test_checkpoint_same_training_same_bytes(tmp_path, rng):
    x = rng.standard_normal((20, 3))
    targets = softmax(rng.standard_normal((20, 2)))
    spec = NetworkSpec(input_dim=3, hidden_sizes=(4,), num_classes=2)
    cfg = TrainConfig(max_epochs=8, patience=8)
    blobs = []
    for run in range(2):
        net = xavier_init(spec, np.random.default_rng(11))
        train_until_convergence(net, x, targets, cfg, np.random.default_rng(12))
        path = tmp_path / f"run{run}.json"
        save_checkpoint(net, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_checkpoint_version_and_format_errors(tmp_path, rng):
    net = random_network(rng)
    path = tmp_path / "net.json"
    save_checkpoint(net, path)

    doc = json.loads(path.read_text())
    doc["version"] = "v2"
    bad = tmp_path / "bad_version.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad)

    not_json = tmp_path / "not_json.json"
    not_json.write_text("{nope")
    with pytest.raises(CheckpointError, match="valid checkpoint"):
        load_checkpoint(not_json)

    doc = json.loads(path.read_text())
    doc["weights"][0] = doc["weights"][0][:-1]
    truncated = tmp_path / "short.json"
    truncated.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="length"):
        load_checkpoint(truncated)

    doc = json.loads(path.read_text())
    doc["weights"] = doc["weights"][:-1]
    missing = tmp_path / "missing_layer.json"
    missing.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="layer count"):
        load_checkpoint(missing)
