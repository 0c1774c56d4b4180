import math

import numpy as np
import pytest

from conftest import one_hot, random_one_hot
from redense.errors import NonFiniteError, ShapeError, TrainingDivergedError
from redense.nn import (Activation, Dataset, Layer, Loss, MlpModel,
                        TrainConfig, accuracy, evaluate, extract_features,
                        forward, loss_grad, loss_value, make_loss, make_mlp,
                        softmax, train_base)

ALL_LOSSES = [Loss("softmax_cross_entropy"), Loss("mean_square_error"),
              Loss("poisson"), Loss("huber", delta=1.0), Loss("huber", delta=0.25)]


def fd_gradient(loss, logits, targets, h=1e-5):
    """Central-difference gradient of the summed loss w.r.t. each logit."""
    grad = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            up = logits.copy()
            up[i, j] += h
            down = logits.copy()
            down[i, j] -= h
            grad[i, j] = (loss_value(loss, up, targets) - loss_value(loss, down, targets)) / (2 * h)
    return grad


def straight_line_forward(model, x):
    """Independent evaluator: unrolled loops, no shared code with forward()."""
    h = x
    for layer in model.layers:
        z = np.empty((h.shape[0], layer.weight.shape[0]))
        for r in range(h.shape[0]):
            for o in range(layer.weight.shape[0]):
                z[r, o] = sum(h[r, k] * layer.weight[o, k] for k in range(h.shape[1]))
                z[r, o] += layer.bias[o]
        if layer.activation.kind == "relu":
            h = np.where(z > 0, z, 0.0)
        elif layer.activation.kind == "leaky_relu":
            h = np.where(z > 0, z, layer.activation.slope * z)
        else:
            h = z
    logits = np.empty((h.shape[0], model.output_weight.shape[0]))
    for r in range(h.shape[0]):
        for o in range(model.output_weight.shape[0]):
            logits[r, o] = sum(h[r, k] * model.output_weight[o, k] for k in range(h.shape[1]))
            logits[r, o] += model.output_bias[o]
    return logits, h


def test_forward_identity_relu_layer():
    model = MlpModel([Layer(np.eye(2), np.zeros(2), Activation("relu"))],
                     np.eye(2), np.zeros(2))
    logits, feats = forward(model, np.array([[1.0, -1.0]]))
    assert np.array_equal(feats, [[1.0, 0.0]])
    assert np.array_equal(logits, [[1.0, 0.0]])


def test_forward_zero_weights_gives_bias():
    model = MlpModel([Layer(np.zeros((3, 2)), np.zeros(3), Activation("relu"))],
                     np.zeros((4, 3)), np.array([1.0, -2.0, 0.5, 0.0]))
    logits, _ = forward(model, np.random.default_rng(0).standard_normal((6, 2)))
    assert np.array_equal(logits, np.tile([1.0, -2.0, 0.5, 0.0], (6, 1)))


def test_forward_matches_straight_line_evaluator(rng):
    model = make_mlp(5, [7, 4], 3, activation="leaky_relu", leaky_slope=0.1, seed=9)
    model.output_bias[:] = rng.standard_normal(3)
    x = rng.standard_normal((6, 5))
    logits, feats = forward(model, x)
    ref_logits, ref_feats = straight_line_forward(model, x)
    assert np.allclose(logits, ref_logits, atol=1e-12)
    assert np.allclose(feats, ref_feats, atol=1e-12)


def test_forward_width_mismatch():
    model = make_mlp(5, [4], 3, seed=0)
    with pytest.raises(ShapeError):
        forward(model, np.zeros((2, 6)))


def test_ce_symmetric_two_class():
    value = loss_value(Loss("softmax_cross_entropy"), np.array([[0.0, 0.0]]),
                       np.array([[1.0, 0.0]]))
    assert value == pytest.approx(math.log(2.0), rel=1e-12)


def test_ce_gradient_softmax_minus_target():
    grad = loss_grad(Loss("softmax_cross_entropy"), np.array([[0.0, 0.0]]),
                     np.array([[1.0, 0.0]]))
    assert np.allclose(grad, [[-0.5, 0.5]], atol=1e-15)


def test_huber_branches():
    # quadratic branch: 0.5 * 0.5^2 = 0.125 ; linear branch: 1 * (2 - 0.5) = 1.5
    def h(r, delta=1.0):
        r = np.asarray(r)
        return float(np.where(np.abs(r) <= delta, 0.5 * r * r,
                              delta * (np.abs(r) - 0.5 * delta)).sum())
    assert h([0.5]) == 0.125
    assert h([2.0]) == 1.5
    # the public op applies the same cell formula to softmax(logits) - targets:
    # two-class zero logits against [1, 0] leaves residuals [-0.5, 0.5]
    value = loss_value(Loss("huber", delta=1.0), np.array([[0.0, 0.0]]),
                       np.array([[1.0, 0.0]]))
    assert value == pytest.approx(0.25, rel=1e-15)


def test_poisson_hand_value():
    # p = [0.5, 0.5], t = [1, 0]: (0.5 - ln 0.5) + 0.5
    value = loss_value(Loss("poisson"), np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert value == pytest.approx(1.0 - math.log(0.5), abs=1e-6)


def test_mse_zero_grad_at_perfect_prediction():
    logits = np.array([[0.3, -0.7, 1.1]])
    targets = softmax(logits)
    grad = loss_grad(Loss("mean_square_error"), logits, targets)
    assert np.abs(grad).max() < 1e-15


@pytest.mark.parametrize("loss", ALL_LOSSES, ids=lambda l: f"{l.kind}-{l.delta}")
def test_loss_grad_matches_finite_differences(loss, rng):
    for _ in range(6):
        j, q = int(rng.integers(1, 9)), int(rng.integers(2, 6))
        logits = rng.standard_normal((j, q))
        targets = random_one_hot(rng, j, q)
        analytic = loss_grad(loss, logits, targets)
        fd = fd_gradient(loss, logits, targets)
        err = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-4


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        loss_value(Loss("softmax_cross_entropy"), np.zeros((2, 3)), np.zeros((2, 4)))


def test_loss_rejects_non_finite_logits():
    with pytest.raises(NonFiniteError):
        loss_value(Loss("poisson"), np.array([[np.inf, 0.0]]), np.array([[1.0, 0.0]]))


def test_softmax_rows_sum_to_one(rng):
    p = softmax(rng.standard_normal((20, 7)) * 10)
    assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12


def test_ce_log_sum_exp_shift_stability(rng):
    logits = rng.standard_normal((10, 4))
    targets = random_one_hot(rng, 10, 4)
    ce = Loss("softmax_cross_entropy")
    base = loss_value(ce, logits, targets)
    shifted = loss_value(ce, logits + 1000.0, targets)
    assert abs(base - shifted) < 1e-6


def test_make_loss_aliases():
    assert make_loss("ce").kind == "softmax_cross_entropy"
    assert make_loss("mse").kind == "mean_square_error"
    assert make_loss("huber", delta=0.5).delta == 0.5
    with pytest.raises(ValueError):
        make_loss("hinge")
    with pytest.raises(ValueError):
        Loss("huber", delta=0.0)


def _blobs(j=80, classes=2, noise=0.3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(j) % classes
    centers = np.array([[2.0 * np.cos(2 * np.pi * k / classes),
                         2.0 * np.sin(2 * np.pi * k / classes)] for k in range(classes)])
    inputs = centers[labels] + noise * rng.standard_normal((j, 2))
    return Dataset(inputs, one_hot(labels, classes))


def test_train_base_reaches_separable_accuracy():
    data = _blobs(j=60, noise=0.15, seed=3)
    model = make_mlp(2, [8], 2, seed=3)
    cfg = TrainConfig(learning_rate=5e-3, epochs=200, batch_size=16, seed=3)
    model, curve = train_base(model, data, Loss("softmax_cross_entropy"), cfg)
    _, acc = evaluate(model, data.inputs, data.targets, Loss("softmax_cross_entropy"))
    assert acc == 1.0
    assert len(curve) == 201


def test_train_base_zero_epochs_is_identity():
    data = _blobs()
    model = make_mlp(2, [4], 2, seed=1)
    before = [p.copy() for p in [model.layers[0].weight, model.layers[0].bias,
                                 model.output_weight]]
    model, curve = train_base(model, data, Loss("softmax_cross_entropy"),
                              TrainConfig(epochs=0, seed=1))
    assert np.array_equal(model.layers[0].weight, before[0])
    assert np.array_equal(model.layers[0].bias, before[1])
    assert np.array_equal(model.output_weight, before[2])
    assert len(curve) == 1


def test_train_base_seed_determinism():
    data = _blobs(seed=7)
    runs = []
    for _ in range(2):
        model = make_mlp(2, [6], 2, seed=11)
        model, curve = train_base(model, data, Loss("mean_square_error"),
                                  TrainConfig(learning_rate=1e-2, epochs=25,
                                              batch_size=8, seed=11))
        runs.append((model, [c.train_loss for c in curve]))
    assert np.array_equal(runs[0][0].output_weight, runs[1][0].output_weight)
    assert np.array_equal(runs[0][0].layers[0].weight, runs[1][0].layers[0].weight)
    assert runs[0][1] == runs[1][1]


def test_train_base_convex_head_sgd_monotone():
    # no hidden layers: summed CE in the output weight is convex
    data = _blobs(j=50, noise=0.4, seed=5)
    model = make_mlp(2, [], 2, seed=5)
    cfg = TrainConfig(learning_rate=1e-3, epochs=50, batch_size=50,
                      optimizer="sgd", weight_decay=0.0, seed=5)
    _, curve = train_base(model, data, Loss("softmax_cross_entropy"), cfg)
    losses = [c.train_loss for c in curve]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_train_base_divergence_reports_epoch():
    data = _blobs(seed=2)
    model = make_mlp(2, [4], 2, seed=2)
    cfg = TrainConfig(learning_rate=1e160, epochs=10, batch_size=80,
                      optimizer="sgd", seed=2)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDivergedError) as err:
            train_base(model, data, Loss("mean_square_error"), cfg)
    assert err.value.epoch >= 1


def test_train_base_output_bias_untouched():
    data = _blobs(seed=4)
    model = make_mlp(2, [4], 2, seed=4)
    model.output_bias[:] = [0.25, -0.25]
    train_base(model, data, Loss("softmax_cross_entropy"),
               TrainConfig(epochs=3, seed=4))
    assert np.array_equal(model.output_bias, [0.25, -0.25])


def test_extract_features_matches_forward(rng):
    model = make_mlp(3, [5, 4], 2, seed=8)
    x = rng.standard_normal((7, 3))
    assert np.array_equal(extract_features(model, x), forward(model, x)[1])


def test_extract_features_identity_layer_negative_inputs():
    model = MlpModel([Layer(np.eye(3), np.zeros(3), Activation("relu"))],
                     np.ones((2, 3)), np.zeros(2))
    feats = extract_features(model, -np.abs(np.random.default_rng(0).standard_normal((4, 3))))
    assert np.array_equal(feats, np.zeros((4, 3)))


def test_evaluate_perfect_logits():
    targets = one_hot([0, 1, 2, 1], 3)
    assert accuracy(targets.copy(), targets) == 1.0


def test_evaluate_tie_break_to_lowest_index():
    targets = one_hot([0, 0, 0], 3)
    assert accuracy(np.zeros((3, 3)), targets) == 1.0


def test_accuracy_against_brute_force(rng):
    logits = rng.standard_normal((40, 3))
    targets = random_one_hot(rng, 40, 3)
    hits = 0
    for row in range(40):
        best, best_v = 0, logits[row, 0]
        for k in range(1, 3):
            if logits[row, k] > best_v:
                best, best_v = k, logits[row, k]
        if targets[row, best] == 1.0:
            hits += 1
    assert accuracy(logits, targets) == hits / 40


def test_evaluate_empty_dataset():
    model = make_mlp(2, [3], 2, seed=0)
    with pytest.raises(ValueError):
        evaluate(model, np.zeros((0, 2)), np.zeros((0, 2)), Loss("softmax_cross_entropy"))


def test_dataset_validations():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([[0.5, 0.2], [1.0, 0.0]]))
    with pytest.raises(NonFiniteError):
        Dataset(np.array([[np.nan, 0.0]]), np.array([[1.0, 0.0]]))


def test_train_config_validations():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
