"""Minimal feedforward network engine.

Dense layers with ReLU-family activations, a linear output map, four
classification losses evaluated on softmax outputs, and mini-batch Adam/SGD
training with full backprop. Loss values are summed over samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError, TrainingDivergedError
from .linalg import Matrix, check_finite

LOSS_KINDS = ("softmax_cross_entropy", "mean_square_error", "poisson", "huber")

_LOSS_ALIASES = {
    "ce": "softmax_cross_entropy",
    "cross_entropy": "softmax_cross_entropy",
    "softmax_cross_entropy": "softmax_cross_entropy",
    "mse": "mean_square_error",
    "mean_square_error": "mean_square_error",
    "poisson": "poisson",
    "huber": "huber",
}

ACTIVATION_KINDS = ("relu", "leaky_relu", "identity")


@dataclass(frozen=True)
class Activation:
    kind: str
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.kind!r}")

    def apply(self, z: Matrix) -> Matrix:
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, z, self.slope * z)
        return z

    def derivative(self, z: Matrix) -> Matrix:
        if self.kind == "relu":
            return (z > 0.0).astype(np.float64)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, 1.0, self.slope)
        return np.ones_like(z)


@dataclass(frozen=True)
class Loss:
    kind: str
    delta: float = 1.0  # huber threshold, ignored elsewhere

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber" and self.delta <= 0.0:
            raise ValueError("huber delta must be > 0")


def make_loss(name: str, delta: float = 1.0) -> Loss:
    """Resolve a loss by name; accepts the short aliases ce and mse."""
    kind = _LOSS_ALIASES.get(name.lower())
    if kind is None:
        raise ValueError(f"unknown loss {name!r}, expected one of {sorted(set(_LOSS_ALIASES))}")
    return Loss(kind, delta=delta)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    weight_decay: float = 0.0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Dataset:
    inputs: Matrix   # J x P
    targets: Matrix  # J x Q
    one_hot: bool = True

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ShapeError(
                f"inputs have {self.inputs.shape[0]} rows but targets have {self.targets.shape[0]}"
            )
        check_finite(self.inputs, "inputs")
        check_finite(self.targets, "targets")
        if self.one_hot:
            sums = self.targets.sum(axis=1)
            if self.targets.shape[0] and not np.allclose(sums, 1.0, atol=1e-9):
                raise ValueError("one-hot target rows must sum to 1")

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class Layer:
    weight: Matrix  # out x in
    bias: np.ndarray  # out
    activation: Activation


@dataclass
class MlpModel:
    layers: list[Layer]
    output_weight: Matrix    # Q x n
    output_bias: np.ndarray  # Q

    def __post_init__(self):
        widths = [layer.weight.shape for layer in self.layers]
        for prev, cur in zip(widths, widths[1:]):
            if prev[0] != cur[1]:
                raise ShapeError(f"layer widths do not chain: {prev} then {cur}")
        if self.layers and self.layers[-1].weight.shape[0] != self.output_weight.shape[1]:
            raise ShapeError(
               f"last hidden width {self.layers[-1].weight.shape[0]} != "
               f"output weight width {self.output_weight.shape[1]}"
            )
        if self.output_weight.shape[0] != self.output_bias.shape[0]:
            raise ShapeError("output bias length must match output weight rows")
        for layer in self.layers:
            check_finite(layer.weight, "layer weight")
            check_finite(layer.bias, "layer bias")
        check_finite(self.output_weight, "output weight")
        check_finite(self.output_bias, "output bias")

    @property
    def feature_width(self) -> int:
        return self.output_weight.shape[1]

    @property
    def input_width(self) -> int:
        return self.layers[0].weight.shape[1] if self.layers else self.output_weight.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.output_weight.shape[0]


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    eval_loss: float | None = None
    eval_accuracy: float | None = None


def make_mlp(input_dim, hidden_widths, n_outputs, activation="relu", leaky_slope=0.01, seed=0):
    """Build an MLP with Gaussian 1/sqrt(fan_in) weights and zero biases."""
    if isinstance(activation, str):
        activation = Activation(activation, slope=leaky_slope)
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for width in hidden_widths:
        w = rng.standard_normal((width, fan_in)) / np.sqrt(fan_in)
        layers.append(Layer(w, np.zeros(width), activation))
        fan_in = width
    output_weight = rng.standard_normal((n_outputs, fan_in)) / np.sqrt(fan_in)
    return MlpModel(layers, output_weight, np.zeros(n_outputs))


def _forward_cached(model: MlpModel, inputs: Matrix):
    """Forward pass keeping pre-activations and activations for backprop."""
    if inputs.shape[1] != model.input_width:
        raise ShapeError(f"inputs have width {inputs.shape[1]}, model expects {model.input_width}")
    acts = [inputs]
    pre = []
    h = inputs
    for layer in model.layers:
        z = h @ layer.weight.T + layer.bias
        h = layer.activation.apply(z)
        pre.append(z)
        acts.append(h)
    logits = h @ model.output_weight.T + model.output_bias
    return logits, pre, acts


def forward(model: MlpModel, inputs: Matrix):
    """Return (logits, features) where features are the last hidden activations."""
    logits, _, acts = _forward_cached(model, inputs)
    return logits, acts[-1]


def extract_features(model: MlpModel, inputs: Matrix) -> Matrix:
    """Feature matrix at the second-to-last layer, one row per sample."""
    return forward(model, inputs)[1]


def softmax(logits: Matrix) -> Matrix:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: Matrix) -> Matrix:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_loss_args(logits: Matrix, targets: Matrix):
    if logits.shape != targets.shape:
        raise ShapeError(f"logits shape {logits.shape} != targets shape {targets.shape}")
    if not np.isfinite(logits).all():
        raise NonFiniteError("logits contain NaN or Inf")


def loss_value(loss: Loss, logits: Matrix, targets: Matrix) -> float:
    """Total loss summed over samples. Non-CE losses act on softmax outputs."""
    _check_loss_args(logits, targets)
    if loss.kind == "softmax_cross_entropy":
        return float(-(targets * _log_softmax(logits)).sum())
    p = softmax(logits)
    if loss.kind == "mean_square_error":
        return float(0.5 * np.square(p - targets).sum())
    if loss.kind == "poisson":
        return float((p - targets * np.log(p + 1e-12)).sum())
    r = p - targets
    quad = np.abs(r) <= loss.delta
    cells = np.where(quad, 0.5 * r * r, loss.delta * (np.abs(r) - 0.5 * loss.delta))
    return float(cells.sum())


def _softmax_backward(p: Matrix, dp: Matrix) -> Matrix:
    inner = (dp * p).sum(axis=1, keepdims=True)
    return p * (dp - inner)


def loss_grad(loss: Loss, logits: Matrix, targets: Matrix) -> Matrix:
    """Gradient of the summed loss with respect to the logits."""
    _check_loss_args(logits, targets)
    p = softmax(logits)
    if loss.kind == "softmax_cross_entropy":
        # exact also for non-one-hot rows: d/dz of sum_k t_k (lse(z) - z_k)
        return targets.sum(axis=1, keepdims=True) * p - targets
    if loss.kind == "mean_square_error":
        dp = p - targets
    elif loss.kind == "poisson":
        dp = 1.0 - targets / (p + 1e-12)
    else:
        dp = np.clip(p - targets, -loss.delta, loss.delta)
    return _softmax_backward(p, dp)


def accuracy(logits: Matrix, targets: Matrix) -> float:
    """Fraction of rows whose argmax matches; ties go to the lowest index."""
    if logits.shape[0] == 0:
        raise ValueError("cannot compute accuracy on an empty dataset")
    return float(np.mean(np.argmax(logits, axis=1) == np.argmax(targets, axis=1)))


def evaluate(model: MlpModel, inputs: Matrix, targets: Matrix, loss: Loss):
    """Return (total loss, accuracy) of the model on the given data."""
    if inputs.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits, _ = forward(model, inputs)
    return loss_value(loss, logits, targets), accuracy(logits, targets)


class _AdamState:
    def __init__(self, shapes, beta1, beta2, eps):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, grads):
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** self.t)
            out.append(m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def _backward(model: MlpModel, dlogits: Matrix, pre, acts):
    """Gradients for all layer weights/biases and the output weight."""
    grads_w = [None] * len(model.layers)
    grads_b = [None] * len(model.layers)
    grad_out = dlogits.T @ acts[-1]
    delta = dlogits @ model.output_weight
    for i in range(len(model.layers) - 1, -1, -1):
        dz = delta * model.layers[i].activation.derivative(pre[i])
        grads_w[i] = dz.T @ acts[i]
        grads_b[i] = dz.sum(axis=0)
        delta = dz @ model.layers[i].weight
    return grads_w, grads_b, grad_out


def train_base(model: MlpModel, data: Dataset, loss: Loss, cfg: TrainConfig,
               eval_data: Dataset | None = None):
    """Train all layer parameters and the output weight in place.

    The output bias is left untouched: the output map must stay purely linear
    for the feature-lift loss-preservation chain to hold downstream.

    Returns the model and a per-epoch curve; entry 0 is the pre-training loss.
    Mini-batch shuffling is driven by cfg.seed, so identical configs give
    bit-identical curves.
    """
    J = len(data)
    if J == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    batch = min(cfg.batch_size, J)

    def epoch_stats(epoch):
        try:
            train_loss = loss_value(loss, forward(model, data.inputs)[0], data.targets)
            if eval_data is not None:
                ev_loss, ev_acc = evaluate(model, eval_data.inputs, eval_data.targets, loss)
        except NonFiniteError:
            raise TrainingDivergedError("training produced non-finite logits", epoch) from None
        if not np.isfinite(train_loss):
            raise TrainingDivergedError("training loss is not finite", epoch)
        if eval_data is None:
            return EpochStats(epoch, train_loss)
        return EpochStats(epoch, train_loss, ev_loss, ev_acc)

    params = [layer.weight for layer in model.layers]
    params += [layer.bias for layer in model.layers]
    params.append(model.output_weight)
    adam = None
    if cfg.optimizer == "adam":
        adam = _AdamState([p.shape for p in params], cfg.beta1, cfg.beta2, cfg.adam_eps)

    curve = [epoch_stats(0)]
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(J)
        for start in range(0, J, batch):
            idx = perm[start:start + batch]
            logits, pre, acts = _forward_cached(model, data.inputs[idx])
            try:
                dlogits = loss_grad(loss, logits, data.targets[idx])
            except NonFiniteError:
                raise TrainingDivergedError("training produced non-finite logits",
                                            epoch) from None
            grads_w, grads_b, grad_out = _backward(model, dlogits, pre, acts)
            if cfg.weight_decay > 0.0:
                grads_w = [g + cfg.weight_decay * layer.weight
                           for g, layer in zip(grads_w, model.layers)]
                grad_out = grad_out + cfg.weight_decay * model.output_weight
            grads = grads_w + grads_b + [grad_out]
            steps = adam.step(grads) if adam is not None else grads
            for p, s in zip(params, steps):
                p -= cfg.learning_rate * s
        curve.append(epoch_stats(epoch))
    return model, curve
