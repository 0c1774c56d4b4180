"""Random ReLU lifting layer with norm-constrained head retraining.

The construction: features y (J x n) are projected through a frozen Gaussian
matrix R (m x n, m >= n) and split by sign into nonnegative halves,

    lift(y) = [max(yR', 0) | max(-yR', 0)]   (J x 2m),

which loses no information because max(z,0) - max(-z,0) = z. The head is a
single trainable matrix O (Q x 2m) constrained to the Frobenius ball
|O|_F <= epsilon. Choosing

    O0 = [P | -P]  with  P = Ohat pinv(R),   epsilon = |O0|_F,

makes O0 feasible and reproduces the original head exactly:
O0 lift(y)' = y (pinv(R) R)' Ohat' = y Ohat' for full-column-rank R. Training
therefore starts at the old loss, and returning the best iterate seen keeps
the final training loss at or below it, unconditionally.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConstraintError, ShapeError, TrainingDivergedError
from .linalg import (Matrix, as_matrix, check_finite, condition_number,
                     frobenius_norm, pinv, sample_gaussian)
from .nn import Loss, TrainConfig, accuracy, loss_grad, loss_value

log = logging.getLogger(__name__)

TRAIN_LOSS = Loss("softmax_cross_entropy")

# Beyond this, pinv(R)R drifts far enough from identity to erode the
# old-loss reproduction; build() resamples instead.
MAX_CONDITION = 1e8
_RESAMPLE_ATTEMPTS = 8


@dataclass
class RedenseLayer:
    n: int
    m: int
    R: Matrix        # m x n, frozen after construction
    epsilon: float
    O: Matrix        # Q x 2m, trainable
    seed: int

    def __post_init__(self):
        if self.m < self.n:
            raise ConstraintError(f"projection width must satisfy m >= n, got m={self.m}, n={self.n}")
        if self.R.shape != (self.m, self.n):
            raise ShapeError(f"R has shape {self.R.shape}, expected ({self.m}, {self.n})")
        if self.O.shape[1] != 2 * self.m:
            raise ShapeError(f"O has {self.O.shape[1]} columns, expected {2 * self.m}")
        if not self.epsilon > 0.0:
            raise ConstraintError("constraint radius epsilon must be > 0")
        check_finite(self.R, "R")
        check_finite(self.O, "O")
        self.R = np.ascontiguousarray(self.R)
        self.R.setflags(write=False)

    @property
    def n_outputs(self) -> int:
        return self.O.shape[0]


@dataclass(frozen=True)
class GuaranteeReport:
    old_loss: float
    init_loss: float
    final_loss: float
    epsilon: float
    guarantee_holds: bool
    # informational: the base network's own training loss, when it was
    # trained with something other than softmax cross-entropy
    base_loss_kind: str | None = None
    base_old_loss: float | None = None
    base_final_loss: float | None = None


@dataclass(frozen=True)
class IterateStats:
    epoch: int
    train_loss: float
    o_norm: float
    eval_loss: float | None = None
    eval_accuracy: float | None = None


def build(output_weight: Matrix, n: int, m: int, seed: int,
          r_matrix: Matrix | None = None) -> RedenseLayer:
    """Construct a lifting layer whose head starts at the old-loss point.

    R is sampled i.i.d. standard normal from the seed (resampled with
    incremented seeds in the rare event it is ill-conditioned). Passing
    r_matrix pins R explicitly, which tests use to force exact cases.
    """
    output_weight = as_matrix(output_weight, "output_weight")
    if output_weight.shape[1] != n:
        raise ShapeError(f"output weight has width {output_weight.shape[1]}, expected n={n}")
    if m < n:
        raise ConstraintError(f"projection width must satisfy m >= n, got m={m}, n={n}")
    if r_matrix is not None:
        r = as_matrix(r_matrix, "r_matrix")
        if r.shape != (m, n):
            raise ShapeError(f"r_matrix has shape {r.shape}, expected ({m}, {n})")
    else:
        r = sample_gaussian(m, n, seed)
        for attempt in range(_RESAMPLE_ATTEMPTS):
            cond = condition_number(r)
            if cond <= MAX_CONDITION:
                break
            log.warning("projection matrix ill-conditioned (cond=%.3g), resampling with seed %d",
                        cond, seed + attempt + 1)
            r = sample_gaussian(m, n, seed + attempt + 1)
        else:
            raise ConstraintError(f"could not sample a well-conditioned {m}x{n} projection "
                                  f"after {_RESAMPLE_ATTEMPTS} attempts")
    p = output_weight @ pinv(r)
    o0 = np.hstack([p, -p])
    epsilon = frobenius_norm(o0)
    if epsilon == 0.0:
        raise ConstraintError("output weight is zero; the constraint radius would be empty")
    return RedenseLayer(n=n, m=m, R=r, epsilon=epsilon, O=o0, seed=seed)


def lfp_lift(layer: RedenseLayer, features: Matrix) -> Matrix:
    """Sign-split ReLU lifting of features through the frozen projection."""
    if features.shape[1] != layer.n:
        raise ShapeError(f"features have width {features.shape[1]}, layer expects n={layer.n}")
    check_finite(features, "features")
    z = features @ layer.R.T
    return np.hstack([np.maximum(z, 0.0), np.maximum(-z, 0.0)])


def lfp_reconstruct(lifted: Matrix, m: int) -> Matrix:
    """Invert the sign-split: top half minus bottom half."""
    cols = lifted.shape[1]
    if cols % 2 != 0:
        raise ShapeError(f"lifted matrix has odd column count {cols}")
    if cols != 2 * m:
        raise ShapeError(f"lifted matrix has {cols} columns, expected 2m={2 * m}")
    return lifted[:, :m] - lifted[:, m:]


def predict(layer: RedenseLayer, features: Matrix) -> Matrix:
    """Logits of the lifted head: lift(features) O'."""
    return lfp_lift(layer, features) @ layer.O.T


def evaluate_layer(layer: RedenseLayer, features: Matrix, targets: Matrix,
                   loss: Loss = TRAIN_LOSS):
    """Return (total loss, accuracy) of the lifted head on the given features."""
    logits = predict(layer, features)
    return loss_value(loss, logits, targets), accuracy(logits, targets)


# Norms within this relative band of epsilon count as feasible; rescaling
# lands at epsilon only up to rounding, and absorbing that here makes the
# projection exactly idempotent.
FEASIBILITY_SLACK = 1e-12


def _project(o: Matrix, epsilon: float) -> Matrix:
    norm = frobenius_norm(o)
    if norm > epsilon * (1.0 + FEASIBILITY_SLACK):
        return o * (epsilon / norm)
    return o


def train(layer: RedenseLayer, features: Matrix, targets: Matrix, cfg: TrainConfig,
          eval_features: Matrix | None = None, eval_targets: Matrix | None = None,
          base_loss: Loss | None = None, base_old_loss: float | None = None):
    """Retrain the head under the Frobenius-ball constraint, full batch.

    Runs cfg.epochs iterations of softmax cross-entropy descent on O (SGD or
    Adam-preconditioned), rescaling any step that leaves the ball back onto
    its surface. Adam moments are kept across projections. The returned layer
    carries the best iterate by training loss, O0 included, so the reported
    final loss never exceeds the starting one.

    base_loss / base_old_loss, when given, add an informational comparison in
    the base network's own loss to the report; the enforced inequality is
    always in the training loss.
    """
    lifted = lfp_lift(layer, features)
    eval_lifted = None
    if eval_features is not None:
        if eval_targets is None:
            raise ValueError("eval_features given without eval_targets")
        eval_lifted = lfp_lift(layer, eval_features)

    o = layer.O.copy()
    adam = None
    if cfg.optimizer == "adam":
        m_t = np.zeros_like(o)
        v_t = np.zeros_like(o)
        adam = [m_t, v_t, 0]

    def stats(iteration, o_cur, train_loss):
        if eval_lifted is None:
            return IterateStats(iteration, train_loss, frobenius_norm(o_cur))
        ev_logits = eval_lifted @ o_cur.T
        return IterateStats(iteration, train_loss, frobenius_norm(o_cur),
                            loss_value(TRAIN_LOSS, ev_logits, eval_targets),
                            accuracy(ev_logits, eval_targets))

    curve = []
    best_o = o.copy()
    best_loss = np.inf
    for t in range(cfg.epochs + 1):
        logits = lifted @ o.T
        cur_loss = loss_value(TRAIN_LOSS, logits, targets) if np.isfinite(logits).all() else np.nan
        if not np.isfinite(cur_loss):
            if t == 0:
                raise TrainingDivergedError("loss not finite at the feasible start", 0)
            log.warning("head training hit a non-finite loss at iteration %d; "
                        "keeping best earlier iterate", t)
            break
        curve.append(stats(t, o, cur_loss))
        if cur_loss < best_loss:
            best_loss = cur_loss
            best_o = o.copy()
        if t == cfg.epochs:
            break
        grad = loss_grad(TRAIN_LOSS, logits, targets).T @ lifted
        if adam is not None:
            adam[2] += 1
            adam[0] = cfg.beta1 * adam[0] + (1.0 - cfg.beta1) * grad
            adam[1] = cfg.beta2 * adam[1] + (1.0 - cfg.beta2) * grad * grad
            m_hat = adam[0] / (1.0 - cfg.beta1 ** adam[2])
            v_hat = adam[1] / (1.0 - cfg.beta2 ** adam[2])
            step = m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        else:
            step = grad
        o = _project(o - cfg.learning_rate * step, layer.epsilon)

    init_loss = curve[0].train_loss
    trained = replace(layer, R=layer.R, O=best_o)
    report_kwargs = {}
    if base_loss is not None:
        report_kwargs["base_loss_kind"] = base_loss.kind
        report_kwargs["base_old_loss"] = base_old_loss
        report_kwargs["base_final_loss"] = loss_value(base_loss, lifted @ best_o.T, targets)
    report = GuaranteeReport(
        old_loss=init_loss,
        init_loss=init_loss,
        final_loss=best_loss,
        epsilon=layer.epsilon,
        guarantee_holds=best_loss <= init_loss,
        **report_kwargs,
    )
    return trained, report, curve


def guarantee_check(report: GuaranteeReport) -> bool:
    """True iff the retrained loss is at or below the old loss."""
    return report.final_loss <= report.old_loss
