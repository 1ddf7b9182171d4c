"""Training-target strategies for label noise.

Six ways to turn observed (possibly wrong) labels plus current model
predictions into the per-batch objective:

- ``ce``: plain cross-entropy on the observed labels.
- ``d2l``: after the dimensionality turning point, interpolate between
  the observed one-hot and the model's predicted one-hot with a weight
  that decays as representations expand (``alpha_update``).
- ``boot-soft`` / ``boot-hard``: fixed convex combination of observed
  labels with the predicted distribution / predicted one-hot.
- ``forward``: cross-entropy against noise-corrected predictions
  q = T^t p.
- ``backward``: per-class loss vector multiplied by T^{-1}; may go
  negative on confident predictions and is deliberately never clamped.

Target builders return row-stochastic matrices for the network's
soft-target loss; the matrix losses expose both the scalar loss and its
gradient at the logits so the shared backprop engine can finish the job.
"""

from enum import Enum

import numpy as np

from .errors import ConfigError, EmptyHistory, InvalidRate, ShapeMismatch, SingularMatrix
from .network import PROB_FLOOR

BOOT_HARD_BETA = 0.8
BOOT_SOFT_BETA = 0.95


class StrategyKind(Enum):
    """Strategy selector; values double as the CLI spellings."""

    CROSS_ENTROPY = "ce"
    D2L = "d2l"
    BOOT_SOFT = "boot-soft"
    BOOT_HARD = "boot-hard"
    FORWARD = "forward"
    BACKWARD = "backward"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ConfigError(
            f"unknown strategy {name!r}, expected one of "
            f"{', '.join(k.value for k in cls)}"
        )


def one_hot(labels, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) and (labels.min() < 0 or labels.max() >= class_count):
        raise ConfigError(f"labels outside [0, {class_count})")
    return np.eye(class_count)[labels]


def alpha_update(lids, epoch: int, total_epochs: int, turning_epoch: int) -> float:
    """Interpolation weight for the current epoch.

    Before the turning point (turning_epoch = -1) the observed labels are
    trusted fully: alpha = 1.  Afterwards alpha shrinks with training
    progress and with how far the current dimensionality sits above its
    historical minimum:

        alpha = exp(-(epoch / total_epochs) * lids[epoch] / min(lids[:epoch]))
    """
    if turning_epoch == -1 or epoch == 0:
        return 1.0
    lids = np.asarray(lids, dtype=np.float64)
    if len(lids) <= epoch:
        raise EmptyHistory(
            f"need dimensionality scores through epoch {epoch}, have {len(lids)}"
        )
    ratio = lids[epoch] / np.min(lids[:epoch])
    return float(np.exp(-(epoch / total_epochs) * ratio))


def _check_probs_targets(probs, raw):
    probs = np.asarray(probs, dtype=np.float64)
    raw = np.asarray(raw, dtype=np.float64)
    if probs.shape != raw.shape or probs.ndim != 2:
        raise ShapeMismatch(f"probs {probs.shape} vs raw targets {raw.shape}")
    return probs, raw


def d2l_targets(raw, probs, alpha: float) -> np.ndarray:
    """alpha * observed one-hot + (1 - alpha) * predicted one-hot.

    The predicted label is the hard argmax (ties to the lowest class), so
    at alpha = 0 the targets are exactly the model's current guesses.
    """
    probs, raw = _check_probs_targets(probs, raw)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 1.0:
        return raw.copy()
    predicted = np.eye(raw.shape[1])[probs.argmax(axis=1)]
    return alpha * raw + (1.0 - alpha) * predicted


def bootstrap_targets(raw, probs, beta: float, hard: bool) -> np.ndarray:
    """beta * observed labels + (1 - beta) * (predicted one-hot or probs)."""
    probs, raw = _check_probs_targets(probs, raw)
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    if beta == 1.0:
        return raw.copy()
    predicted = np.eye(raw.shape[1])[probs.argmax(axis=1)] if hard else probs
    return beta * raw + (1.0 - beta) * predicted


def symmetric_transition(class_count: int, rate: float) -> np.ndarray:
    """Row-stochastic flip matrix: 1 - rate on the diagonal, rest uniform.

    Matches the noise injector by construction: a label stays put with
    probability 1 - rate and moves to each other class with probability
    rate / (class_count - 1).
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"noise rate must be in [0, 1), got {rate}")
    if class_count < 2:
        raise ConfigError(f"need at least 2 classes, got {class_count}")
    t = np.full((class_count, class_count), rate / (class_count - 1))
    np.fill_diagonal(t, 1.0 - rate)
    return t


def invert_transition(transition) -> np.ndarray:
    t = np.asarray(transition, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ShapeMismatch(f"transition matrix must be square, got {t.shape}")
    try:
        return np.linalg.inv(t)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"transition matrix is not invertible: {exc}") from None


def _corrected_probs(probs, transition):
    probs = np.asarray(probs, dtype=np.float64)
    t = np.asarray(transition, dtype=np.float64)
    if t.shape != (probs.shape[1], probs.shape[1]):
        raise ShapeMismatch(f"transition {t.shape} vs {probs.shape[1]} classes")
    return probs @ t


def forward_loss(probs, raw, transition) -> float:
    """Cross-entropy between observed labels and corrected predictions.

    Each prediction is pushed through the noise process (q_n = T^t p_n)
    before scoring, so the model is asked to explain the noisy labels
    rather than fit them directly.
    """
    q = _corrected_probs(probs, transition)
    _, raw = _check_probs_targets(q, raw)
    return float(-np.mean(np.sum(raw * np.log(np.maximum(q, PROB_FLOOR)), axis=1)))


def forward_logit_grad(probs, raw, transition) -> np.ndarray:
    """Gradient of forward_loss at the logits, averaged over the batch."""
    q = _corrected_probs(probs, transition)
    probs, raw = _check_probs_targets(probs, raw)
    t = np.asarray(transition, dtype=np.float64)
    # dL/dq is zero wherever the probability floor is active
    live = q > PROB_FLOOR
    dq = np.where(live, -raw / np.maximum(q, PROB_FLOOR), 0.0) / len(probs)
    dp = dq @ t.T
    return probs * (dp - np.sum(dp * probs, axis=1, keepdims=True))


def backward_loss(probs, raw, transition) -> float:
    """Observed-label entry of the inverse-corrected per-class loss vector.

    loss_n = (T^{-1} l_n)_{y_n} with l_j = -ln p_j.  Confident correct
    predictions can make this negative; that is the intended behavior and
    the value is never clamped.
    """
    inv = invert_transition(transition)
    probs, raw = _check_probs_targets(probs, raw)
    per_class = -np.log(np.maximum(probs, PROB_FLOOR))
    return float(np.mean(np.sum((raw @ inv) * per_class, axis=1)))


def backward_logit_grad(probs, raw, transition) -> np.ndarray:
    """Gradient of backward_loss at the logits, averaged over the batch."""
    inv = invert_transition(transition)
    probs, raw = _check_probs_targets(probs, raw)
    weights = raw @ inv
    live = probs > PROB_FLOOR
    dp = np.where(live, -weights / np.maximum(probs, PROB_FLOOR), 0.0) / len(probs)
    return probs * (dp - np.sum(dp * probs, axis=1, keepdims=True))
