"""Feedforward classifier with explicit gradients and full-state checkpoints.

Minimal by design: dense layers, rectifier hidden activations, softmax
output, SGD with momentum and weight decay.  The penultimate activation
(input to the output layer) is the representation the LID machinery
scores, and every bit of mutable state — parameters plus momentum
buffers — can be snapshotted and restored exactly, which is what makes
rolling training back to an earlier epoch possible.

Checkpoint file layout (all integers little-endian u32, floats
little-endian f64):

    magic b"D2LCKPT1"
    layer count
    rows, cols for each layer            (weight matrix shape)
    per layer: weights row-major, then bias (cols values)
    momentum buffers in the same per-layer layout
    epoch index
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    ConfigError,
    IncompatibleArchitecture,
    NonFiniteLoss,
    ShapeMismatch,
    TruncatedFile,
)

PROB_FLOOR = 1e-12
CHECKPOINT_MAGIC = b"D2LCKPT1"


@dataclass
class NetworkModel:
    """Dense layers as parallel weight/bias lists; layer i maps width_i -> width_{i+1}."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeMismatch(
                    f"layer {i - 1} output {self.weights[i - 1].shape[1]} "
                    f"!= layer {i} input {w.shape[0]}"
                )

    @property
    def layer_sizes(self) -> tuple:
        return tuple(w.shape[0] for w in self.weights) + (self.weights[-1].shape[1],)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def class_count(self) -> int:
        return self.weights[-1].shape[1]


@dataclass
class Gradients:
    weights: list
    biases: list


@dataclass(frozen=True)
class OptimizerConfig:
    """SGD hyperparameters; ``lr_drops`` divides the rate at given epochs."""

    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drops: tuple = ()

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        epochs = [e for e, _ in self.lr_drops]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError("lr drop epochs must be strictly increasing")


@dataclass
class SgdState:
    """Optimizer config plus momentum buffers shaped like the model parameters."""

    config: OptimizerConfig
    vel_weights: list = field(default_factory=list)
    vel_biases: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model: NetworkModel, config: OptimizerConfig) -> "SgdState":
        return cls(
            config=config,
            vel_weights=[np.zeros_like(w) for w in model.weights],
            vel_biases=[np.zeros_like(b) for b in model.biases],
        )


@dataclass
class Checkpoint:
    """Bit-exact copy of model parameters, momentum buffers, and epoch index."""

    weights: list
    biases: list
    vel_weights: list
    vel_biases: list
    epoch: int


def init_model(layer_sizes, seed: int) -> NetworkModel:
    """He-initialized model: weights ~ N(0, 2/fan_in), biases zero."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"need at least input and output widths, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return NetworkModel(weights=weights, biases=biases)


def _as_batch(model: NetworkModel, batch) -> np.ndarray:
    x = getattr(batch, "points", batch)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeMismatch(
            f"batch shape {x.shape} incompatible with input width {model.input_dim}"
        )
    return x


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(model: NetworkModel, x: np.ndarray):
    """Per-layer input activations plus output probabilities."""
    activations = [x]
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        activations.append(a)
    probs = _softmax(a @ model.weights[-1] + model.biases[-1])
    return activations, probs


def forward(model: NetworkModel, batch):
    """Returns (penultimate activations, class probabilities) for a batch.

    The penultimate activation is the input to the output layer — the
    representation whose dimensionality the training loop monitors.
    """
    x = _as_batch(model, batch)
    activations, probs = _forward_cached(model, x)
    return activations[-1], probs


def penultimate_reps(model: NetworkModel, batch) -> np.ndarray:
    """Penultimate activations only; skips the output layer and softmax.

    Same values as ``forward(model, batch)[0]``, for callers that score
    representations every epoch and never need the probabilities.
    """
    a = _as_batch(model, batch)
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
    return a


def predict_probs(model: NetworkModel, features, batch_size: int = 2048) -> np.ndarray:
    """Memory-bounded forward over an arbitrarily large feature matrix."""
    x = _as_batch(model, features)
    if len(x) <= batch_size:
        return forward(model, x)[1]
    return np.vstack([forward(model, x[i : i + batch_size])[1] for i in range(0, len(x), batch_size)])


def backprop_logits(model: NetworkModel, batch, d_logits: np.ndarray, weight_decay: float = 0.0) -> Gradients:
    """Gradients of any scalar objective given its gradient at the output logits.

    Shared engine behind every loss in the package: the caller supplies
    dObjective/dlogits (already scaled by 1/batch), this routine chains it
    through the layers and adds the weight-decay term on every parameter.
    """
    x = _as_batch(model, batch)
    activations, _ = _forward_cached(model, x)
    return _backprop(model, activations, np.asarray(d_logits, dtype=np.float64), weight_decay)


def _backprop(model, activations, dz, weight_decay):
    n_layers = len(model.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        a_in = activations[layer]
        grad_w[layer] = a_in.T @ dz
        grad_b[layer] = dz.sum(axis=0)
        if weight_decay:
            grad_w[layer] += weight_decay * model.weights[layer]
            grad_b[layer] += weight_decay * model.biases[layer]
        if layer > 0:
            dz = (dz @ model.weights[layer].T) * (activations[layer] > 0.0)
    return Gradients(weights=grad_w, biases=grad_b)


def loss_and_grad(model: NetworkModel, batch, targets, weight_decay: float = 0.0):
    """Soft-target cross-entropy over a batch, with exact analytic gradients.

    loss = -(1/B) sum_n sum_j targets[n, j] * ln probs[n, j], probabilities
    floored at 1e-12 inside the log.  Each row of ``targets`` is a
    probability vector (one-hot or soft).  Gradients include the
    weight-decay term when requested.
    """
    x = _as_batch(model, batch)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != (x.shape[0], model.class_count):
        raise ShapeMismatch(f"targets shape {t.shape}, expected {(x.shape[0], model.class_count)}")
    activations, probs = _forward_cached(model, x)
    loss = -np.mean(np.sum(t * np.log(np.maximum(probs, PROB_FLOOR)), axis=1))
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    dz = (probs - t) / x.shape[0]
    return float(loss), _backprop(model, activations, dz, weight_decay)


def learning_rate_at(config: OptimizerConfig, epoch: int) -> float:
    """Initial rate divided by every drop whose epoch has been reached."""
    lr = config.learning_rate
    for drop_epoch, divisor in config.lr_drops:
        if epoch >= drop_epoch:
            lr /= divisor
    return lr


def sgd_step(model: NetworkModel, grads: Gradients, opt: SgdState, epoch: int) -> NetworkModel:
    """One momentum-SGD update in place: v <- mu*v + g; param <- param - lr(epoch)*v."""
    lr = learning_rate_at(opt.config, epoch)
    mu = opt.config.momentum
    for w, b, gw, gb, vw, vb in zip(
        model.weights, model.biases, grads.weights, grads.biases, opt.vel_weights, opt.vel_biases
    ):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeMismatch(f"gradient shape {gw.shape} vs parameter {w.shape}")
        vw *= mu
        vw += gw
        vb *= mu
        vb += gb
        w -= lr * vw
        b -= lr * vb
    return model


def snapshot(model: NetworkModel, opt: SgdState = None, epoch: int = 0) -> Checkpoint:
    """Copy all mutable training state; restoring reproduces outputs bitwise."""
    return Checkpoint(
        weights=[w.copy() for w in model.weights],
        biases=[b.copy() for b in model.biases],
        vel_weights=[v.copy() for v in opt.vel_weights] if opt else [np.zeros_like(w) for w in model.weights],
        vel_biases=[v.copy() for v in opt.vel_biases] if opt else [np.zeros_like(b) for b in model.biases],
        epoch=epoch,
    )


def restore(model: NetworkModel, ckpt: Checkpoint, opt: SgdState = None) -> NetworkModel:
    """Write checkpoint state back into the model (and optimizer, if given)."""
    shapes_model = [w.shape for w in model.weights]
    shapes_ckpt = [w.shape for w in ckpt.weights]
    if shapes_model != shapes_ckpt:
        raise IncompatibleArchitecture(f"checkpoint layers {shapes_ckpt} vs model {shapes_model}")
    for dst, src in zip(model.weights, ckpt.weights):
        np.copyto(dst, src)
    for dst, src in zip(model.biases, ckpt.biases):
        np.copyto(dst, src)
    if opt is not None:
        for dst, src in zip(opt.vel_weights, ckpt.vel_weights):
            np.copyto(dst, src)
        for dst, src in zip(opt.vel_biases, ckpt.vel_biases):
            np.copyto(dst, src)
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(ckpt.weights)))
        for w in ckpt.weights:
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
        for w, b in zip(ckpt.weights, ckpt.biases):
            fh.write(w.astype("<f8").tobytes(order="C"))
            fh.write(b.astype("<f8").tobytes(order="C"))
        for vw, vb in zip(ckpt.vel_weights, ckpt.vel_biases):
            fh.write(vw.astype("<f8").tobytes(order="C"))
            fh.write(vb.astype("<f8").tobytes(order="C"))
        fh.write(struct.pack("<I", ckpt.epoch))


def _read_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedFile(f"expected {count} bytes for {what}, got {len(buf)}")
    return buf


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"not a checkpoint file: magic {magic!r}")
        (n_layers,) = struct.unpack("<I", _read_exact(fh, 4, "layer count"))
        shapes = [
            struct.unpack("<II", _read_exact(fh, 8, f"layer {i} shape")) for i in range(n_layers)
        ]

        def read_layers(what):
            ws, bs = [], []
            for i, (rows, cols) in enumerate(shapes):
                raw = _read_exact(fh, 8 * rows * cols, f"{what} weights {i}")
                ws.append(np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy())
                raw = _read_exact(fh, 8 * cols, f"{what} bias {i}")
                bs.append(np.frombuffer(raw, dtype="<f8").copy())
            return ws, bs

        weights, biases = read_layers("parameter")
        vel_weights, vel_biases = read_layers("momentum")
        (epoch,) = struct.unpack("<I", _read_exact(fh, 4, "epoch"))
    return Checkpoint(
        weights=weights, biases=biases, vel_weights=vel_weights, vel_biases=vel_biases, epoch=epoch
    )
