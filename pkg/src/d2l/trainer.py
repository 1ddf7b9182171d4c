"""The training loop: per-epoch dimensionality scoring, turning-point
detection, rollback, and adaptive targets.

Each epoch trains on minibatches, then scores the local intrinsic
dimensionality of penultimate representations over ``lid_batches``
random batches.  Under the adaptive strategy, a score that jumps more
than two standard deviations above the mean of the preceding
``window`` epochs marks the turning point: the model (including
momentum) is rolled back to the previous epoch's saved state, and from
then on training targets interpolate between observed labels and the
model's own predictions with a weight that shrinks as representations
expand.

Every RNG draw comes from a stream keyed by (seed, purpose, epoch), so
two strategies under the same seed see identical batch sequences — the
adaptive run is bit-identical to plain cross-entropy until the turning
point fires.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, batch_indices
from .errors import ConfigError, NonFiniteInput, ShapeMismatch
from .lid import batch_lid_mean
from .metrics import accuracy
from .network import (
    NetworkModel,
    OptimizerConfig,
    SgdState,
    backprop_logits,
    forward,
    init_model,
    loss_and_grad,
    penultimate_reps,
    predict_probs,
    restore,
    sgd_step,
    snapshot,
)
from .strategies import (
    BOOT_HARD_BETA,
    BOOT_SOFT_BETA,
    StrategyKind,
    alpha_update,
    backward_logit_grad,
    backward_loss,
    bootstrap_targets,
    d2l_targets,
    forward_logit_grad,
    forward_loss,
    one_hot,
)

STD_MODES = ("population", "sample")


@dataclass
class LidTrajectory:
    """Append-only per-epoch dimensionality scores plus the turning point.

    ``turning_epoch`` is -1 until detection fires, is set at most once,
    and always names the last epoch before the expansion jump.
    """

    window: int
    std_mode: str = "population"
    scores: list = field(default_factory=list)
    turning_epoch: int = -1

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.std_mode not in STD_MODES:
            raise ConfigError(f"std_mode must be one of {STD_MODES}, got {self.std_mode!r}")

    def append(self, score: float) -> None:
        if not np.isfinite(score):
            raise NonFiniteInput(f"dimensionality score is {score}")
        self.scores.append(float(score))


def detect_turning_point(traj: LidTrajectory, epoch: int) -> bool:
    """True iff the epoch's score sits more than two standard deviations
    above the mean of the preceding ``window`` scores; fixes
    ``turning_epoch`` to epoch - 1 on detection.

    The comparison is strict, so constant trajectories (std 0, difference
    0) never fire.
    """
    if traj.turning_epoch != -1:
        raise ConfigError("turning point already fixed")
    if epoch < traj.window:
        raise ConfigError(f"need {traj.window} preceding epochs, have {epoch}")
    if len(traj.scores) <= epoch:
        raise ConfigError(f"no score recorded for epoch {epoch}")
    preceding = np.asarray(traj.scores[epoch - traj.window : epoch])
    ddof = 0 if traj.std_mode == "population" else 1
    if len(preceding) < 2 and ddof == 1:
        return False
    spread = float(np.std(preceding, ddof=ddof))
    if traj.scores[epoch] - float(np.mean(preceding)) > 2.0 * spread:
        traj.turning_epoch = epoch - 1
        return True
    return False


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on besides the data itself."""

    total_epochs: int
    window: int
    strategy: StrategyKind = StrategyKind.CROSS_ENTROPY
    lid_batches: int = 10
    lid_neighbors: int = 20
    batch_size: int = 128
    hidden_sizes: tuple = (128, 128)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    beta: float = None
    transition: object = None
    early_stop_patience: int = 0
    turning_std: str = "population"

    def __post_init__(self):
        if self.total_epochs < 2:
            raise ConfigError(f"need at least 2 epochs, got {self.total_epochs}")
        if not 1 <= self.window <= self.total_epochs - 1:
            raise ConfigError(
                f"window must be in [1, {self.total_epochs - 1}], got {self.window}"
            )
        if self.lid_neighbors < 2:
            raise ConfigError(f"need at least 2 neighbors, got {self.lid_neighbors}")
        if self.lid_batches < 1:
            raise ConfigError(f"need at least 1 batch for scoring, got {self.lid_batches}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.batch_size <= self.lid_neighbors:
            raise ConfigError(
                f"batch_size {self.batch_size} must exceed lid_neighbors {self.lid_neighbors}"
            )
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience must be nonnegative")
        if self.turning_std not in STD_MODES:
            raise ConfigError(f"turning_std must be one of {STD_MODES}")
        if self.strategy in (StrategyKind.FORWARD, StrategyKind.BACKWARD):
            if self.transition is None:
                raise ConfigError(f"strategy {self.strategy.value} needs a transition matrix")

    def resolved_beta(self) -> float:
        if self.beta is not None:
            return self.beta
        return BOOT_HARD_BETA if self.strategy is StrategyKind.BOOT_HARD else BOOT_SOFT_BETA


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    lid: float
    alpha: float
    rolled_back: bool


@dataclass
class TrainResult:
    """Model and per-epoch records, plus the state and timings around them."""

    model: NetworkModel
    opt: SgdState
    records: list
    trajectory: LidTrajectory
    lid_seconds: float
    total_seconds: float


def epoch_lid_score(model: NetworkModel, ds: Dataset, m: int, k: int, batch_size: int, seed) -> float:
    """Mean dimensionality of penultimate representations over m random
    batches of the training set; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    size = min(batch_size, len(ds))
    scores = []
    for _ in range(m):
        picked = rng.choice(len(ds), size=size, replace=False)
        reps = penultimate_reps(model, ds.features[picked])
        scores.append(batch_lid_mean(reps, k))
    return float(np.mean(scores))


def _epoch_alpha(cfg: TrainConfig, traj: LidTrajectory, epoch: int) -> float:
    if cfg.strategy is not StrategyKind.D2L:
        return 1.0
    return alpha_update(traj.scores, epoch, cfg.total_epochs, traj.turning_epoch)


def _train_one_epoch(model, opt, ds, onehots, cfg, transition, alpha, epoch):
    """One pass over the data with the strategy's targets; returns the
    sample-weighted mean batch loss."""
    kind = cfg.strategy
    wd = cfg.optimizer.weight_decay
    rng = np.random.default_rng([cfg.seed, 1, epoch])
    total_loss = 0.0
    for idx in batch_indices(len(ds), cfg.batch_size, rng):
        x = ds.features[idx]
        raw = onehots[idx]
        if kind in (StrategyKind.FORWARD, StrategyKind.BACKWARD):
            probs = forward(model, x)[1]
            if kind is StrategyKind.FORWARD:
                loss = forward_loss(probs, raw, transition)
                dz = forward_logit_grad(probs, raw, transition)
            else:
                loss = backward_loss(probs, raw, transition)
                dz = backward_logit_grad(probs, raw, transition)
            grads = backprop_logits(model, x, dz, weight_decay=wd)
        else:
            if kind is StrategyKind.D2L and alpha < 1.0:
                targets = d2l_targets(raw, forward(model, x)[1], alpha)
            elif kind is StrategyKind.BOOT_SOFT:
                targets = bootstrap_targets(raw, forward(model, x)[1], cfg.resolved_beta(), hard=False)
            elif kind is StrategyKind.BOOT_HARD:
                targets = bootstrap_targets(raw, forward(model, x)[1], cfg.resolved_beta(), hard=True)
            else:
                targets = raw
            loss, grads = loss_and_grad(model, x, targets, weight_decay=wd)
        sgd_step(model, grads, opt, epoch)
        total_loss += loss * len(idx)
    return total_loss / len(ds)


def run_training(ds_train: Dataset, ds_test: Dataset, cfg: TrainConfig) -> TrainResult:
    """Full training run; see the module docstring for the loop shape.

    Dimensionality is scored and logged for every strategy; only the
    adaptive one acts on it.  A rolled-back epoch keeps its pre-rollback
    score in the trajectory and is flagged in its record.
    """
    if ds_train.class_count != ds_test.class_count:
        raise ShapeMismatch("train and test class counts differ")
    if ds_train.features.shape[1] != ds_test.features.shape[1]:
        raise ShapeMismatch("train and test feature widths differ")
    transition = cfg.transition
    if transition is not None:
        transition = np.asarray(transition, dtype=np.float64)
        if transition.shape != (ds_train.class_count, ds_train.class_count):
            raise ShapeMismatch(
                f"transition {transition.shape} vs {ds_train.class_count} classes"
            )

    sizes = [ds_train.features.shape[1], *cfg.hidden_sizes, ds_train.class_count]
    model = init_model(sizes, seed=[cfg.seed, 0])
    opt = SgdState.for_model(model, cfg.optimizer)
    onehots = one_hot(ds_train.labels, ds_train.class_count)
    traj = LidTrajectory(window=cfg.window, std_mode=cfg.turning_std)
    records = []
    snapshots = {}
    alpha = 1.0
    best_test = -1.0
    stale = 0
    lid_seconds = 0.0
    started = time.perf_counter()

    for epoch in range(cfg.total_epochs):
        train_loss = _train_one_epoch(
            model, opt, ds_train, onehots, cfg, transition, alpha, epoch
        )

        lid_started = time.perf_counter()
        score = epoch_lid_score(
            model, ds_train, cfg.lid_batches, cfg.lid_neighbors, cfg.batch_size,
            seed=[cfg.seed, 2, epoch],
        )
        lid_seconds += time.perf_counter() - lid_started
        traj.append(score)

        rolled_back = False
        if (
            cfg.strategy is StrategyKind.D2L
            and traj.turning_epoch == -1
            and epoch >= cfg.window
            and detect_turning_point(traj, epoch)
        ):
            restore(model, snapshots[traj.turning_epoch], opt)
            rolled_back = True

        alpha = _epoch_alpha(cfg, traj, epoch)

        if traj.turning_epoch == -1:
            snapshots[epoch] = snapshot(model, opt, epoch)
            snapshots.pop(epoch - cfg.window - 1, None)
        else:
            snapshots.clear()

        train_acc = accuracy(predict_probs(model, ds_train.features), ds_train.labels)
        test_acc = accuracy(predict_probs(model, ds_test.features), ds_test.labels)
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                train_acc=train_acc,
                test_acc=test_acc,
                lid=score,
                alpha=alpha,
                rolled_back=rolled_back,
            )
        )

        if cfg.early_stop_patience:
            if test_acc > best_test:
                best_test = test_acc
                stale = 0
            else:
                stale += 1
                if stale > cfg.early_stop_patience:
                    break

    return TrainResult(
        model=model,
        opt=opt,
        records=records,
        trajectory=traj,
        lid_seconds=lid_seconds,
        total_seconds=time.perf_counter() - started,
    )
