"""Dimensionality-driven learning: LID-monitored training that resists noisy labels."""

import os


def _cap_threads():
    """Honor D2L_THREADS by capping the BLAS thread pools.

    Must run before numpy is first imported; thread-count env vars are
    read once at load time.  Explicitly set variables are left alone.
    """
    cap = os.environ.get("D2L_THREADS")
    if cap:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
            "VECLIB_MAXIMUM_THREADS",
        ):
            os.environ.setdefault(var, cap)


_cap_threads()

from .backend import BACKEND_NAME, COMPILED
from .data import Dataset, gen_manifold_blobs, inject_symmetric_noise, with_noise
from .lid import (
    LidEstimate,
    NeighborProfile,
    PointSet,
    batch_lid_mean,
    batch_lid_values,
    knn_profile,
    lid_mle,
)
from .metrics import RunSummary, accuracy, read_records, summarize, write_records
from .network import (
    NetworkModel,
    OptimizerConfig,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grad,
    predict_probs,
    save_checkpoint,
)
from .strategies import StrategyKind, alpha_update, d2l_targets, symmetric_transition
from .trainer import EpochRecord, LidTrajectory, TrainConfig, TrainResult, run_training

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "COMPILED",
    "Dataset",
    "EpochRecord",
    "LidEstimate",
    "LidTrajectory",
    "NeighborProfile",
    "NetworkModel",
    "OptimizerConfig",
    "PointSet",
    "RunSummary",
    "StrategyKind",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "alpha_update",
    "batch_lid_mean",
    "batch_lid_values",
    "d2l_targets",
    "forward",
    "gen_manifold_blobs",
    "init_model",
    "inject_symmetric_noise",
    "knn_profile",
    "lid_mle",
    "load_checkpoint",
    "loss_and_grad",
    "predict_probs",
    "read_records",
    "run_training",
    "save_checkpoint",
    "summarize",
    "symmetric_transition",
    "with_noise",
    "write_records",
    "__version__",
]
