"""Accuracy, per-run CSV persistence, and cross-seed summaries.

Records are written with 17 significant digits so that reading the file
back reproduces every float bit for bit; determinism checks can therefore
compare files byte for byte.  Cross-seed summaries use the sample
standard deviation (n - 1), reported as absent for a single seed.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatch

RECORD_FIELDS = ("epoch", "train_loss", "train_acc", "test_acc", "lid", "alpha", "rolled_back")


def accuracy(probs, labels) -> float:
    """Fraction of rows whose argmax matches the label; ties go to the
    lowest class index."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (len(probs),):
        raise ShapeMismatch(f"probs {probs.shape} vs labels {labels.shape}")
    return float(np.mean(probs.argmax(axis=1) == labels))


def _format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_records(records, path) -> None:
    """One CSV row per epoch; floats carry full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.epoch,
                    _format_float(r.train_loss),
                    _format_float(r.train_acc),
                    _format_float(r.test_acc),
                    _format_float(r.lid),
                    _format_float(r.alpha),
                    int(r.rolled_back),
                ]
            )


def read_records(path):
    from .trainer import EpochRecord

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != RECORD_FIELDS:
            raise ConfigError(f"unexpected records header {header}")
        return [
            EpochRecord(
                epoch=int(row[0]),
                train_loss=float(row[1]),
                train_acc=float(row[2]),
                test_acc=float(row[3]),
                lid=float(row[4]),
                alpha=float(row[5]),
                rolled_back=bool(int(row[6])),
            )
            for row in reader
        ]


@dataclass(frozen=True)
class RunSummary:
    """Cross-seed aggregate for one strategy at one noise rate.

    Standard deviations are None when only one seed was run.
    """

    strategy: str
    noise_rate: float
    seeds: tuple
    final_test_acc_mean: float
    final_test_acc_std: float
    best_test_acc_mean: float
    best_test_acc_std: float
    min_lid_mean: float
    final_lid_mean: float


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    std = float(np.std(values, ddof=1)) if len(values) > 1 else None
    return float(np.mean(values)), std


def summarize(strategy: str, noise_rate: float, runs) -> RunSummary:
    """Aggregate (seed, records) pairs from repeated runs of one config."""
    runs = list(runs)
    if not runs or any(not records for _, records in runs):
        raise ConfigError("need at least one non-empty run to summarize")
    final_mean, final_std = _mean_std(
        [records[-1].test_acc for _, records in runs]
    )
    best_mean, best_std = _mean_std(
        [max(r.test_acc for r in records) for _, records in runs]
    )
    return RunSummary(
        strategy=strategy,
        noise_rate=noise_rate,
        seeds=tuple(seed for seed, _ in runs),
        final_test_acc_mean=final_mean,
        final_test_acc_std=final_std,
        best_test_acc_mean=best_mean,
        best_test_acc_std=best_std,
        min_lid_mean=float(np.mean([min(r.lid for r in records) for _, records in runs])),
        final_lid_mean=float(np.mean([records[-1].lid for _, records in runs])),
    )


def format_summary(summary: RunSummary) -> str:
    """Stable-key-order JSON text for the summary report."""
    payload = {
        "strategy": summary.strategy,
        "noise_rate": summary.noise_rate,
        "seeds": list(summary.seeds),
        "final_test_acc_mean": summary.final_test_acc_mean,
        "final_test_acc_std": summary.final_test_acc_std,
        "best_test_acc_mean": summary.best_test_acc_mean,
        "best_test_acc_std": summary.best_test_acc_std,
        "min_lid_mean": summary.min_lid_mean,
        "final_lid_mean": summary.final_lid_mean,
    }
    return json.dumps(payload, indent=2)


def write_summary(summary: RunSummary, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_summary(summary) + "\n")
