"""Local intrinsic dimensionality from k-nearest-neighbor distance profiles.

The estimator is the maximum-likelihood one built from the k smallest
neighbor distances relative to the k-th distance:

    lid = -( (1/k) * sum_{i=1..k} ln(r_i / r_max) )^(-1)

where r_1 <= ... <= r_k = r_max.  The i = k term always contributes 0 and
is included as written.  The estimate is scale-free (only the ratios
r_i / r_max enter) and grows with the dimension of the subspace that
locally best fits the points.

Distances are Euclidean.  Tiny distances are floored at
``FLOOR_RATIO * r_max`` before the log so a duplicated point cannot
produce -inf; a profile whose distances are all equal to r_max (or whose
r_max is 0) yields no information and is marked invalid instead.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import AllDegenerate, ConfigError, InsufficientPoints, NonFiniteInput

FLOOR_RATIO = 1e-12


@dataclass(frozen=True)
class PointSet:
    """An (n, d) cloud of points in a common representation space."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ConfigError(f"points must be 2-d, got ndim={pts.ndim}")
        if pts.shape[0] < 2 or pts.shape[1] < 1:
            raise ConfigError(f"need at least 2 points with d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteInput("point set contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class NeighborProfile:
    """Ascending distances to the k nearest neighbors of some query point."""

    distances: np.ndarray

    def __post_init__(self):
        dists = np.ascontiguousarray(self.distances, dtype=np.float64)
        if dists.ndim != 1 or dists.shape[0] < 2:
            raise ConfigError("profile needs at least 2 distances")
        if np.any(dists < 0) or not np.all(np.isfinite(dists)):
            raise ConfigError("distances must be finite and nonnegative")
        if np.any(np.diff(dists) < 0):
            raise ConfigError("distances must be ascending")
        object.__setattr__(self, "distances", dists)

    @property
    def k(self) -> int:
        return self.distances.shape[0]

    @property
    def r_max(self) -> float:
        return float(self.distances[-1])


@dataclass(frozen=True)
class LidEstimate:
    """MLE dimensionality estimate; ``valid`` is False for degenerate profiles."""

    value: float
    k: int
    valid: bool


def as_points(obj) -> PointSet:
    """Coerce an array-like into a validated PointSet (no-op if already one)."""
    if isinstance(obj, PointSet):
        return obj
    return PointSet(np.asarray(obj))


def knn_profile(query, refs, k: int, exclude_self: bool = False) -> NeighborProfile:
    """The k smallest Euclidean distances from ``query`` to ``refs``, ascending.

    With ``exclude_self`` set, one reference at distance exactly 0 (the
    query's own copy, if present) is removed before selection.  Ties are
    broken by reference index order, which cannot affect the returned
    values.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    refs = as_points(refs)
    q = np.ascontiguousarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != refs.d:
        raise ConfigError(f"query has {q.shape[0]} coordinates, refs have {refs.d}")
    if not np.all(np.isfinite(q)):
        raise NonFiniteInput("query contains non-finite coordinates")

    dists = backend.query_dists(q, refs.points)
    dists = np.sort(dists)
    if exclude_self and dists[0] == 0.0:
        dists = dists[1:]
    if dists.shape[0] < k:
        raise InsufficientPoints(
            f"need {k} usable reference points, have {dists.shape[0]}"
        )
    return NeighborProfile(dists[:k].copy())


def _mle_from_profiles(profiles: np.ndarray) -> np.ndarray:
    """Vectorized estimator over (n, k) distance profiles; nan marks degenerate rows.

    Single shared implementation so per-point and batched paths agree
    bitwise.  The log-ratio sum runs over neighbor index in ascending
    order, one fixed reduction order for every caller.
    """
    profiles = np.atleast_2d(profiles)
    n, k = profiles.shape
    r_max = profiles[:, -1]
    live = r_max > 0.0
    safe_rmax = np.where(live, r_max, 1.0)
    floored = np.maximum(profiles, FLOOR_RATIO * safe_rmax[:, None])
    logs = np.log(floored / safe_rmax[:, None])
    s = np.zeros(n, dtype=np.float64)
    for i in range(k):
        s += logs[:, i]
    out = np.full(n, np.nan, dtype=np.float64)
    ok = live & (s < 0.0)
    out[ok] = -k / s[ok]
    return out


def lid_mle(profile: NeighborProfile) -> LidEstimate:
    """MLE dimensionality estimate from one neighbor profile.

    Returns ``valid=False`` (value nan) when the profile carries no
    information: r_max is 0, or every floored distance equals r_max so the
    log-ratio sum vanishes and the estimate diverges.
    """
    value = float(_mle_from_profiles(profile.distances[None, :])[0])
    return LidEstimate(value=value, k=profile.k, valid=bool(np.isfinite(value)))


def batch_lid_values(reps, k: int) -> np.ndarray:
    """Per-point LID estimates within a batch, nan for degenerate points.

    Each point is scored against the rest of the batch (self excluded),
    exactly as composing ``knn_profile`` + ``lid_mle`` per point would.
    """
    reps = as_points(reps)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if reps.n <= k:
        raise InsufficientPoints(f"need more than k={k} points, have {reps.n}")
    profiles = backend.batch_knn(reps.points, k)
    return _mle_from_profiles(profiles)


def batch_lid_mean(reps, k: int) -> float:
    """Mean of the valid per-point LID estimates within a batch.

    Degenerate points (duplicates with zero neighborhoods) are skipped so
    a single repeated point cannot blow up the score; if no point is
    usable the batch itself is degenerate.  The mean is taken in sorted
    value order, one canonical reduction order, so the result is exactly
    invariant under row reordering and parallel per-point evaluation.
    """
    values = batch_lid_values(reps, k)
    valid = np.isfinite(values)
    if not valid.any():
        raise AllDegenerate("no point in the batch yielded a valid LID estimate")
    return float(np.mean(np.sort(values[valid])))
