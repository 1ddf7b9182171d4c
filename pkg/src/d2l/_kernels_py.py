"""Pure-numpy kNN kernels; fallback when the compiled extension is absent.

Numerics contract shared with the compiled twin (``_kernels.pyx``) so the
two backends produce bitwise-identical output:

* squared distances are accumulated coordinate by coordinate, in
  ascending coordinate order (one IEEE add per coordinate per pair);
* selection is an ascending sort of the squared distances;
* the square root is applied last, to the selected values only.

Callers pass C-contiguous float64 arrays with finite entries.
"""

import numpy as np


def query_dists(query, refs):
    """Euclidean distances from ``query`` to every row of ``refs``, in row order."""
    n, d = refs.shape
    acc = np.zeros(n, dtype=np.float64)
    for j in range(d):
        diff = refs[:, j] - query[j]
        acc += diff * diff
    return np.sqrt(acc)


def batch_knn(points, k):
    """Per-row profiles of the k smallest distances to the *other* rows.

    Row i of the result holds the distances from ``points[i]`` to its k
    nearest neighbors among the remaining rows, ascending.  Exactly one
    zero (the self-distance) is dropped per row; further zeros from
    duplicated points are kept.  Requires ``len(points) >= k + 1``.
    """
    n, d = points.shape
    acc = np.zeros((n, n), dtype=np.float64)
    for j in range(d):
        col = points[:, j]
        diff = col[:, None] - col[None, :]
        acc += diff * diff
    acc.sort(axis=1)
    return np.sqrt(acc[:, 1 : k + 1])
