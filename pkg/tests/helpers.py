"""Shared samplers and oracles for the test suite."""

import numpy as np


def unit_ball(n, dim, rng):
    """n points uniform in the unit ball of the given dimension."""
    x = rng.standard_normal((n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / dim)
    return x * r[:, None]


def numeric_grads(model, objective, h=1e-5):
    """Central-difference gradient of a scalar objective over all model
    parameters; the oracle every analytic gradient is checked against."""
    from d2l.network import Gradients

    grads_w, grads_b = [], []
    for params, out in ((model.weights, grads_w), (model.biases, grads_b)):
        for arr in params:
            grad = np.zeros_like(arr)
            flat, gflat = arr.ravel(), grad.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                f_plus = objective()
                flat[idx] = orig - h
                f_minus = objective()
                flat[idx] = orig
                gflat[idx] = (f_plus - f_minus) / (2.0 * h)
            out.append(grad)
    return Gradients(weights=grads_w, biases=grads_b)


def flatten_grads(grads):
    return np.concatenate([g.ravel() for g in grads.weights + grads.biases])


def max_rel_error(analytic, numeric):
    """Worst per-coordinate relative error, floored at 1e-4 magnitude so
    finite-difference noise on near-zero coordinates cannot dominate."""
    a, n = flatten_grads(analytic), flatten_grads(numeric)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4)
    return float(np.max(np.abs(a - n) / scale))


def brute_force_knn(query, refs, k, exclude_self=False):
    """Exhaustive-scan kNN oracle: all distances, full sort, slice.

    Distances are squared differences accumulated in coordinate order then
    rooted, the arithmetic the library documents, so agreement must be
    exact.  Selection is deliberately naive: sort everything, drop one
    zero if excluding self, take the first k.
    """
    refs = np.asarray(refs, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    sq = np.zeros(len(refs))
    for j in range(refs.shape[1]):
        sq += (refs[:, j] - query[j]) ** 2
    dists = np.sort(np.sqrt(sq))
    if exclude_self and dists[0] == 0.0:
        dists = dists[1:]
    return dists[:k]
