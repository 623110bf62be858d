"""Independent reference computations used as test oracles.

Nothing here imports the package: each routine recomputes its quantity by
a different route (iteration, enumeration, plain loops).
"""
import itertools
import math

import numpy as np


def weight_objective(w, sigma):
    return float(np.sum((np.asarray(w) * np.asarray(sigma)) ** 2))


def projected_gradient_weights(alpha, sigma, iters=20000, tol=1e-15):
    """Minimize sum (w_j sigma_j)^2 over the hyperplane <w, alpha> = 1 by projected gradient."""
    alpha = np.asarray(alpha, dtype=float)
    var = np.asarray(sigma, dtype=float) ** 2
    a2 = float(alpha @ alpha)

    def project(v):
        return v - (float(v @ alpha) - 1.0) * alpha / a2

    w = project(np.zeros_like(alpha))
    step = 0.5 / var.max()
    for _ in range(iters):
        nxt = project(w - step * 2.0 * var * w)
        if np.max(np.abs(nxt - w)) < tol:
            return nxt
        w = nxt
    return w


def best_subset_value(values, K):
    return max(sum(values[i] for i in c) for c in itertools.combinations(range(len(values)), K))


def full_sort_top_k(scores, K):
    # sort by (-score, index) with plain python tuples
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[:K])


def gap_bound(K, K_max, J, delta, alpha, sigma, glm=True):
    norm = math.sqrt(sum((a / s) ** 2 for a, s in zip(alpha, sigma)))
    val = 2 * K * math.sqrt(math.log(K_max * math.e / delta))
    if glm:
        val += K * math.sqrt(J)
    return val / norm


def logistic(x):
    return 1.0 / (1.0 + math.exp(-x))
