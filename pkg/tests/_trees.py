"""Random trees and a brute-force Shapley oracle shared by the attribution tests."""

from itertools import combinations
from math import factorial

import numpy as np

from driftscope.rashomon import DecisionTree


def random_tree(rng, m, max_depth, split_prob=0.8):
    """A random tree over ``m`` binary features; no feature repeats on a path."""

    def grow(depth, free):
        if depth < max_depth and free and rng.random() < split_prob:
            f = int(rng.choice(sorted(free)))
            rest = free - {f}
            return {"n0": 1.0, "n1": 1.0, "feature": f, "left": grow(depth + 1, rest), "right": grow(depth + 1, rest)}
        return {"n0": float(rng.integers(0, 20)), "n1": float(rng.integers(0, 20))}

    return DecisionTree.from_dict({"n_features": m, "root": grow(0, set(range(m)))})


def shapley_oracle(f, x, background):
    """Interventional Shapley values by the subset formula, written independently.

    ``v(S)`` is the mean of ``f`` over background rows whose ``S`` columns are
    replaced by ``x``.
    """
    x = np.asarray(x, dtype=float)
    R = np.asarray(background, dtype=float)
    m = x.size

    def v(S):
        Z = R.copy()
        Z[:, list(S)] = x[list(S)]
        return float(np.mean(f(Z)))

    cache = {}

    def value(S):
        key = frozenset(S)
        if key not in cache:
            cache[key] = v(sorted(key))
        return cache[key]

    phi = np.zeros(m)
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for size in range(m):
            w = factorial(size) * factorial(m - size - 1) / factorial(m)
            for S in combinations(others, size):
                phi[i] += w * (value(S + (i,)) - value(S))
    return phi
