"""Shared test helpers."""

import math

import numpy as np


def build_hub_instance(n_queries=20, seed=0, d=40):
    """Retrieval instance with a deliberate hub target.

    Every query sits at cosine 0.8 to one shared direction (the hub,
    target 0) and at cosine 0.7 to its own specific target; in high
    dimension the cross-talk between distinct queries' specifics stays
    small, so the hub wins plain cosine retrieval for every query while
    carrying a large neighborhood penalty.
    """
    rng = np.random.default_rng(seed)
    u = np.zeros(d)
    u[0] = 1.0
    queries = []
    specifics = []
    for _ in range(n_queries):
        v = rng.normal(size=d)
        v -= (v @ u) * u
        v /= np.linalg.norm(v)
        q = 0.8 * u + 0.6 * v
        queries.append(q)
        w = rng.normal(size=d)
        w -= (w @ u) * u
        w -= (w @ v) * v
        w /= np.linalg.norm(w)
        specifics.append(0.7 * q + math.sqrt(1.0 - 0.49) * w)
    targets = np.vstack([u] + specifics)  # hub is target 0
    return np.vstack(queries), targets


def cayley_rotation(rng, d, strength):
    """Rotation with bounded angle via the Cayley transform of a skew matrix."""
    a = strength * rng.normal(size=(d, d))
    a = (a - a.T) / 2.0
    i = np.eye(d)
    return np.linalg.solve(i + a, i - a)
