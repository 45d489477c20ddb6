"""Shared builders for the randomized tests. All randomness is seeded numpy."""

import numpy as np

from poishare import (
    GameInstance,
    CORRIDOR_POI_COUNTS,
    PathSpec,
    UserType,
    UtilityModel,
    saturating_value_fn,
)


def random_types(rng, m, k, max_weight=None):
    """m user types with dirichlet proportions and dirichlet weight rows.

    With max_weight set, each row's largest entry is pinned to that value and
    the rest rescaled, matching the sweep harness convention.
    """

    props = rng.dirichlet(np.ones(m))
    weights = rng.dirichlet(np.ones(k), size=m)
    if max_weight is not None:
        for i in range(m):
            j = int(np.argmax(weights[i]))
            rest = 1.0 - weights[i, j]
            weights[i] = weights[i] * (1.0 - max_weight) / rest
            weights[i, j] = max_weight
    # renormalize exactly; the constructor checks the sum to 1e-12
    weights /= weights.sum(axis=1, keepdims=True)
    return [UserType(i, float(props[i]), tuple(weights[i])) for i in range(m)]


def common_instance(rng, k=2, m=2, max_cost=1.0, n=1000.0, population=2000,
                    max_weight=None):
    """Instance with one shared saturating value curve and random costs."""

    costs = rng.uniform(0.0, max_cost, size=k)
    costs[rng.integers(k)] = 0.0  # keep the normalized min at a known spot
    paths = [PathSpec(j, float(costs[j])) for j in range(k)]
    types = random_types(rng, m, k, max_weight)
    utility = UtilityModel(mode="common", common=saturating_value_fn(n, population))
    return GameInstance(tuple(paths), tuple(types), utility)


def per_path_instance(rng, k=6, m=6, max_cost=100.0, counts=None,
                      population=2000, max_weight=None):
    """Instance with one saturating curve per path (distinct PoI stocks)."""

    if counts is None:
        counts = CORRIDOR_POI_COUNTS[:k]
    costs = rng.uniform(0.0, max_cost, size=k)
    paths = [PathSpec(j, float(costs[j]), poi_capacity=int(counts[j]))
             for j in range(k)]
    types = random_types(rng, m, k, max_weight)
    utility = UtilityModel(mode="per-path", poi_counts=tuple(int(c) for c in counts),
                           population=population)
    return GameInstance(tuple(paths), tuple(types), utility)


def two_path_instance(rng, w0=None, c1=None, n=1000.0, population=2000):
    """Single-type two-path instance; path 0 carries the positive cost."""

    if w0 is None:
        w0 = float(rng.uniform(0.05, 0.95))
    if c1 is None:
        c1 = float(rng.uniform(0.0, 1.0))
    paths = (PathSpec(0, c1), PathSpec(1, 0.0))
    types = (UserType(0, 1.0, (w0, 1.0 - w0)),)
    utility = UtilityModel(mode="common", common=saturating_value_fn(n, population))
    return GameInstance(paths, types, utility)
