"""Seeded k-means used by the init refinement and the clustering baseline."""

from __future__ import annotations

import numpy as np

from .errors import TooFewPoints


def kmeans_pp_init(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy distance-squared seeding of k centers."""
    n = values.shape[0]
    centers = np.empty((k, values.shape[1]))
    centers[0] = values[rng.integers(n)]
    closest = ((values - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = values[rng.integers(n)]
        else:
            centers[j] = values[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((values - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(
    values: np.ndarray,
    k: int,
    rng: np.random.Generator,
    restarts: int = 10,
    max_iter: int = 50,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Seeded Lloyd iterations; returns the best (centers, assignments, inertia).

    Assignment ties go to the lower center index; an emptied cluster is
    re-seeded at the point farthest from its assigned center.
    """
    n = values.shape[0]
    if k > n:
        raise TooFewPoints(f"{k} clusters requested for {n} points")
    best: tuple[np.ndarray, np.ndarray, float] | None = None
    for _ in range(restarts):
        centers = kmeans_pp_init(values, k, rng)
        assign = np.full(n, -1, dtype=np.int64)
        for _ in range(max_iter):
            dist = ((values[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_assign = dist.argmin(axis=1)
            for j in range(k):
                members = new_assign == j
                if members.any():
                    centers[j] = values[members].mean(axis=0)
                else:
                    centers[j] = values[dist.min(axis=1).argmax()]
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
        dist = ((values[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        inertia = float(dist[np.arange(n), assign].sum())
        if best is None or inertia < best[2]:
            best = (centers, assign, inertia)
    return best
