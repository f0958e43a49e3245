"""Lloyd k-means with two-stage initialization: global centroids over the
union of both memory banks seed the per-domain refinements, so cluster
index c means the same thing in both domains.

Clustering happens once, at the start of training, at R granularities
k_r = r * n_k.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import InvalidInputError, make_rng


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: list
    n_iter: int


@dataclass
class ClusterRun:
    k: int
    global_centroids: np.ndarray
    centroids_a: np.ndarray
    centroids_b: np.ndarray
    assignments_a: np.ndarray
    assignments_b: np.ndarray


def _sq_dists(points, centroids):
    # (n, k) squared Euclidean distances
    return (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )


def kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        idx = rng.choice(n, p=probs)
        centroids[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[c]) ** 2, axis=1))
    return centroids


def kmeans(points, k, init_centroids=None, max_iters=100, tol=1e-6, seed=0):
    """Lloyd iterations until the relative inertia drop falls below tol.

    Empty clusters are repaired by reseeding from the point farthest from
    its current centroid, which keeps inertia non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise InvalidInputError(f"need at least k={k} points, got {n}")
    if init_centroids is None:
        centroids = kmeans_pp_init(points, k, make_rng(seed))
    else:
        centroids = np.asarray(init_centroids, dtype=np.float64)
        if centroids.shape != (k, points.shape[1]):
            raise InvalidInputError(
                f"init centroids shape {centroids.shape} != {(k, points.shape[1])}")
        centroids = centroids.copy()

    history = []
    prev = np.inf
    assignments = None
    for it in range(max_iters):
        d2 = _sq_dists(points, centroids)
        assignments = np.argmin(d2, axis=1)
        point_cost = d2[np.arange(n), assignments]

        counts = np.bincount(assignments, minlength=k)
        for c in range(k):
            if counts[c] == 0:
                # reseed from the worst-fit point, but never strip a
                # cluster down to zero members
                movable = counts[assignments] > 1
                far = int(np.argmax(np.where(movable, point_cost, -np.inf)))
                counts[assignments[far]] -= 1
                counts[c] += 1
                centroids[c] = points[far]
                assignments[far] = c
                point_cost[far] = 0.0

        inertia = float(np.sum(np.sum((points - centroids[assignments]) ** 2, axis=1)))
        history.append(inertia)

        for c in range(k):
            mask = assignments == c
            centroids[c] = points[mask].mean(axis=0)

        post = float(np.sum(np.sum((points - centroids[assignments]) ** 2, axis=1)))
        if prev - post < tol * max(prev, 1e-300) or post == 0.0:
            inertia = post
            history[-1] = post
            break
        prev = post
    else:
        inertia = post
        history[-1] = post

    return KMeansResult(centroids, assignments, inertia, history, len(history))


def two_stage_centroids(bank_a_slots, bank_b_slots, k, seed=0,
                        max_iters=100, tol=1e-6):
    """Global k-means over the union, then per-domain refinement seeded from
    the global centroids. Row c of both domain centroid sets descends from
    global centroid c."""
    union = np.vstack([bank_a_slots, bank_b_slots])
    global_res = kmeans(union, k, max_iters=max_iters, tol=tol, seed=seed)
    res_a = kmeans(bank_a_slots, k, init_centroids=global_res.centroids,
                   max_iters=max_iters, tol=tol)
    res_b = kmeans(bank_b_slots, k, init_centroids=global_res.centroids,
                   max_iters=max_iters, tol=tol)
    return ClusterRun(
        k=k,
        global_centroids=global_res.centroids,
        centroids_a=res_a.centroids,
        centroids_b=res_b.centroids,
        assignments_a=res_a.assignments,
        assignments_b=res_b.assignments,
    )


def build_cluster_runs(bank_a_slots, bank_b_slots, n_k, R, seed=0):
    """R runs at k = n_k, 2*n_k, ..., R*n_k."""
    n_min = min(bank_a_slots.shape[0], bank_b_slots.shape[0])
    bad = [r * n_k for r in range(1, R + 1) if r * n_k > n_min]
    if bad:
        raise InvalidInputError(
            f"cluster counts {bad} exceed smallest domain size {n_min}")
    return [
        two_stage_centroids(bank_a_slots, bank_b_slots, r * n_k, seed=seed + r)
        for r in range(1, R + 1)
    ]
