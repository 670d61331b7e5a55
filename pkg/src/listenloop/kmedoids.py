"""k-medoids clustering: greedy BUILD seeding plus bounded best-improvement
SWAP passes, fully deterministic for a given seed.

Cost is the sum of Euclidean distances from every point to its nearest
medoid. The swap evaluation uses the nearest/second-nearest decomposition
so one pass costs O(n * (n - k)) instead of O(k * n * (n - k)).

BUILD+SWAP alone can stall in a local optimum (roughly one pool in ten at
toy sizes), so small pools additionally refine a few seeded random starts
and keep the cheapest clustering. Large pools skip the restarts: there the
BUILD seeding is strong, restarts are expensive, and proposal quality does
not hinge on exact optimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_SWAP_PASSES = 50
SMALL_POOL_LIMIT = 256
SMALL_POOL_RESTARTS = 8


@dataclass(frozen=True)
class KMedoidsResult:
    medoid_indices: tuple[int, ...]
    cost: float
    swap_passes: int
    converged: bool


def pairwise_euclidean(points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def total_cost(distances: np.ndarray, medoids: "list[int] | tuple[int, ...]") -> float:
    return float(distances[:, list(medoids)].min(axis=1).sum())


def _build(distances: np.ndarray, k: int, order: np.ndarray) -> list[int]:
    n = distances.shape[0]
    totals = distances.sum(axis=0)
    first = _argmin_with_order(totals, order)
    medoids = [first]
    nearest = distances[:, first].copy()
    chosen = np.zeros(n, dtype=bool)
    chosen[first] = True
    while len(medoids) < k:
        # gain of adding candidate j: how much closer points get to it
        gains = np.maximum(nearest[:, None] - distances, 0.0).sum(axis=0)
        gains[chosen] = -np.inf
        nxt = _argmax_with_order(gains, order)
        medoids.append(nxt)
        chosen[nxt] = True
        np.minimum(nearest, distances[:, nxt], out=nearest)
    return medoids


def _argmin_with_order(values: np.ndarray, order: np.ndarray) -> int:
    best = np.flatnonzero(values == values.min())
    return int(best[np.argmin(order[best])])


def _argmax_with_order(values: np.ndarray, order: np.ndarray) -> int:
    best = np.flatnonzero(values == values.max())
    return int(best[np.argmin(order[best])])


def _swap_pass(distances: np.ndarray, medoids: list[int], order: np.ndarray) -> float:
    """Apply the single best cost-reducing swap; returns the cost change."""
    n = distances.shape[0]
    med = np.asarray(medoids)
    dm = distances[:, med]  # (n, k)
    ranks = np.argsort(dm, axis=1)
    d1 = dm[np.arange(n), ranks[:, 0]]
    owner = ranks[:, 0]  # position within the medoid list
    d2 = dm[np.arange(n), ranks[:, 1]] if len(medoids) > 1 else np.full(n, np.inf)

    in_set = np.zeros(n, dtype=bool)
    in_set[med] = True
    candidates = np.flatnonzero(~in_set)
    if candidates.size == 0:
        return 0.0

    best_key: tuple[float, int, int] | None = None
    best_pair: tuple[int, int] | None = None
    for j in candidates:
        dj = distances[:, j]
        gain = np.minimum(dj - d1, 0.0)
        base = float(gain.sum())
        # correction for points whose current medoid is the one removed
        corr = np.minimum(dj, d2) - d1 - gain
        deltas = np.full(len(medoids), base)
        np.add.at(deltas, owner, corr)
        pos = int(np.argmin(deltas))
        key = (float(deltas[pos]), int(order[j]), int(order[med[pos]]))
        if best_key is None or key < best_key:
            best_key = key
            best_pair = (int(med[pos]), int(j))
    if best_pair is None or best_key is None or best_key[0] >= -1e-12:
        return 0.0
    medoids[medoids.index(best_pair[0])] = best_pair[1]
    return best_key[0]


def _refine(
    distances: np.ndarray,
    medoids: list[int],
    order: np.ndarray,
    max_swap_passes: int,
) -> KMedoidsResult:
    passes = 0
    converged = False
    for _ in range(max_swap_passes):
        passes += 1
        if _swap_pass(distances, medoids, order) == 0.0:
            converged = True
            break
    return KMedoidsResult(
        medoid_indices=tuple(medoids),
        cost=total_cost(distances, medoids),
        swap_passes=passes,
        converged=converged,
    )


def k_medoids(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_swap_passes: int = DEFAULT_MAX_SWAP_PASSES,
    restarts: int | None = None,
) -> KMedoidsResult:
    """Cluster ``points`` and return the indices of the k medoids.

    The seed drives tie-breaking and the random restarts, so the same seed
    always gives the same clustering. ``restarts=None`` picks the default:
    a few extra seeded starts on small pools, none on large ones.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    order = np.empty(n, dtype=np.int64)
    order[rng.permutation(n)] = np.arange(n)
    if restarts is None:
        restarts = SMALL_POOL_RESTARTS if n <= SMALL_POOL_LIMIT else 0

    distances = pairwise_euclidean(points)
    best = _refine(distances, _build(distances, k, order), order, max_swap_passes)
    for _ in range(restarts):
        start = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
        candidate = _refine(distances, start, order, max_swap_passes)
        if candidate.cost < best.cost - 1e-12:
            best = candidate
    return best
