"""KMeans (greedy k-means++ seeding, Lloyd iterations with a Hartigan
transfer pass) and per-cluster top terms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .textvec import DocTermMatrix

IterationHook = Callable[[int, int, float], None]


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 3
    seed: int = 42
    max_iters: int = 300
    tol: float = 1e-6
    n_restarts: int = 10

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class Clustering:
    assignments: np.ndarray  # (n,), ints in [0, k)
    centroids: np.ndarray  # (k, d)
    inertia: float
    iterations_run: int
    restart: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = np.empty((points.shape[0], centroids.shape[0]))
    for j, c in enumerate(centroids):
        diff = points - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)  # first minimum: lowest index wins ties
    return labels, d2[np.arange(points.shape[0]), labels]


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each step draws several D^2-weighted candidates and
    keeps the one that lowers the total potential most."""
    n = points.shape[0]
    trials = 2 + int(np.log(k))
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(points, points[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = float(closest.sum())
        if total > 0:
            cumulative = np.cumsum(closest)
            draws = np.searchsorted(cumulative, rng.random(trials) * total, side="right")
            candidates = []
            for idx in np.minimum(draws, n - 1).tolist():
                # Rounding at the top end can land on a zero-weight point.
                while closest[idx] == 0 and idx > 0:
                    idx -= 1
                candidates.append(idx)
        else:
            candidates = [int(rng.integers(n))]
        best_idx, best_closest, best_pot = -1, closest, np.inf
        for idx in candidates:
            trial = np.minimum(closest, _sq_dists(points, points[idx][None, :])[:, 0])
            pot = float(trial.sum())
            if pot < best_pot:
                best_idx, best_closest, best_pot = idx, trial, pot
        chosen.append(best_idx)
        closest = best_closest
    return points[chosen].copy()


def _update_centroids(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    k = centroids.shape[0]
    new = np.empty_like(centroids)
    counts = np.bincount(labels, minlength=k)
    for j in range(k):
        if counts[j]:
            new[j] = points[labels == j].mean(axis=0)
    for j in np.flatnonzero(counts == 0):
        # Empty cluster: re-seed on the point farthest from its own centroid.
        member_centroids = new[labels]
        far = np.einsum("ij,ij->i", points - member_centroids, points - member_centroids)
        idx = int(np.argmax(far))
        new[j] = points[idx]
        labels[idx] = j
    return new


def _hartigan(points: np.ndarray, labels: np.ndarray, k: int) -> bool:
    """Single-point transfer passes until no move lowers the objective.

    Moving x from cluster A (size a) to B (size b) changes inertia by
    b/(b+1)*|x-cB|^2 - a/(a-1)*|x-cA|^2. Returns True if anything moved.
    """
    counts = np.bincount(labels, minlength=k).astype(float)
    centroids = np.array([points[labels == j].mean(axis=0) if counts[j] else points[0] for j in range(k)])
    moved_any = False
    while True:
        moved = False
        for i in range(points.shape[0]):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = _sq_dists(points[i : i + 1], centroids)[0]
            remove_gain = counts[a] / (counts[a] - 1.0) * d2[a]
            add_cost = counts / (counts + 1.0) * d2
            add_cost[a] = np.inf
            b = int(np.argmin(add_cost))
            if add_cost[b] < remove_gain * (1.0 - 1e-12):
                x = points[i]
                labels[i] = b
                centroids[a] = (centroids[a] * counts[a] - x) / (counts[a] - 1.0)
                centroids[b] = (centroids[b] * counts[b] + x) / (counts[b] + 1.0)
                counts[a] -= 1
                counts[b] += 1
                moved = moved_any = True
        if not moved:
            return moved_any


def _lloyd(
    points: np.ndarray,
    centroids: np.ndarray,
    config: KMeansConfig,
    restart: int,
    hook: IterationHook | None,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        labels, d2 = _assign(points, centroids)
        if hook is not None:
            hook(restart, iterations, float(d2.sum()))
        new = _update_centroids(points, labels, centroids)
        shift = float(np.max(np.abs(new - centroids)))
        centroids = new
        if shift < config.tol or shift == 0.0:
            labels, _ = _assign(points, centroids)
            if not _hartigan(points, labels, config.k):
                break
            centroids = _update_centroids(points, labels, centroids)
    labels, d2 = _assign(points, centroids)
    inertia = float(d2.sum())
    if hook is not None:
        hook(restart, iterations + 1, inertia)
    return labels, centroids, inertia, iterations


def kmeans(
    points: np.ndarray | Sequence[Sequence[float]],
    config: KMeansConfig | None = None,
    on_iteration: IterationHook | None = None,
) -> Clustering:
    """Best-of-restarts KMeans.

    Restart ``r`` seeds k-means++ with ``config.seed + r``. Points are sorted
    by value before seeding, so the result does not depend on input order.
    Once Lloyd settles, single-point transfers that still lower the
    objective are applied and Lloyd resumes, which escapes most of the
    shallow fixed points plain Lloyd stops at.
    ``on_iteration(restart, iteration, inertia)`` receives the objective
    after every assignment step.
    """
    config = config or KMeansConfig()
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < config.k:
        raise ClusterError("k exceeds corpus size")

    order = np.lexsort(x.T[::-1]) if x.shape[1] else np.arange(n)
    xs = x[order]
    best = None
    for r in range(config.n_restarts):
        rng = np.random.default_rng(config.seed + r)
        init = _kmeans_plus_plus(xs, config.k, rng)
        labels, centroids, inertia, iterations = _lloyd(xs, init, config, r, on_iteration)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia, iterations, r)

    labels_sorted, centroids, inertia, iterations, restart = best
    labels = np.empty(n, dtype=int)
    labels[order] = labels_sorted
    return Clustering(labels, centroids, inertia, iterations, restart)


def inertia_of(points: np.ndarray, clustering: Clustering) -> float:
    x = np.asarray(points, dtype=float)
    diff = x - clustering.centroids[clustering.assignments]
    return float(np.einsum("ij,ij->", diff, diff))


@dataclass(frozen=True)
class ClusterTheme:
    cluster_index: int
    size: int
    top_terms: tuple[tuple[str, float], ...]


def cluster_top_terms(matrix: DocTermMatrix, clustering: Clustering, m: int = 10) -> list[ClusterTheme]:
    """Top ``m`` terms per cluster by mean member TF-IDF weight.

    Ties go to the lexicographically smaller term; zero-mean terms are never listed.
    """
    if len(clustering.assignments) != matrix.n_docs:
        raise ClusterError(
            f"clustering has {len(clustering.assignments)} rows, matrix has {matrix.n_docs}"
        )
    k = clustering.k
    sums: list[dict[int, float]] = [{} for _ in range(k)]
    sizes = [0] * k
    for row, label in zip(matrix.rows, clustering.assignments.tolist()):
        sizes[label] += 1
        acc = sums[label]
        for col, w in row:
            acc[col] = acc.get(col, 0.0) + w
    terms = matrix.vocabulary.terms
    themes = []
    for j in range(k):
        ranked = sorted(((-total / sizes[j], col) for col, total in sums[j].items() if total > 0))
        top = tuple((terms[col], -neg) for neg, col in ranked[: max(m, 0)])
        themes.append(ClusterTheme(j, sizes[j], top))
    return themes


def clusters_json(
    clustering: Clustering,
    themes: Sequence[ClusterTheme],
    bug_ids: Sequence[str],
    seed: int,
) -> dict:
    members: list[list[str]] = [[] for _ in range(clustering.k)]
    for bug_id, label in zip(bug_ids, clustering.assignments.tolist()):
        members[label].append(bug_id)
    return {
        "k": clustering.k,
        "seed": seed,
        "inertia": clustering.inertia,
        "clusters": [
            {
                "index": t.cluster_index,
                "size": t.size,
                "top_terms": [[term, weight] for term, weight in t.top_terms],
                "bug_ids": members[t.cluster_index],
            }
            for t in themes
        ],
    }
