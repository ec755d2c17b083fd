"""Geometry kernels: PCA projection, seeded K-Means++ and nearest-point search.

All routines are deterministic: PCA uses a fixed sign convention, K-Means++
draws from a seeded generator, and every argmin tie resolves to the lowest
index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RANK_TOL = 1e-12


@dataclass(frozen=True)
class Projection:
    """Affine map x -> (x - mean) @ components.T with orthonormal rows."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class Clustering:
    n_clusters: int
    centroids: np.ndarray
    assignments: np.ndarray
    sizes: np.ndarray


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def _complete_basis(components: np.ndarray, p: int, want: int) -> np.ndarray:
    """Extend orthonormal rows to ``want`` rows using standard basis vectors."""
    rows = [components[i] for i in range(components.shape[0])]
    for j in range(p):
        if len(rows) >= want:
            break
        cand = np.zeros(p)
        cand[j] = 1.0
        for r in rows:
            cand -= np.dot(cand, r) * r
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            rows.append(cand / norm)
    return np.array(rows[:want])


def pca_fit(X: np.ndarray, n_components: int) -> Projection:
    """Principal directions by descending variance (population convention).

    Uses the p x p covariance when p <= n, otherwise the n x n Gram matrix.
    The requested dimension is clamped to min(n_components, p); directions
    beyond the achievable rank are orthonormal fill-ins with zero variance.
    Sign convention: the largest-magnitude coordinate of each component is
    positive (first such coordinate on magnitude ties).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-D matrix")
    n, p = X.shape
    d = max(0, min(n_components, p))
    mean = X.mean(axis=0)
    centered = X - mean

    if p <= n:
        cov = centered.T @ centered / n
        eigval, eigvec = np.linalg.eigh(cov)
        order = np.argsort(eigval)[::-1]
        variance = np.clip(eigval[order[:d]], 0.0, None)
        components = eigvec[:, order[:d]].T
    else:
        gram = centered @ centered.T / n
        eigval, eigvec = np.linalg.eigh(gram)
        order = np.argsort(eigval)[::-1]
        eigval = np.clip(eigval[order], 0.0, None)
        eigvec = eigvec[:, order]
        rank = int(np.sum(eigval > _RANK_TOL))
        keep = min(d, rank)
        scale = np.sqrt(n * eigval[:keep])
        components = (centered.T @ eigvec[:, :keep] / scale).T
        variance = np.concatenate([eigval[:keep], np.zeros(d - keep)])
        if keep < d:
            components = _complete_basis(components, p, d)

    return Projection(
        mean=mean,
        components=_fix_signs(np.atleast_2d(components.reshape(d, p))),
        explained_variance=variance,
    )


def identity_projection(p: int) -> Projection:
    """The 'no projection' stage: mean 0, identity components (d = p)."""
    return Projection(
        mean=np.zeros(p),
        components=np.eye(p),
        explained_variance=np.zeros(p),
    )


def pca_transform(proj: Projection, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != proj.mean.shape[0]:
        raise ValueError(
            f"expected {proj.mean.shape[0]} columns, got {X.shape[1] if X.ndim == 2 else X.shape}"
        )
    return (X - proj.mean) @ proj.components.T


def _squared_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _assign_with_repair(X: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """Nearest-centroid assignment; empty clusters are reseeded at the point
    farthest from its own centroid until none is empty."""
    while True:
        d2 = _squared_distances(X, centroids)
        assign = np.argmin(d2, axis=1)
        sizes = np.bincount(assign, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            return assign
        own = d2[np.arange(X.shape[0]), assign]
        centroids[empty[0]] = X[int(np.argmax(own))]


def kmeans_pp(
    X: np.ndarray,
    n_clusters: int,
    seed: int,
    max_iter: int = 100,
    inertia_trace: list | None = None,
) -> Clustering:
    """K-Means++ seeding (D^2 sampling) followed by Lloyd iterations until the
    assignment reaches a fixpoint or ``max_iter`` passes.

    ``n_clusters`` is clamped to the number of distinct rows, so the result
    never has an empty cluster.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-D matrix")
    n = X.shape[0]
    # canonical row order makes the result a function of the point multiset,
    # invariant under input row permutation
    order = np.lexsort(X.T[::-1])
    Xs = X[order]
    distinct = np.unique(Xs, axis=0).shape[0]
    k = max(1, min(n_clusters, distinct))
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, X.shape[1]))
    centroids[0] = Xs[int(rng.integers(n))]
    if k > 1:
        best_d2 = np.sum((Xs - centroids[0]) ** 2, axis=1)
        for c in range(1, k):
            cum = np.cumsum(best_d2 / best_d2.sum())
            pick = int(np.searchsorted(cum, rng.random(), side="right"))
            if pick >= n or best_d2[pick] == 0.0:
                pick = int(np.argmax(best_d2))
            centroids[c] = Xs[pick]
            best_d2 = np.minimum(best_d2, np.sum((Xs - centroids[c]) ** 2, axis=1))

    assign = None
    for _ in range(max_iter):
        new_assign = _assign_with_repair(Xs, centroids, k)
        if inertia_trace is not None:
            d2 = _squared_distances(Xs, centroids)
            inertia_trace.append(float(d2[np.arange(n), new_assign].sum()))
        if assign is not None and np.array_equal(assign, new_assign):
            assign = new_assign
            break
        assign = new_assign
        for c in range(k):
            centroids[c] = Xs[assign == c].mean(axis=0)
    else:
        assign = _assign_with_repair(Xs, centroids, k)

    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = assign
    sizes = np.bincount(assign, minlength=k)
    return Clustering(n_clusters=k, centroids=centroids, assignments=assignments, sizes=sizes)


def nearest_point(X: np.ndarray, target: np.ndarray) -> int:
    """Index of the row of X closest to ``target`` in Euclidean distance;
    ties resolve to the lowest index."""
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-D matrix")
    diff = X - target
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
