import numpy as np
import pytest

from bellatrex.numeric import (
    identity_projection,
    kmeans_pp,
    nearest_point,
    pca_fit,
    pca_transform,
)


def match_partitions(a, b):
    """True when two labelings induce the same partition."""
    mapping = {}
    for la, lb in zip(a, b):
        if la in mapping and mapping[la] != lb:
            return False
        mapping[la] = lb
    return len(set(mapping.values())) == len(mapping)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def test_pca_identical_rows_zero_variance():
    X = np.tile([3.0, -1.0, 2.0], (6, 1))
    proj = pca_fit(X, 2)
    assert np.allclose(proj.explained_variance, 0.0)
    assert np.allclose(pca_transform(proj, X), 0.0)


def test_pca_line_y_equals_x():
    t = np.linspace(-2, 2, 9)
    X = np.column_stack([t, t])
    proj = pca_fit(X, 2)
    assert np.allclose(np.abs(proj.components[0]), [1 / np.sqrt(2)] * 2, atol=1e-12)
    assert proj.components[0][0] > 0  # sign convention
    assert proj.explained_variance[1] == pytest.approx(0.0, abs=1e-12)


def test_pca_full_rank_reconstruction(rng):
    X = rng.normal(size=(50, 10))
    proj = pca_fit(X, 10)
    Z = pca_transform(proj, X)
    back = Z @ proj.components + proj.mean
    assert np.max(np.abs(back - X)) < 1e-8


def test_pca_variance_sums_to_total(rng):
    X = rng.normal(size=(40, 7)) * rng.uniform(0.5, 3.0, size=7)
    proj = pca_fit(X, 7)
    total = X.var(axis=0).sum()
    assert proj.explained_variance.sum() == pytest.approx(total, rel=1e-6)


def test_pca_transform_of_mean_is_origin(rng):
    X = rng.normal(size=(12, 4))
    proj = pca_fit(X, 3)
    z = pca_transform(proj, proj.mean[None, :])
    assert np.allclose(z, 0.0, atol=1e-12)


def test_pca_single_point_maps_to_origin():
    proj = pca_fit(np.array([[5.0, 7.0, 1.0]]), 2)
    assert np.allclose(pca_transform(proj, np.array([[5.0, 7.0, 1.0]])), 0.0)


def test_pca_transform_matches_matrix_product_oracle():
    X = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0], [2.0, 2.0, 0.0]])
    proj = pca_fit(X, 2)
    expected = (X - proj.mean) @ proj.components.T  # independent product
    assert np.allclose(pca_transform(proj, X), expected)


def test_pca_rows_orthonormal(rng):
    X = rng.normal(size=(30, 6))
    proj = pca_fit(X, 6)
    gram = proj.components @ proj.components.T
    assert np.allclose(gram, np.eye(6), atol=1e-8)


def test_pca_gram_route_matches_covariance_route(rng):
    # p > n triggers the Gram-matrix route; eigenvalues must agree with the
    # covariance spectrum and rows stay orthonormal
    X = rng.normal(size=(5, 9))
    proj = pca_fit(X, 4)
    centered = X - X.mean(axis=0)
    cov_eigs = np.sort(np.linalg.eigvalsh(centered.T @ centered / 5))[::-1]
    assert np.allclose(proj.explained_variance, cov_eigs[:4], atol=1e-10)
    gram = proj.components @ proj.components.T
    assert np.allclose(gram, np.eye(4), atol=1e-8)
    # transform agrees with direct projection
    assert np.allclose(pca_transform(proj, X), centered @ proj.components.T)


def test_pca_gram_route_degenerate_rank_pads(rng):
    X = np.tile(rng.normal(size=9), (3, 1))  # identical rows, p > n
    proj = pca_fit(X, 3)
    assert proj.components.shape == (3, 9)
    assert np.allclose(proj.explained_variance, 0.0)
    assert np.allclose(proj.components @ proj.components.T, np.eye(3), atol=1e-8)


def test_pca_clamps_dimension(rng):
    X = rng.normal(size=(8, 3))
    proj = pca_fit(X, 10)
    assert proj.n_components == 3


def test_identity_projection_passthrough(rng):
    X = rng.normal(size=(5, 4))
    proj = identity_projection(4)
    assert np.array_equal(pca_transform(proj, X), X)


def test_pca_transform_dimension_mismatch(rng):
    proj = pca_fit(rng.normal(size=(5, 4)), 2)
    with pytest.raises(ValueError):
        pca_transform(proj, rng.normal(size=(5, 3)))


# ---------------------------------------------------------------------------
# K-Means++
# ---------------------------------------------------------------------------

def test_kmeans_single_cluster_is_mean(rng):
    X = rng.normal(size=(20, 3))
    cl = kmeans_pp(X, 1, seed=0)
    assert cl.n_clusters == 1
    assert np.allclose(cl.centroids[0], X.mean(axis=0))
    assert cl.sizes.tolist() == [20]


def test_kmeans_two_blobs(rng):
    a = rng.normal(size=(25, 2)) * 0.1
    b = rng.normal(size=(25, 2)) * 0.1 + 50.0
    X = np.vstack([a, b])
    cl = kmeans_pp(X, 2, seed=3)
    labels = cl.assignments
    assert len(set(labels[:25])) == 1
    assert len(set(labels[25:])) == 1
    assert labels[0] != labels[30]


def test_kmeans_k_clamped_to_distinct_rows():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    cl = kmeans_pp(X, 4, seed=1)
    assert cl.n_clusters == 2


def test_kmeans_k_at_least_n_distinct_zero_inertia(rng):
    X = rng.normal(size=(6, 2))
    cl = kmeans_pp(X, 6, seed=5)
    assert cl.n_clusters == 6
    assert sorted(cl.sizes.tolist()) == [1] * 6
    d = X - cl.centroids[cl.assignments]
    assert np.allclose(d, 0.0)


def test_kmeans_deterministic(rng):
    X = rng.normal(size=(40, 3))
    a = kmeans_pp(X, 3, seed=11)
    b = kmeans_pp(X, 3, seed=11)
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_every_point_at_nearest_centroid(rng):
    X = rng.normal(size=(60, 4))
    cl = kmeans_pp(X, 4, seed=2)
    d2 = ((X[:, None, :] - cl.centroids[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(np.argmin(d2, axis=1), cl.assignments)
    assert cl.sizes.sum() == 60
    assert np.all(cl.sizes > 0)


def test_kmeans_inertia_non_increasing(rng):
    X = rng.normal(size=(80, 3))
    trace: list[float] = []
    kmeans_pp(X, 4, seed=9, inertia_trace=trace)
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_kmeans_permutation_invariant_partition(rng):
    X = rng.normal(size=(30, 2))
    a = kmeans_pp(X, 3, seed=4)
    for _ in range(3):
        perm = rng.permutation(30)
        b = kmeans_pp(X[perm], 3, seed=4)
        labels_in_original_order = np.empty(30, dtype=int)
        labels_in_original_order[perm] = b.assignments
        assert match_partitions(a.assignments.tolist(),
                                labels_in_original_order.tolist())
        assert sorted(a.sizes.tolist()) == sorted(b.sizes.tolist())


# ---------------------------------------------------------------------------
# Nearest point
# ---------------------------------------------------------------------------

def test_nearest_point_exact_row(rng):
    X = rng.normal(size=(10, 3))
    assert nearest_point(X, X[7]) == 7


def test_nearest_point_tie_lowest_index():
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert nearest_point(X, np.zeros(2)) == 0


def test_nearest_point_matches_linear_scan(rng):
    X = rng.normal(size=(50, 3))
    target = rng.normal(size=3)
    dists = [float(np.linalg.norm(row - target)) for row in X]
    assert nearest_point(X, target) == int(np.argmin(dists))
    idx = nearest_point(X, target)
    assert all(dists[idx] <= d for d in dists)
