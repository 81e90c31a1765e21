import numpy as np
import pytest

from softpc.cloud import (
    PointCloud,
    build_knn_graph,
    chamfer_distance,
    chamfer_distance_and_gradient,
    chamfer_gradient,
    denormalize,
    normalize,
    octree_decompose,
)
from softpc.errors import DegenerateCloudError, ParameterError

from conftest import finite_difference_gradient, relative_error


def random_cloud(rng, n, scale=1.0):
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)))


# ---------------------------------------------------------------------------
# normalize / denormalize
# ---------------------------------------------------------------------------


def test_normalize_two_point_symmetry():
    cloud = PointCloud([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    normed, params = normalize(cloud, margin=0.0)
    assert np.allclose(normed.points, [[-1, 0, 0], [1, 0, 0]])
    assert np.allclose(params.center, [1, 0, 0])


def test_normalize_idempotent(rng):
    normed, _ = normalize(random_cloud(rng, 50))
    again, _ = normalize(normed)
    assert np.max(np.abs(again.points - normed.points)) < 1e-12


def test_normalize_round_trip(rng):
    cloud = random_cloud(rng, 100, scale=7.3)
    normed, params = normalize(cloud)
    back = denormalize(normed, params)
    assert np.max(np.abs(back.points - cloud.points)) < 1e-9


def test_normalize_margin_and_centroid(rng):
    normed, _ = normalize(random_cloud(rng, 64), margin=0.05)
    assert np.allclose(normed.points.mean(axis=0), 0.0, atol=1e-12)
    assert np.abs(normed.points).max() == pytest.approx(0.95, abs=1e-12)


def test_normalize_degenerate_rejected():
    cloud = PointCloud(np.ones((5, 3)))
    with pytest.raises(DegenerateCloudError):
        normalize(cloud)


def test_cloud_validation():
    with pytest.raises(ParameterError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ParameterError):
        PointCloud([[np.nan, 0.0, 0.0]])
    with pytest.raises(ParameterError):
        PointCloud(np.zeros((4, 2)))


# ---------------------------------------------------------------------------
# KNN graph
# ---------------------------------------------------------------------------


def test_knn_collinear_hand_case():
    cloud = PointCloud([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
    graph = build_knn_graph(cloud, 1)
    assert graph.edges.tolist() == [[0, 1], [1, 2]]
    assert graph.degrees().min() >= 1


def test_knn_complete_graph(rng):
    cloud = random_cloud(rng, 9)
    graph = build_knn_graph(cloud, 8)
    assert np.array_equal(graph.adjacency, np.ones((9, 9), dtype=np.uint8) - np.eye(9, dtype=np.uint8))


def brute_force_neighbors(points, k):
    n = len(points)
    out = []
    for i in range(n):
        dists = []
        for j in range(n):
            if j == i:
                continue
            d = np.sqrt(np.sum((points[i] - points[j]) ** 2))
            dists.append((d, j))
        dists.sort(key=lambda t: (t[0], t[1]))
        out.append({j for _, j in dists[:k]})
    return out


def test_knn_matches_brute_force(rng):
    cloud = random_cloud(rng, 50)
    k = 4
    graph = build_knn_graph(cloud, k)
    neighbor_sets = brute_force_neighbors(cloud.points, k)
    expected = np.zeros((50, 50), dtype=np.uint8)
    for i, nbrs in enumerate(neighbor_sets):
        for j in nbrs:
            expected[i, j] = 1
            expected[j, i] = 1
    assert np.array_equal(graph.adjacency, expected)


def test_knn_invariants(rng):
    cloud = random_cloud(rng, 40)
    graph = build_knn_graph(cloud, 5)
    a = graph.adjacency
    assert np.array_equal(a, a.T)
    assert np.all(np.diagonal(a) == 0)
    assert set(np.unique(a)) <= {0, 1}
    assert graph.degrees().min() >= 5


def test_knn_bad_k(rng):
    cloud = random_cloud(rng, 10)
    with pytest.raises(ParameterError):
        build_knn_graph(cloud, 10)
    with pytest.raises(ParameterError):
        build_knn_graph(cloud, 0)


# ---------------------------------------------------------------------------
# Octree
# ---------------------------------------------------------------------------


def test_octree_corner_points():
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    blocks = octree_decompose(PointCloud(corners), 1)
    assert sorted(blocks.block_sizes()) == [1] * 8


def test_octree_single_block(rng):
    cloud = random_cloud(rng, 12)
    blocks = octree_decompose(cloud, 12)
    assert len(blocks.blocks) == 1
    assert np.array_equal(np.sort(blocks.blocks[0].indices), np.arange(12))


def test_octree_partition(rng):
    cloud = random_cloud(rng, 1000)
    blocks = octree_decompose(cloud, 300)
    all_indices = np.concatenate([b.indices for b in blocks.blocks])
    assert np.array_equal(np.sort(all_indices), np.arange(1000))
    assert max(blocks.block_sizes()) <= 300
    assert blocks.oversized_leaves == 0


def test_octree_points_inside_cells(rng):
    cloud = random_cloud(rng, 300)
    blocks = octree_decompose(cloud, 40)
    for b in blocks.blocks:
        pts = cloud.points[b.indices]
        assert np.all(pts >= b.lower - 1e-12)
        assert np.all(pts <= b.upper + 1e-12)


def test_octree_duplicate_points_terminate():
    pts = np.concatenate([np.zeros((40, 3)), np.ones((3, 3))])
    blocks = octree_decompose(PointCloud(pts), 10)
    assert sum(blocks.block_sizes()) == 43
    assert blocks.oversized_leaves >= 1


# ---------------------------------------------------------------------------
# Chamfer distance
# ---------------------------------------------------------------------------


def brute_force_chamfer(a, b):
    fwd = np.empty(len(a))
    for i, p in enumerate(a):
        fwd[i] = min(np.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2) for q in b)
    bwd = np.empty(len(b))
    for j, q in enumerate(b):
        bwd[j] = min(np.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2) for p in a)
    return max(np.mean(fwd), np.mean(bwd))


def test_chamfer_identity(rng):
    cloud = random_cloud(rng, 30)
    assert chamfer_distance(cloud, cloud) == 0.0


def test_chamfer_hand_case():
    s = PointCloud([[0.0, 0, 0], [2.0, 0, 0]])
    s_hat = PointCloud([[0.0, 0, 0]])
    assert chamfer_distance(s, s_hat) == pytest.approx(1.0, abs=0)


def test_chamfer_matches_brute_force(rng):
    for _ in range(100):
        a = random_cloud(rng, int(rng.integers(1, 65)))
        b = random_cloud(rng, int(rng.integers(1, 65)))
        assert chamfer_distance(a, b) == brute_force_chamfer(a.points, b.points)


def test_chamfer_symmetric_nonnegative(rng):
    for _ in range(20):
        a = random_cloud(rng, 17)
        b = random_cloud(rng, 23)
        d_ab = chamfer_distance(a, b)
        assert d_ab == chamfer_distance(b, a)
        assert d_ab >= 0.0


def test_chamfer_gradient_zero_at_identity(rng):
    cloud = random_cloud(rng, 12)
    grad = chamfer_gradient(cloud, cloud)
    assert np.all(grad == 0.0)


def test_chamfer_gradient_single_pair():
    s = PointCloud([[0.0, 0, 0]])
    s_hat = PointCloud([[1.0, 0, 0]])
    grad = chamfer_gradient(s, s_hat)
    assert np.allclose(grad, [[1.0, 0.0, 0.0]])


def test_chamfer_gradient_finite_differences(rng):
    for _ in range(10):
        s = random_cloud(rng, 16)
        q = rng.uniform(-1, 1, size=(16, 3))

        def loss():
            return chamfer_distance(s, PointCloud(q))

        numeric = finite_difference_gradient(loss, q)
        analytic = chamfer_gradient(s, PointCloud(q))
        assert relative_error(analytic, numeric) < 1e-4


def test_chamfer_combined_matches_separate(rng):
    a = random_cloud(rng, 20)
    b = random_cloud(rng, 25)
    dist, grad = chamfer_distance_and_gradient(a, b)
    assert dist == chamfer_distance(a, b)
    assert np.array_equal(grad, chamfer_gradient(a, b))
