import numpy as np
import pytest

from softpc.cloud import PointCloud, build_knn_graph
from softpc.errors import NumericalError, ParameterError
from softpc.neural.layers import (
    dense_backward,
    dense_forward,
    gcn_backward,
    gcn_forward,
    gcn_propagation,
    leaky_relu,
    leaky_relu_backward,
    power_normalize,
    power_normalize_backward,
    tanh_backward,
    tanh_forward,
    topk_pool,
    topk_pool_backward,
)

from conftest import finite_difference_gradient, relative_error

N_GRAD_INSTANCES = 20


def random_graph(rng, n, k=3):
    cloud = PointCloud(rng.uniform(-1, 1, size=(n, 3)))
    return build_knn_graph(cloud, k)


def weighted_sum(out, weights):
    return float(np.sum(out * weights))


# ---------------------------------------------------------------------------
# Graph convolution
# ---------------------------------------------------------------------------


def test_gcn_isolated_vertex_is_identity():
    adjacency = np.zeros((1, 1), dtype=np.uint8)
    prop = gcn_propagation(adjacency)
    x = np.array([[0.3, -0.7, 2.0]])
    out, _ = gcn_forward(x, prop, np.eye(3), np.zeros(3))
    assert np.allclose(out, x)


def test_gcn_two_vertices_identical_rows():
    adjacency = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    prop = gcn_propagation(adjacency)
    row = np.array([0.5, -1.0, 0.25])
    x = np.stack([row, row])
    out, _ = gcn_forward(x, prop, np.eye(3), np.zeros(3))
    # Each vertex averages itself with its identical neighbor: (x + x) / 2 = x.
    assert np.allclose(out, x)


def test_gcn_gradients(rng):
    for _ in range(N_GRAD_INSTANCES):
        n, c_in, c_out = 7, 4, 5
        graph = random_graph(rng, n)
        prop = gcn_propagation(graph.adjacency)
        x = rng.standard_normal((n, c_in))
        theta = rng.standard_normal((c_in, c_out))
        bias = rng.standard_normal(c_out)
        weights = rng.standard_normal((n, c_out))

        out, ctx = gcn_forward(x, prop, theta, bias)
        grad_x, grad_theta, grad_bias = gcn_backward(ctx, weights)

        for target, analytic in ((x, grad_x), (theta, grad_theta), (bias, grad_bias)):
            numeric = finite_difference_gradient(
                lambda: weighted_sum(gcn_forward(x, prop, theta, bias)[0], weights), target
            )
            assert relative_error(analytic, numeric) < 1e-4


def test_gcn_shape_errors(rng):
    graph = random_graph(rng, 5)
    prop = gcn_propagation(graph.adjacency)
    with pytest.raises(ParameterError):
        gcn_forward(np.zeros((4, 3)), prop, np.eye(3), np.zeros(3))
    with pytest.raises(ParameterError):
        gcn_forward(np.zeros((5, 3)), prop, np.eye(4), np.zeros(4))


# ---------------------------------------------------------------------------
# Leaky ReLU
# ---------------------------------------------------------------------------


def test_leaky_relu_values():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    out, _ = leaky_relu(x, 0.01)
    assert np.allclose(out, [-0.02, -0.005, 0.0, 0.5, 2.0])


def test_leaky_relu_gradient(rng):
    for _ in range(N_GRAD_INSTANCES):
        x = rng.standard_normal(30)
        # Keep entries away from the kink so the FD check is clean.
        x[np.abs(x) < 1e-3] += 0.01
        weights = rng.standard_normal(30)
        out, ctx = leaky_relu(x, 0.01)
        analytic = leaky_relu_backward(ctx, weights)
        numeric = finite_difference_gradient(lambda: weighted_sum(leaky_relu(x, 0.01)[0], weights), x)
        assert relative_error(analytic, numeric) < 1e-4


# ---------------------------------------------------------------------------
# Top-K pooling
# ---------------------------------------------------------------------------


def test_topk_hand_selection():
    x = np.array([[2.0], [0.5], [1.0]])
    adjacency = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.uint8)
    proj = np.array([1.0])
    x_out, sub_adj, kept, _ = topk_pool(x, adjacency, proj, 2.0 / 3.0)
    assert kept.tolist() == [0, 2]
    assert sub_adj.tolist() == [[0, 0], [0, 0]]
    assert np.allclose(x_out[:, 0], [2.0 * np.tanh(2.0), 1.0 * np.tanh(1.0)])


def test_topk_ratio_one_keeps_all(rng):
    x = rng.standard_normal((6, 4))
    graph = random_graph(rng, 6)
    proj = rng.standard_normal(4)
    x_out, sub_adj, kept, _ = topk_pool(x, graph.adjacency, proj, 1.0)
    assert kept.tolist() == list(range(6))
    assert np.array_equal(sub_adj, graph.adjacency)
    gate = np.tanh(x @ (proj / np.linalg.norm(proj)))
    assert np.allclose(x_out, x * gate[:, None])


def test_topk_tie_breaks_low_index():
    x = np.array([[1.0], [1.0], [0.0]])
    adjacency = np.zeros((3, 3), dtype=np.uint8)
    _, _, kept, _ = topk_pool(x, adjacency, np.array([1.0]), 1.0 / 3.0)
    assert kept.tolist() == [0]


def test_topk_zero_projection_rejected(rng):
    x = rng.standard_normal((4, 3))
    with pytest.raises(ParameterError):
        topk_pool(x, np.zeros((4, 4), dtype=np.uint8), np.zeros(3), 0.5)


def test_topk_gradients_fixed_selection(rng):
    checked = 0
    trials = 0
    while checked < N_GRAD_INSTANCES and trials < 10 * N_GRAD_INSTANCES:
        trials += 1
        n, c = 8, 4
        graph = random_graph(rng, n)
        x = rng.standard_normal((n, c))
        proj = rng.standard_normal(c)
        ratio = 0.5
        scores = x @ (proj / np.linalg.norm(proj))
        order = np.sort(scores)[::-1]
        k = int(np.ceil(ratio * n))
        # Skip instances whose selection could flip inside the FD step.
        if order[k - 1] - order[k] < 1e-3:
            continue
        checked += 1
        weights = rng.standard_normal((k, c))

        out, _, _, ctx = topk_pool(x, graph.adjacency, proj, ratio)
        grad_x, grad_proj = topk_pool_backward(ctx, weights)
        for target, analytic in ((x, grad_x), (proj, grad_proj)):
            numeric = finite_difference_gradient(
                lambda: weighted_sum(topk_pool(x, graph.adjacency, proj, ratio)[0], weights), target
            )
            assert relative_error(analytic, numeric) < 1e-4
    assert checked == N_GRAD_INSTANCES


# ---------------------------------------------------------------------------
# Power normalization
# ---------------------------------------------------------------------------


def test_power_normalize_hand_case():
    z, _ = power_normalize(np.array([[3.0], [4.0]]), power=1.0)
    assert np.allclose(z, np.array([[3.0], [4.0]]) * np.sqrt(2.0) / 5.0)
    assert np.sum(z**2) == pytest.approx(2.0, abs=1e-12)


def test_power_normalize_idempotent(rng):
    z_raw = rng.standard_normal((6, 5))
    z1, _ = power_normalize(z_raw)
    z2, _ = power_normalize(z1)
    assert np.max(np.abs(z2 - z1)) < 1e-12


def test_power_normalize_exact_constraint(rng):
    for _ in range(10):
        z_raw = rng.standard_normal((9, 7)) * rng.uniform(0.01, 100)
        z, _ = power_normalize(z_raw, power=2.5)
        assert abs(np.sum(z**2) - z.size * 2.5) < 1e-9


def test_power_normalize_zero_rejected():
    with pytest.raises(NumericalError):
        power_normalize(np.zeros((3, 3)))


def test_power_normalize_gradient(rng):
    for _ in range(N_GRAD_INSTANCES):
        z_raw = rng.standard_normal((5, 4))
        weights = rng.standard_normal((5, 4))
        _, ctx = power_normalize(z_raw)
        analytic = power_normalize_backward(ctx, weights)
        numeric = finite_difference_gradient(
            lambda: weighted_sum(power_normalize(z_raw)[0], weights), z_raw
        )
        assert relative_error(analytic, numeric) < 1e-4


# ---------------------------------------------------------------------------
# Dense + tanh
# ---------------------------------------------------------------------------


def test_dense_and_tanh_gradients(rng):
    for _ in range(N_GRAD_INSTANCES):
        x = rng.standard_normal(6)
        w = rng.standard_normal((6, 4))
        b = rng.standard_normal(4)
        weights = rng.standard_normal(4)

        def loss():
            h, _ = dense_forward(x, w, b)
            out, _ = tanh_forward(h)
            return weighted_sum(out, weights)

        h, dctx = dense_forward(x, w, b)
        out, tctx = tanh_forward(h)
        grad_h = tanh_backward(tctx, weights)
        grad_x, grad_w, grad_b = dense_backward(dctx, grad_h)
        for target, analytic in ((x, grad_x), (w, grad_w), (b, grad_b)):
            numeric = finite_difference_gradient(loss, target)
            assert relative_error(analytic, numeric) < 1e-4
