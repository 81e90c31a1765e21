import numpy as np
import pytest
import scipy.fft

from softpc.cloud import PointCloud, build_knn_graph
from softpc.errors import NumericalError, ParameterError
from softpc.gspmath import (
    GftBasis,
    build_laplacian,
    dct_forward,
    dct_inverse,
    gft_basis_from_graph,
    gft_forward,
    gft_inverse,
    givens_factorize,
    jacobi_eigen,
    quantize_angles,
    reconstruct_basis,
    serialize_gft_basis,
    serialize_givens,
)


def path_graph_3():
    cloud = PointCloud([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    return build_knn_graph(cloud, 1)


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diagonal(r))


# ---------------------------------------------------------------------------
# Jacobi eigensolver
# ---------------------------------------------------------------------------


def test_jacobi_diagonal_input():
    values, vectors = jacobi_eigen(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(values, [1.0, 2.0, 3.0])
    expected = np.eye(3)[:, [1, 2, 0]]
    assert np.allclose(np.abs(vectors), expected)


def test_jacobi_2x2_hand_case():
    # Characteristic polynomial (2-l)^2 - 1 = 0 -> eigenvalues 1 and 3.
    values, _ = jacobi_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(values, [1.0, 3.0], atol=1e-12)


def char_poly_eigenvalues(a):
    """Roots of det(A - t I), an eigensolver-free oracle for tiny matrices."""
    n = a.shape[0]
    if n == 2:
        tr = a[0, 0] + a[1, 1]
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        disc = np.sqrt(tr * tr / 4.0 - det)
        return np.sort([tr / 2.0 - disc, tr / 2.0 + disc])
    assert n == 3
    c2 = -np.trace(a)
    c1 = 0.5 * (np.trace(a) ** 2 - np.trace(a @ a))
    c0 = -np.linalg.det(a)
    return np.sort(np.roots([1.0, c2, c1, c0]).real)


def test_jacobi_matches_characteristic_polynomial(rng):
    for n in (2, 3):
        for _ in range(25):
            m = rng.standard_normal((n, n))
            sym = (m + m.T) / 2.0
            values, _ = jacobi_eigen(sym)
            assert np.max(np.abs(values - char_poly_eigenvalues(sym))) < 1e-9


def test_jacobi_residuals_and_orthonormality(rng):
    m = rng.standard_normal((50, 50))
    sym = (m + m.T) / 2.0
    values, vectors = jacobi_eigen(sym)
    fro = np.linalg.norm(sym)
    for i in range(50):
        residual = np.linalg.norm(sym @ vectors[:, i] - values[i] * vectors[:, i])
        assert residual <= 1e-8 * fro
    assert np.linalg.norm(vectors.T @ vectors - np.eye(50)) < 1e-8
    assert np.all(np.diff(values) >= 0)
    # Independent oracle for the spectrum itself.
    assert np.allclose(values, np.linalg.eigvalsh(sym), atol=1e-9 * fro)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ParameterError):
        jacobi_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# Laplacians
# ---------------------------------------------------------------------------


def test_combinatorial_laplacian_path3():
    lap, deg = build_laplacian(path_graph_3(), "combinatorial")
    assert np.allclose(lap, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    assert np.allclose(deg, [1, 2, 1])


def test_sym_normalized_path3_spectrum():
    lap, _ = build_laplacian(path_graph_3(), "sym_normalized")
    values, _ = jacobi_eigen(lap)
    assert np.allclose(values, [0.0, 1.0, 2.0], atol=1e-9)
    # Brute-force oracle on the same matrix.
    assert np.allclose(np.linalg.eigvalsh(lap), [0.0, 1.0, 2.0], atol=1e-12)


def test_laplacian_nullspace_vector(rng):
    cloud = PointCloud(rng.uniform(-1, 1, size=(20, 3)))
    graph = build_knn_graph(cloud, 3)
    lap, deg = build_laplacian(graph, "sym_normalized")
    values, vectors = jacobi_eigen(lap)
    assert values[0] == pytest.approx(0.0, abs=1e-8)
    expected = np.sqrt(deg)
    expected /= np.linalg.norm(expected)
    v0 = vectors[:, 0]
    if v0 @ expected < 0:
        v0 = -v0
    # Valid when the graph is connected (KNN over a random blob always is here).
    assert np.allclose(v0, expected, atol=1e-6)


def test_laplacian_spectral_bounds(rng):
    for trial in range(5):
        cloud = PointCloud(rng.uniform(-1, 1, size=(25, 3)))
        graph = build_knn_graph(cloud, 4)
        for kind, upper in (("combinatorial", None), ("sym_normalized", 2.0)):
            lap, _ = build_laplacian(graph, kind)
            values, _ = jacobi_eigen(lap)
            assert values[0] >= -1e-9
            if upper is not None:
                assert values[-1] <= upper + 1e-9


def test_random_walk_compatible_matches_sym():
    g = path_graph_3()
    sym, deg_s = build_laplacian(g, "sym_normalized")
    rw, deg_r = build_laplacian(g, "random_walk_compatible")
    assert np.array_equal(sym, rw)
    assert np.array_equal(deg_s, deg_r)


def test_unknown_laplacian_kind():
    with pytest.raises(ParameterError):
        build_laplacian(path_graph_3(), "mystery")


# ---------------------------------------------------------------------------
# GFT
# ---------------------------------------------------------------------------


def test_gft_constant_signal_energy_in_dc(rng):
    cloud = PointCloud(rng.uniform(-1, 1, size=(15, 3)))
    graph = build_knn_graph(cloud, 3)
    basis = gft_basis_from_graph(graph, "sym_normalized")
    # For the sym-normalized Laplacian the nullspace is sqrt(deg), so use it.
    _, deg = build_laplacian(graph, "sym_normalized")
    signal = np.sqrt(deg)[:, None]
    coeffs = gft_forward(basis, signal)
    energy = coeffs[:, 0] ** 2
    assert energy[0] / energy.sum() > 1.0 - 1e-9


def test_gft_round_trip_and_parseval(rng):
    cloud = PointCloud(rng.uniform(-1, 1, size=(30, 3)))
    graph = build_knn_graph(cloud, 4)
    basis = gft_basis_from_graph(graph, "random_walk_compatible")
    signal = rng.standard_normal((30, 3))
    coeffs = gft_forward(basis, signal)
    assert np.max(np.abs(gft_inverse(basis, coeffs) - signal)) < 1e-9
    assert abs(np.linalg.norm(coeffs) - np.linalg.norm(signal)) < 1e-9


def test_gft_dimension_mismatch(rng):
    basis = gft_basis_from_graph(path_graph_3())
    with pytest.raises(ParameterError):
        gft_forward(basis, np.zeros((4, 3)))
    with pytest.raises(ParameterError):
        gft_inverse(basis, np.zeros((4, 3)))


def test_gft_sign_convention_deterministic(rng):
    cloud = PointCloud(rng.uniform(-1, 1, size=(12, 3)))
    graph = build_knn_graph(cloud, 3)
    a = gft_basis_from_graph(graph)
    b = gft_basis_from_graph(graph)
    assert np.array_equal(a.basis, b.basis)
    for j in range(a.n):
        col = a.basis[:, j]
        first = col[np.abs(col) > 1e-12][0]
        assert first > 0


def test_serialize_gft_basis(rng):
    basis = gft_basis_from_graph(path_graph_3())
    flat = serialize_gft_basis(basis)
    assert flat.size == 1 + 9
    assert flat[0] == 3
    assert np.array_equal(flat[1:].reshape(3, 3), basis.basis)


# ---------------------------------------------------------------------------
# DCT
# ---------------------------------------------------------------------------


def test_dct_constant_dc_property():
    n = 17
    c = 0.73
    coeffs = dct_forward(np.full(n, c))
    assert coeffs[0] == pytest.approx(c * np.sqrt(n), abs=1e-12)
    assert np.max(np.abs(coeffs[1:])) < 1e-12


def test_dct_round_trip(rng):
    x = rng.standard_normal(64)
    assert np.max(np.abs(dct_inverse(dct_forward(x)) - x)) < 1e-10


def test_dct_parseval(rng):
    x = rng.standard_normal(50)
    assert abs(np.linalg.norm(dct_forward(x)) - np.linalg.norm(x)) < 1e-9


def test_dct_matches_scipy(rng):
    for n in (1, 2, 7, 64):
        x = rng.standard_normal(n)
        assert np.allclose(dct_forward(x), scipy.fft.dct(x, norm="ortho"), atol=1e-12)
        assert np.allclose(dct_inverse(x), scipy.fft.idct(x, norm="ortho"), atol=1e-12)


# ---------------------------------------------------------------------------
# Givens factorization and quantization
# ---------------------------------------------------------------------------


def test_givens_identity():
    fact = givens_factorize(np.eye(5))
    assert np.all(fact.angles == 0.0)
    assert np.all(fact.diagonal_signs == 1.0)
    assert fact.angles.size == 5 * 4 // 2


def test_givens_2x2_rotation():
    theta = 0.7
    q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    fact = givens_factorize(q)
    assert fact.angles.size == 1
    assert fact.angles[0] == pytest.approx(theta, abs=1e-12)


def test_givens_round_trip(rng):
    for n in (3, 8, 20):
        q = random_orthogonal(rng, n)
        fact = givens_factorize(q)
        assert fact.angles.size == n * (n - 1) // 2
        assert np.linalg.norm(reconstruct_basis(fact) - q) < 1e-8


def test_givens_rejects_non_orthogonal(rng):
    with pytest.raises(ParameterError):
        givens_factorize(rng.standard_normal((4, 4)))


def test_quantize_zero_angle_bound():
    q = np.eye(4)
    for b in (2, 5, 12):
        fact = quantize_angles(givens_factorize(q), b)
        assert np.max(np.abs(fact.angles)) <= np.pi / 2**b + 1e-15
        assert fact.bit_depth == b


def test_quantize_angle_error_bound(rng):
    q = random_orthogonal(rng, 12)
    fact = givens_factorize(q)
    for b in (2, 4, 8, 12, 16):
        quant = quantize_angles(fact, b)
        assert np.max(np.abs(quant.angles - fact.angles)) <= np.pi / 2**b + 1e-12


def test_quantize_monotone_reconstruction(rng):
    q = random_orthogonal(rng, 20)
    fact = givens_factorize(q)
    err2 = np.linalg.norm(reconstruct_basis(quantize_angles(fact, 2)) - q)
    err12 = np.linalg.norm(reconstruct_basis(quantize_angles(fact, 12)) - q)
    assert err12 < err2


def test_quantize_error_trend_over_depths(rng):
    # Reconstruction error trends down with bit depth on fixed seeds.
    for trial in range(3):
        q = random_orthogonal(rng, 16)
        fact = givens_factorize(q)
        errors = [
            np.linalg.norm(reconstruct_basis(quantize_angles(fact, b)) - q)
            for b in (2, 4, 6, 8, 10, 12)
        ]
        assert all(a >= b for a, b in zip(errors, errors[1:])), errors


def test_quantize_rejects_bad_depth(rng):
    fact = givens_factorize(np.eye(3))
    for b in (1, 17):
        with pytest.raises(ParameterError):
            quantize_angles(fact, b)


def test_serialize_givens():
    fact = givens_factorize(np.eye(3))
    flat = serialize_givens(fact)
    # n, K, 3 triples of (i, j, theta), 3 signs
    assert flat.size == 2 + 3 * 3 + 3
    assert flat[0] == 3 and flat[1] == 3
