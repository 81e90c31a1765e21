"""Dense symmetric eigenanalysis, graph Fourier transform, DCT, and Givens
rotation factorization with uniform angle quantization.

Everything here is deterministic and O(n^2)/O(n^3) dense, sized for the
few-hundred-vertex blocks the codecs produce.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .cloud import KnnGraph
from .errors import NumericalError, ParameterError

LAPLACIAN_KINDS = ("combinatorial", "sym_normalized", "random_walk_compatible")

_SYM_TOL = 1e-9
_SIGN_TOL = 1e-12


def _check_symmetric(a: np.ndarray, tol: float = _SYM_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError("matrix contains non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > tol:
        raise ParameterError(f"matrix is not symmetric within {tol}")
    return (a + a.T) / 2.0


# ---------------------------------------------------------------------------
# Cyclic Jacobi eigensolver
# ---------------------------------------------------------------------------


def jacobi_eigen(sym, tol: float | None = None, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate until every off-diagonal magnitude drops below `tol`
    (default 1e-12 * ||A||_F). Returns eigenvalues ascending and the matrix
    whose columns are the matching eigenvectors.
    """
    a = _check_symmetric(sym).copy()
    n = a.shape[0]
    if n > 1024:
        raise ParameterError(f"matrix order {n} exceeds the supported bound of 1024")
    fro = float(np.linalg.norm(a))
    if tol is None:
        tol = 1e-12 * max(fro, 1.0)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    for _ in range(max_sweeps):
        off = np.abs(np.triu(a, 1)).max()
        if off < tol:
            break
        # Rotating entries already below tol cannot raise the final sweep check.
        skip = 0.1 * tol
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                diff = aqq - app
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    phi = diff / (2.0 * apq)
                    t = 1.0 / (abs(phi) + np.sqrt(phi * phi + 1.0))
                    if phi < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = row_p - s * (row_q + tau * row_p)
                a[q, :] = row_q + s * (row_p - tau * row_q)
                a[:, p] = a[p, :]
                a[:, q] = a[q, :]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                col_p = v[:, p].copy()
                col_q = v[:, q].copy()
                v[:, p] = col_p - s * (col_q + tau * col_p)
                v[:, q] = col_q + s * (col_p - tau * col_q)
    else:
        raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps (n={n})")
    eigenvalues = a.diagonal().copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


# ---------------------------------------------------------------------------
# Graph Laplacians and the graph Fourier transform
# ---------------------------------------------------------------------------


def build_laplacian(graph: KnnGraph, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Laplacian of `kind` plus the vertex degree vector.

    combinatorial:           L = D - W
    sym_normalized:          I - D^{-1/2} W D^{-1/2}
    random_walk_compatible:  same matrix as sym_normalized; the random-walk
        eigenvectors are D^{-1/2} times the returned matrix's eigenvectors.
    """
    if kind not in LAPLACIAN_KINDS:
        raise ParameterError(f"unknown Laplacian kind {kind!r} (expected one of {LAPLACIAN_KINDS})")
    w = graph.adjacency.astype(np.float64)
    deg = w.sum(axis=1)
    if kind == "combinatorial":
        return np.diag(deg) - w, deg
    if np.any(deg == 0.0):
        raise ParameterError("normalized Laplacian undefined: graph has an isolated vertex")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(graph.n_vertices) - (inv_sqrt[:, None] * w) * inv_sqrt[None, :]
    return (lap + lap.T) / 2.0, deg


@dataclass(frozen=True)
class GftBasis:
    """Orthonormal spectral basis of a graph Laplacian."""

    n: int
    eigenvalues: np.ndarray  # ascending
    basis: np.ndarray        # columns are eigenvectors
    laplacian_kind: str


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of each column positive."""
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > _SIGN_TOL)[0]
        if nz.size and col[nz[0]] < 0.0:
            out[:, j] = -col
    return out


def gft_basis_from_graph(graph: KnnGraph, kind: str = "sym_normalized", tol: float | None = None) -> GftBasis:
    lap, _ = build_laplacian(graph, kind)
    eigenvalues, vectors = jacobi_eigen(lap, tol=tol)
    return GftBasis(n=graph.n_vertices, eigenvalues=eigenvalues, basis=_fix_signs(vectors), laplacian_kind=kind)


def gft_forward(basis: GftBasis, signal: np.ndarray) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[0] != basis.n:
        raise ParameterError(f"signal has {signal.shape[0]} rows, basis expects {basis.n}")
    return basis.basis.T @ signal


def gft_inverse(basis: GftBasis, coefficients: np.ndarray) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape[0] != basis.n:
        raise ParameterError(f"coefficients have {coefficients.shape[0]} rows, basis expects {basis.n}")
    return basis.basis @ coefficients


def serialize_gft_basis(basis: GftBasis) -> np.ndarray:
    """Flat layout: [n, basis entries row-major]. n^2 payload reals."""
    return np.concatenate([[float(basis.n)], basis.basis.ravel()])


# ---------------------------------------------------------------------------
# Orthonormal DCT (type II forward / type III inverse), direct O(n^2)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ParameterError(f"DCT length must be >= 1, got {n}")
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    mat *= np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    mat.setflags(write=False)
    return mat


def dct_forward(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return dct_matrix(x.shape[0]) @ x


def dct_inverse(coefficients: np.ndarray) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=np.float64)
    return dct_matrix(coefficients.shape[0]).T @ coefficients


# ---------------------------------------------------------------------------
# Givens factorization of an orthogonal matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GivensFactorization:
    """Plane-rotation factorization Q = G(i0,j0,t0)^T ... G^T diag(signs).

    `planes` holds the (i, j) index pairs in elimination order (column-major
    below the diagonal), `angles` the matching rotation angles in [-pi, pi).
    `bit_depth` is None while the angles are unquantized.
    """

    n: int
    planes: np.ndarray    # (K, 2) int64
    angles: np.ndarray    # (K,) float64
    diagonal_signs: np.ndarray  # (n,) values in {-1, +1}
    bit_depth: int | None = None


def givens_factorize(q: np.ndarray, orth_tol: float = 1e-6) -> GivensFactorization:
    """Eliminate below the diagonal with plane rotations; record the angles.

    Requires `q` orthogonal within `orth_tol` (Frobenius). Reconstruction from
    the unquantized angles reproduces `q` to ~1e-12.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {q.shape}")
    n = q.shape[0]
    if np.linalg.norm(q.T @ q - np.eye(n)) > orth_tol:
        raise ParameterError(f"matrix is not orthogonal within {orth_tol}")
    a = q.copy()
    planes = []
    angles = []
    for j in range(n - 1):
        for i in range(j + 1, n):
            theta = np.arctan2(a[i, j], a[j, j])
            if theta == np.pi:  # fold the closed end of atan2's range
                theta = -np.pi
            c = np.cos(theta)
            s = np.sin(theta)
            row_j = a[j, :].copy()
            row_i = a[i, :].copy()
            a[j, :] = c * row_j + s * row_i
            a[i, :] = -s * row_j + c * row_i
            a[i, j] = 0.0
            planes.append((j, i))
            angles.append(theta)
    signs = np.sign(np.diagonal(a)).astype(np.float64)
    signs[signs == 0.0] = 1.0
    return GivensFactorization(
        n=n,
        planes=np.array(planes, dtype=np.int64).reshape(-1, 2),
        angles=np.array(angles, dtype=np.float64),
        diagonal_signs=signs,
    )


def reconstruct_basis(f: GivensFactorization) -> np.ndarray:
    """Apply the recorded rotations in reverse to rebuild the orthogonal matrix."""
    m = np.diag(f.diagonal_signs).astype(np.float64)
    for (j, i), theta in zip(f.planes[::-1], f.angles[::-1]):
        c = np.cos(theta)
        s = np.sin(theta)
        row_j = m[j, :].copy()
        row_i = m[i, :].copy()
        m[j, :] = c * row_j - s * row_i
        m[i, :] = s * row_j + c * row_i
    return m


def quantize_angles(f: GivensFactorization, bit_depth: int) -> GivensFactorization:
    """Uniform midrise quantization of the angles over [-pi, pi), 2^b levels."""
    if not 2 <= bit_depth <= 16:
        raise ParameterError(f"bit depth must lie in [2, 16], got {bit_depth}")
    levels = 1 << bit_depth
    step = 2.0 * np.pi / levels
    idx = np.clip(np.floor((f.angles + np.pi) / step), 0, levels - 1)
    quantized = -np.pi + (idx + 0.5) * step
    return replace(f, angles=quantized, bit_depth=bit_depth)


def serialize_givens(f: GivensFactorization) -> np.ndarray:
    """Flat layout: [n, K, then (i, j, angle) triples, then the n signs]."""
    triples = np.concatenate([f.planes.astype(np.float64), f.angles[:, None]], axis=1)
    return np.concatenate([[float(f.n), float(f.angles.size)], triples.ravel(), f.diagonal_signs])
