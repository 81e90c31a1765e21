"""Point-cloud data model: normalization, KNN graph, octree blocks, Chamfer metric.

All geometry is float64. Clouds are treated as immutable; every operation
returns new arrays. Neighbor searches are exact O(N^2), which is fine at the
few-thousand-point scale this library targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloudError, ParameterError

# Margin keeping normalized coordinates strictly inside (-1, 1), the output
# range of the decoder's tanh layer.
DEFAULT_MARGIN = 0.05

# Octree recursion cap; duplicated points can make a cell unsplittable, so a
# leaf at this depth is accepted even when oversized.
MAX_OCTREE_DEPTH = 24

_DEGENERATE_TOL = 1e-12


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ParameterError(f"points must be an (N, 3) array, got shape {pts.shape}")
    if pts.shape[0] < 1:
        raise ParameterError("point cloud must contain at least one point")
    if not np.all(np.isfinite(pts)):
        raise ParameterError("point cloud contains non-finite coordinates")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An (N, 3) set of real coordinates plus an opaque label."""

    points: np.ndarray
    id: str = ""

    def __post_init__(self):
        pts = _as_points(self.points).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AffineParams:
    """Inverse of `normalize`: original = normalized * scale + center."""

    center: np.ndarray
    scale: float


def normalize(cloud: PointCloud, margin: float = DEFAULT_MARGIN) -> tuple[PointCloud, AffineParams]:
    """Center the cloud at its centroid and scale the largest coordinate to 1 - margin.

    Returns the normalized cloud and the affine parameters that undo it.
    Raises DegenerateCloudError when all points coincide.
    """
    if not 0.0 <= margin < 1.0:
        raise ParameterError(f"margin must lie in [0, 1), got {margin}")
    center = cloud.points.mean(axis=0)
    shifted = cloud.points - center
    max_abs = np.abs(shifted).max()
    if max_abs < _DEGENERATE_TOL:
        raise DegenerateCloudError("cannot normalize a cloud of coincident points")
    scale = max_abs / (1.0 - margin)
    return PointCloud(shifted / scale, cloud.id), AffineParams(center, float(scale))


def denormalize(cloud: PointCloud, params: AffineParams) -> PointCloud:
    return PointCloud(cloud.points * params.scale + params.center, cloud.id)


# ---------------------------------------------------------------------------
# KNN graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnGraph:
    """Symmetrized K-nearest-neighbor graph with binary adjacency."""

    n_vertices: int
    k: int
    adjacency: np.ndarray  # (n, n) uint8, symmetric, zero diagonal
    edges: np.ndarray      # (E, 2) int64 with edges[:, 0] < edges[:, 1]

    def __post_init__(self):
        self.adjacency.setflags(write=False)
        self.edges.setflags(write=False)

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact pairwise squared Euclidean distances, (len(a), len(b)).

    Plain square-then-sum, not a BLAS/einsum contraction: the elementary-op
    formulation reproduces a scalar reference implementation bit for bit.
    """
    diff = a[:, None, :] - b[None, :, :]
    np.square(diff, out=diff)
    return diff.sum(axis=-1)


def build_knn_graph(cloud: PointCloud, k: int) -> KnnGraph:
    """Connect each point to its k nearest neighbors, then symmetrize by OR.

    Distance ties are broken toward lower point index. Requires 1 <= k < N.
    """
    n = cloud.n_points
    if not 1 <= k < n:
        raise ParameterError(f"need 1 <= k < N, got k={k}, N={n}")
    d2 = squared_distances(cloud.points, cloud.points)
    np.fill_diagonal(d2, np.inf)
    # Stable sort keeps the lower index first among equal distances.
    order = np.argsort(d2, axis=1, kind="stable")
    neighbors = order[:, :k]
    adj = np.zeros((n, n), dtype=np.uint8)
    rows = np.repeat(np.arange(n), k)
    adj[rows, neighbors.ravel()] = 1
    adj = np.maximum(adj, adj.T)
    ii, jj = np.nonzero(np.triu(adj, 1))
    edges = np.stack([ii, jj], axis=1).astype(np.int64)
    return KnnGraph(n_vertices=n, k=k, adjacency=adj, edges=edges)


# ---------------------------------------------------------------------------
# Octree decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OctreeBlock:
    indices: np.ndarray  # point indices in this leaf
    lower: np.ndarray    # (3,) cell lower corner
    upper: np.ndarray    # (3,) cell upper corner


@dataclass(frozen=True)
class OctreeBlocks:
    blocks: list[OctreeBlock]
    max_block_size: int
    oversized_leaves: int = 0

    def block_sizes(self) -> list[int]:
        return [int(b.indices.size) for b in self.blocks]


def octree_decompose(cloud: PointCloud, max_block_size: int) -> OctreeBlocks:
    """Recursive 8-way midpoint split of the bounding cube until leaves fit.

    Leaves are emitted depth-first in octant-code order (z fastest), empty
    cells dropped. Splitting stops at MAX_OCTREE_DEPTH even if a leaf is still
    oversized (possible with coincident points); such leaves are counted.
    """
    if max_block_size < 1:
        raise ParameterError(f"max_block_size must be >= 1, got {max_block_size}")
    pts = cloud.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = (lo + hi) / 2.0
    half = float(np.max(hi - lo)) / 2.0
    blocks: list[OctreeBlock] = []
    oversized = 0

    def recurse(indices: np.ndarray, c: np.ndarray, h: float, depth: int):
        nonlocal oversized
        if indices.size <= max_block_size or depth >= MAX_OCTREE_DEPTH or h <= 0.0:
            if indices.size > max_block_size:
                oversized += 1
            blocks.append(OctreeBlock(indices, c - h, c + h))
            return
        sub = pts[indices]
        code = (
            ((sub[:, 0] >= c[0]).astype(np.int64) << 2)
            | ((sub[:, 1] >= c[1]).astype(np.int64) << 1)
            | (sub[:, 2] >= c[2]).astype(np.int64)
        )
        q = h / 2.0
        for oct_code in range(8):
            child = indices[code == oct_code]
            if child.size == 0:
                continue
            offset = np.array(
                [q if oct_code & 4 else -q, q if oct_code & 2 else -q, q if oct_code & 1 else -q]
            )
            recurse(child, c + offset, q, depth + 1)

    recurse(np.arange(cloud.n_points, dtype=np.int64), center, half, 0)
    return OctreeBlocks(blocks=blocks, max_block_size=max_block_size, oversized_leaves=oversized)


# ---------------------------------------------------------------------------
# Augmented Chamfer distance
# ---------------------------------------------------------------------------


@dataclass
class _NearestInfo:
    dist_fwd: np.ndarray   # per source point: distance to nearest reconstruction
    idx_fwd: np.ndarray
    dist_bwd: np.ndarray   # per reconstructed point: distance to nearest source
    idx_bwd: np.ndarray

    @property
    def term_fwd(self) -> float:
        return float(self.dist_fwd.mean())

    @property
    def term_bwd(self) -> float:
        return float(self.dist_bwd.mean())


def _nearest_both(s: np.ndarray, s_hat: np.ndarray) -> _NearestInfo:
    # Row blocks bound the (N, M, 3) temporary to a few tens of MB.
    block = max(1, int(1_000_000 // max(1, s_hat.shape[0])))
    n = s.shape[0]
    dist_fwd = np.empty(n)
    idx_fwd = np.empty(n, dtype=np.int64)
    min2_bwd = np.full(s_hat.shape[0], np.inf)
    idx_bwd = np.zeros(s_hat.shape[0], dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = squared_distances(s[start:stop], s_hat)
        j = np.argmin(d2, axis=1)
        rows = np.arange(stop - start)
        dist_fwd[start:stop] = np.sqrt(d2[rows, j])
        idx_fwd[start:stop] = j
        col_min = np.min(d2, axis=0)
        col_arg = np.argmin(d2, axis=0) + start
        # Strict < keeps the lowest source index on exact ties across blocks.
        better = col_min < min2_bwd
        min2_bwd[better] = col_min[better]
        idx_bwd[better] = col_arg[better]
    return _NearestInfo(dist_fwd, idx_fwd, np.sqrt(min2_bwd), idx_bwd)


def chamfer_distance(s: PointCloud, s_hat: PointCloud) -> float:
    """Augmented Chamfer distance: max of the two directed mean-min L2 terms."""
    info = _nearest_both(s.points, s_hat.points)
    return max(info.term_fwd, info.term_bwd)


def chamfer_distance_and_gradient(s: PointCloud, s_hat: PointCloud) -> tuple[float, np.ndarray]:
    """Distance and gradient from a single nearest-neighbor pass (training path)."""
    info = _nearest_both(s.points, s_hat.points)
    return max(info.term_fwd, info.term_bwd), _gradient_from_info(s.points, s_hat.points, info)


def chamfer_gradient(s: PointCloud, s_hat: PointCloud) -> np.ndarray:
    """Gradient of chamfer_distance with respect to each reconstructed point.

    Only the active max branch contributes; on an exact tie both branch
    gradients are averaged. The unit direction at coincident nearest points is
    taken as zero (subgradient choice).
    """
    return _gradient_from_info(s.points, s_hat.points, _nearest_both(s.points, s_hat.points))


def _gradient_from_info(p: np.ndarray, q: np.ndarray, info: _NearestInfo) -> np.ndarray:

    def unit_rows(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
        out = np.zeros_like(diff)
        nz = dist > 0.0
        out[nz] = diff[nz] / dist[nz, None]
        return out

    # Forward term: each source point pulls its nearest reconstruction.
    grad_fwd = np.zeros_like(q)
    dirs = unit_rows(q[info.idx_fwd] - p, info.dist_fwd)
    np.add.at(grad_fwd, info.idx_fwd, dirs / p.shape[0])
    # Backward term: each reconstruction moves toward its nearest source.
    grad_bwd = unit_rows(q - p[info.idx_bwd], info.dist_bwd) / q.shape[0]

    a, b = info.term_fwd, info.term_bwd
    if a > b:
        return grad_fwd
    if b > a:
        return grad_bwd
    return 0.5 * (grad_fwd + grad_bwd)
