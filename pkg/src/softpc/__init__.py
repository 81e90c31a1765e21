"""softpc: soft (near-analog) wireless delivery of 3D point clouds.

A trained graph-autoencoder codec with a differentiable Rayleigh fading
channel, plus graph-spectral (octree + GFT, optionally Givens-compressed) and
DCT baselines, with symbol-overhead accounting and Chamfer-distance
evaluation.
"""

__version__ = "0.1.0"

from .cloud import (
    PointCloud,
    AffineParams,
    KnnGraph,
    OctreeBlocks,
    normalize,
    denormalize,
    build_knn_graph,
    octree_decompose,
    chamfer_distance,
    chamfer_gradient,
)
from .channel import ChannelConfig, ChannelRealization, draw_realization, transmit, transmit_grad, count_overhead
from .errors import SoftpcError, ParameterError, ParseError, NumericalError, CheckpointError

__all__ = [
    "PointCloud", "AffineParams", "KnnGraph", "OctreeBlocks",
    "normalize", "denormalize", "build_knn_graph", "octree_decompose",
    "chamfer_distance", "chamfer_gradient",
    "ChannelConfig", "ChannelRealization", "draw_realization", "transmit", "transmit_grad", "count_overhead",
    "SoftpcError", "ParameterError", "ParseError", "NumericalError", "CheckpointError",
    "__version__",
]
