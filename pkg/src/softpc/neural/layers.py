"""Differentiable building blocks, each as a forward/backward pair.

Every forward returns a context tuple consumed by its backward; backwards
return exact gradients (double precision) so finite-difference checks hold to
~1e-6 relative. Pooling treats the selected indices as constants during
backprop, the usual straight-through convention for score-based Top-K.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError, ParameterError


def gcn_propagation(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric-normalized propagation with self loops:
    D^{-1/2} (W + I) D^{-1/2}, D the degree of W + I."""
    w = adjacency.astype(np.float64) + np.eye(adjacency.shape[0])
    inv_sqrt = 1.0 / np.sqrt(w.sum(axis=1))
    return (inv_sqrt[:, None] * w) * inv_sqrt[None, :]


def gcn_forward(x: np.ndarray, prop: np.ndarray, theta: np.ndarray, bias: np.ndarray):
    """x' = prop @ x @ theta + bias."""
    if x.shape[0] != prop.shape[0]:
        raise ParameterError(f"feature rows {x.shape[0]} != graph vertices {prop.shape[0]}")
    if x.shape[1] != theta.shape[0]:
        raise ParameterError(f"feature cols {x.shape[1]} != weight rows {theta.shape[0]}")
    px = prop @ x
    return px @ theta + bias, (px, prop, theta, x)


def gcn_backward(ctx, grad_out: np.ndarray):
    px, prop, theta, _ = ctx
    grad_theta = px.T @ grad_out
    grad_bias = grad_out.sum(axis=0)
    grad_x = prop.T @ (grad_out @ theta.T)
    return grad_x, grad_theta, grad_bias


def leaky_relu(x: np.ndarray, slope: float):
    out = np.where(x >= 0.0, x, slope * x)
    return out, (x >= 0.0, slope)


def leaky_relu_backward(ctx, grad_out: np.ndarray) -> np.ndarray:
    nonneg, slope = ctx
    return grad_out * np.where(nonneg, 1.0, slope)


def topk_pool(x: np.ndarray, adjacency: np.ndarray, proj: np.ndarray, ratio: float):
    """Keep the ceil(ratio * n) highest-scoring vertices and gate their features.

    Scores are y = x @ proj / ||proj||; kept rows are scaled by tanh(y) and the
    adjacency is restricted to the kept vertices (ascending index order).
    Returns (x_out, sub_adjacency, kept_indices, ctx).
    """
    if not 0.0 < ratio <= 1.0:
        raise ParameterError(f"pooling ratio must lie in (0, 1], got {ratio}")
    norm = np.linalg.norm(proj)
    if norm == 0.0:
        raise ParameterError("pooling projection vector must be nonzero")
    n = x.shape[0]
    k = int(np.ceil(ratio * n))
    scores = x @ (proj / norm)
    # Stable sort on -scores keeps the lower index among ties.
    kept = np.sort(np.argsort(-scores, kind="stable")[:k])
    gate = np.tanh(scores[kept])
    x_out = x[kept] * gate[:, None]
    sub_adjacency = adjacency[np.ix_(kept, kept)]
    ctx = (x, proj, norm, kept, scores[kept], gate)
    return x_out, sub_adjacency, kept, ctx


def topk_pool_backward(ctx, grad_out: np.ndarray):
    x, proj, norm, kept, kept_scores, gate = ctx
    x_kept = x[kept]
    # d gate / d score = 1 - tanh^2
    dgate = (1.0 - gate**2)
    grad_score = np.einsum("ij,ij->i", grad_out, x_kept) * dgate
    grad_x = np.zeros_like(x)
    unit = proj / norm
    grad_x[kept] = grad_out * gate[:, None] + grad_score[:, None] * unit[None, :]
    grad_unit = x_kept.T @ grad_score
    # Through the normalization: d(p/||p||) is the tangent projection / ||p||.
    grad_proj = (grad_unit - unit * (unit @ grad_unit)) / norm
    return grad_x, grad_proj


def power_normalize(z_raw: np.ndarray, power: float = 1.0):
    """Scale so that ||z||^2 = (number of entries) * power, exactly."""
    norm = np.linalg.norm(z_raw)
    if norm == 0.0 or not np.isfinite(norm):
        raise NumericalError("cannot power-normalize a zero or non-finite latent block")
    target = np.sqrt(z_raw.size * power)
    gamma = target / norm
    return z_raw * gamma, (z_raw, norm, gamma)


def power_normalize_backward(ctx, grad_out: np.ndarray) -> np.ndarray:
    z_raw, norm, gamma = ctx
    inner = float(np.sum(grad_out * z_raw))
    return gamma * grad_out - (gamma / norm**2) * inner * z_raw


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Row-vector affine map: out = x @ w + b."""
    if x.shape[-1] != w.shape[0]:
        raise ParameterError(f"input width {x.shape[-1]} != weight rows {w.shape[0]}")
    return x @ w + b, (x, w)


def dense_backward(ctx, grad_out: np.ndarray):
    x, w = ctx
    grad_w = np.outer(x, grad_out) if x.ndim == 1 else x.T @ grad_out
    grad_b = grad_out if grad_out.ndim == 1 else grad_out.sum(axis=0)
    grad_x = grad_out @ w.T
    return grad_x, grad_w, grad_b


def tanh_forward(x: np.ndarray):
    out = np.tanh(x)
    return out, out


def tanh_backward(ctx, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (1.0 - ctx**2)
