"""Encoder/decoder parameterization, forward/backward passes, checkpoint I/O.

Encoder: three stages of (graph convolution -> leaky ReLU -> Top-K pooling),
then exact power normalization of the latent block. Decoder: a flat MLP
(two hidden leaky-ReLU layers, tanh output) reshaped to N x 3 coordinates.

Latent reals travel the channel channel-major (all vertices' channel 0 first):
with descending-|h| precoding this pins each latent channel to a stable
channel-quality rank, which is what lets training exploit the ordering.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import CheckpointError, ParameterError
from .layers import (
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

CHANNEL_RANGE = (12, 48)

_MAGIC = b"SPCM"
_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture instance; channels and ratios are per encoder stage."""

    n_points: int
    channels: tuple[int, int, int] = (24, 36, 48)
    ratios: tuple[float, float, float] = (0.6, 0.5, 0.5)
    leaky_slope: float = 0.01
    avg_power: float = 1.0
    knn_k: int = 8

    def __post_init__(self):
        if self.n_points < 1:
            raise ParameterError("n_points must be >= 1")
        if len(self.channels) != 3 or len(self.ratios) != 3:
            raise ParameterError("exactly three encoder stages are supported")
        for c in self.channels:
            if not CHANNEL_RANGE[0] <= c <= CHANNEL_RANGE[1]:
                raise ParameterError(f"channel count {c} outside {CHANNEL_RANGE}")
        for r in self.ratios:
            if not 0.0 < r <= 1.0:
                raise ParameterError(f"pooling ratio {r} outside (0, 1]")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ParameterError("leaky_slope must lie in (0, 1)")


def latent_shape(config: ModelConfig) -> tuple[int, int]:
    """(m, L): pooled vertex count after the ceil-composed ratios, last width."""
    m = config.n_points
    for r in config.ratios:
        m = int(np.ceil(r * m))
    return m, config.channels[-1]


@dataclass
class EncoderStage:
    theta: np.ndarray  # (c_in, c_out)
    bias: np.ndarray   # (c_out,)
    proj: np.ndarray   # (c_out,) pooling projection


@dataclass
class EncoderParams:
    stages: list[EncoderStage]


@dataclass
class DecoderParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray


@dataclass
class ModelParams:
    config: ModelConfig
    encoder: EncoderParams
    decoder: DecoderParams


@dataclass(frozen=True)
class LatentCode:
    """Power-normalized latent block: ||z||^2 = m * L * P."""

    z: np.ndarray
    m: int
    L: int


def latent_to_reals(code: LatentCode) -> np.ndarray:
    return code.z.ravel(order="F")


def reals_to_latent(v: np.ndarray, m: int, L: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size != m * L:
        raise ParameterError(f"latent vector length {v.size} != m*L = {m * L}")
    return v.reshape((m, L), order="F")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, seed) -> ModelParams:
    """Seeded Glorot-uniform weights; conv biases start slightly positive so
    the pooling gates pass signal from the first step. Draw order is fixed."""
    rng = np.random.default_rng(seed)
    stages = []
    c_in = 3
    for c_out in config.channels:
        stages.append(
            EncoderStage(
                theta=_glorot(rng, c_in, c_out, (c_in, c_out)),
                bias=np.full(c_out, 0.05),
                proj=_glorot(rng, c_out, 1, (c_out,)),
            )
        )
        c_in = c_out
    m, L = latent_shape(config)
    width = m * L
    out_width = 3 * config.n_points
    decoder = DecoderParams(
        w1=_glorot(rng, width, L, (width, L)),
        b1=np.zeros(L),
        w2=_glorot(rng, L, L, (L, L)),
        b2=np.zeros(L),
        w3=_glorot(rng, L, out_width, (L, out_width)),
        b3=np.zeros(out_width),
    )
    return ModelParams(config=config, encoder=EncoderParams(stages), decoder=decoder)


def param_blocks(params: ModelParams) -> list[np.ndarray]:
    """Canonical flat ordering of all trainable arrays (shared by grads/ADAM/IO)."""
    blocks = []
    for stage in params.encoder.stages:
        blocks += [stage.theta, stage.bias, stage.proj]
    d = params.decoder
    blocks += [d.w1, d.b1, d.w2, d.b2, d.w3, d.b3]
    return blocks


def block_names(params: ModelParams) -> list[str]:
    names = []
    for s in range(len(params.encoder.stages)):
        names += [f"enc{s}.theta", f"enc{s}.bias", f"enc{s}.proj"]
    names += ["dec.w1", "dec.b1", "dec.w2", "dec.b2", "dec.w3", "dec.b3"]
    return names


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def encode(points: np.ndarray, adjacency: np.ndarray, params: ModelParams):
    """Map normalized coordinates to the power-constrained latent block."""
    cfg = params.config
    if points.shape[0] != cfg.n_points:
        raise ParameterError(f"cloud has {points.shape[0]} points, model expects {cfg.n_points}")
    x = np.asarray(points, dtype=np.float64)
    adj = adjacency
    stage_ctxs = []
    for stage, ratio in zip(params.encoder.stages, cfg.ratios):
        prop = gcn_propagation(adj)
        h, gcn_ctx = gcn_forward(x, prop, stage.theta, stage.bias)
        act, act_ctx = leaky_relu(h, cfg.leaky_slope)
        x, adj, kept, pool_ctx = topk_pool(act, adj, stage.proj, ratio)
        stage_ctxs.append((gcn_ctx, act_ctx, pool_ctx))
    z, pn_ctx = power_normalize(x, cfg.avg_power)
    m, L = z.shape
    return LatentCode(z=z, m=m, L=L), (stage_ctxs, pn_ctx)


def encode_backward(ctx, grad_z: np.ndarray):
    """Returns (per-stage [grad_theta, grad_bias, grad_proj] list, grad wrt input)."""
    stage_ctxs, pn_ctx = ctx
    grad = power_normalize_backward(pn_ctx, grad_z)
    stage_grads: list[list[np.ndarray]] = [None] * len(stage_ctxs)
    for s in range(len(stage_ctxs) - 1, -1, -1):
        gcn_ctx, act_ctx, pool_ctx = stage_ctxs[s]
        grad, grad_proj = topk_pool_backward(pool_ctx, grad)
        grad = leaky_relu_backward(act_ctx, grad)
        grad, grad_theta, grad_bias = gcn_backward(gcn_ctx, grad)
        stage_grads[s] = [grad_theta, grad_bias, grad_proj]
    return stage_grads, grad


def decode(z_flat: np.ndarray, params: ModelParams):
    """Distorted latent reals -> reconstructed (N, 3) coordinates in (-1, 1)."""
    cfg = params.config
    d = params.decoder
    z_flat = np.asarray(z_flat, dtype=np.float64).ravel()
    if z_flat.size != d.w1.shape[0]:
        raise ParameterError(f"latent width {z_flat.size} != decoder input width {d.w1.shape[0]}")
    a1, c1 = dense_forward(z_flat, d.w1, d.b1)
    h1, r1 = leaky_relu(a1, cfg.leaky_slope)
    a2, c2 = dense_forward(h1, d.w2, d.b2)
    h2, r2 = leaky_relu(a2, cfg.leaky_slope)
    a3, c3 = dense_forward(h2, d.w3, d.b3)
    out, t3 = tanh_forward(a3)
    return out.reshape(cfg.n_points, 3), (c1, r1, c2, r2, c3, t3)


def decode_backward(ctx, grad_points: np.ndarray):
    """Returns (grad wrt the flat latent, [grad w1, b1, w2, b2, w3, b3])."""
    c1, r1, c2, r2, c3, t3 = ctx
    grad = tanh_backward(t3, np.asarray(grad_points).ravel())
    grad, gw3, gb3 = dense_backward(c3, grad)
    grad = leaky_relu_backward(r2, grad)
    grad, gw2, gb2 = dense_backward(c2, grad)
    grad = leaky_relu_backward(r1, grad)
    grad, gw1, gb1 = dense_backward(c1, grad)
    return grad, [gw1, gb1, gw2, gb2, gw3, gb3]


# ---------------------------------------------------------------------------
# Checkpoint I/O: little-endian flat format
#   magic "SPCM" | u32 version | u32 header_len | header JSON | float64 blocks
# Blocks follow param_blocks order; ADAM moment blocks (m then v per block)
# are appended when optimizer state is saved.
# ---------------------------------------------------------------------------


def save_model(params: ModelParams, path, epoch: int = 0, adam_state=None) -> None:
    blocks = param_blocks(params)
    header = {
        "config": {
            "n_points": params.config.n_points,
            "channels": list(params.config.channels),
            "ratios": list(params.config.ratios),
            "leaky_slope": params.config.leaky_slope,
            "avg_power": params.config.avg_power,
            "knn_k": params.config.knn_k,
        },
        "blocks": [[name, list(b.shape)] for name, b in zip(block_names(params), blocks)],
        "epoch": int(epoch),
        "adam_t": None if adam_state is None else int(adam_state.t),
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(payload)), payload]
    for b in blocks:
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if adam_state is not None:
        for moment in (adam_state.m, adam_state.v):
            for b in moment:
                chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_model(path):
    """Returns (ModelParams, epoch, adam_state or None)."""
    from .train import AdamState  # local import to avoid a cycle

    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    cfg_d = header["config"]
    config = ModelConfig(
        n_points=cfg_d["n_points"],
        channels=tuple(cfg_d["channels"]),
        ratios=tuple(cfg_d["ratios"]),
        leaky_slope=cfg_d["leaky_slope"],
        avg_power=cfg_d["avg_power"],
        knn_k=cfg_d["knn_k"],
    )
    params = init_params(config, seed=0)
    blocks = param_blocks(params)
    expected = [(name, tuple(shape)) for name, shape in header["blocks"]]
    actual = [(name, b.shape) for name, b in zip(block_names(params), blocks)]
    if expected != actual:
        raise CheckpointError(f"{path}: block layout mismatch with architecture descriptor")
    offset = 12 + header_len
    n_moments = 0 if header["adam_t"] is None else 2
    total = sum(b.size for b in blocks) * (1 + n_moments) * 8
    if len(raw) - offset != total:
        raise CheckpointError(
            f"{path}: payload holds {len(raw) - offset} bytes, expected {total} (truncated or corrupt)"
        )

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += count * 8
        return arr

    for b in blocks:
        b[...] = take(b.shape)
    adam_state = None
    if n_moments:
        m = [take(b.shape) for b in blocks]
        v = [take(b.shape) for b in blocks]
        adam_state = AdamState(t=int(header["adam_t"]), m=m, v=v)
    return params, int(header["epoch"]), adam_state
