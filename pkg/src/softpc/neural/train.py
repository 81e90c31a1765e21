"""ADAM optimizer and the end-to-end training loop.

Per sample per epoch a fresh channel realization is drawn, so the optimizer
sees the full distribution of fading/noise distortions. All randomness is
derived from (seed, stream tag, epoch, position), which makes runs bit
reproducible and checkpoint-resume equivalent to uninterrupted training.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..channel import ChannelConfig, draw_realization, transmit, transmit_grad
from ..cloud import PointCloud, build_knn_graph, chamfer_distance_and_gradient, normalize
from ..errors import NumericalError, ParameterError
from .model import (
    ModelParams,
    decode,
    decode_backward,
    encode,
    encode_backward,
    latent_shape,
    latent_to_reals,
    param_blocks,
    reals_to_latent,
)

# RNG stream tags (kept distinct from the dataset generator's family tags).
_STREAM_SHUFFLE = 3
_STREAM_CHANNEL = 4


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 500
    batch_size: int = 10
    learning_rate: float = 0.005  # initial; see the decay fields
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # Step decay: lr * factor^(epoch // every); every = 0 disables it.
    lr_decay_factor: float = 1.0
    lr_decay_every: int = 0

    def lr_at(self, epoch: int) -> float:
        if self.lr_decay_every <= 0 or self.lr_decay_factor == 1.0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class AdamState:
    t: int
    m: list[np.ndarray]
    v: list[np.ndarray]


def init_adam(params: ModelParams) -> AdamState:
    blocks = param_blocks(params)
    return AdamState(t=0, m=[np.zeros_like(b) for b in blocks], v=[np.zeros_like(b) for b in blocks])


def adam_step(
    blocks: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected ADAM update, applied to `blocks` in place."""
    if len(blocks) != len(grads) or len(blocks) != len(state.m):
        raise ParameterError("parameter/gradient/state block counts differ")
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for b, g, m, v in zip(blocks, grads, state.m, state.v):
        if b.shape != g.shape:
            raise ParameterError(f"gradient shape {g.shape} != parameter shape {b.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        b -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# ---------------------------------------------------------------------------
# Sample-level forward/backward through encoder, channel, decoder, loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedCloud:
    """Normalized coordinates plus the fixed stage-1 graph of one sample."""

    points: np.ndarray
    adjacency: np.ndarray


def prepare_clouds(clouds: list[PointCloud], knn_k: int) -> list[PreparedCloud]:
    prepared = []
    for cloud in clouds:
        normed, _ = normalize(cloud)
        graph = build_knn_graph(normed, knn_k)
        prepared.append(PreparedCloud(points=normed.points, adjacency=graph.adjacency))
    return prepared


def sample_loss_and_grads(
    sample: PreparedCloud,
    params: ModelParams,
    channel_cfg: ChannelConfig,
    realization,
) -> tuple[float, list[np.ndarray]]:
    code, enc_ctx = encode(sample.points, sample.adjacency, params)
    v = latent_to_reals(code)
    z_hat, report = transmit(v, channel_cfg, realization)
    recon, dec_ctx = decode(z_hat, params)
    loss, grad_pts = chamfer_distance_and_gradient(PointCloud(sample.points), PointCloud(recon))
    grad_flat, dec_grads = decode_backward(dec_ctx, grad_pts)
    grad_v = transmit_grad(grad_flat, report)
    grad_z = reals_to_latent(grad_v, code.m, code.L)
    stage_grads, _ = encode_backward(enc_ctx, grad_z)
    grads = [g for stage in stage_grads for g in stage] + dec_grads
    return loss, grads


def channel_seed(master_seed: int, epoch: int, position: int) -> list[int]:
    return [int(master_seed), _STREAM_CHANNEL, int(epoch), int(position)]


def train(
    clouds: list[PointCloud],
    params: ModelParams,
    channel_cfg: ChannelConfig,
    schedule: TrainSchedule,
    seed: int,
    start_epoch: int = 0,
    adam_state: AdamState | None = None,
    log_fn=None,
) -> tuple[list[float], AdamState]:
    """Train in place for `schedule.epochs` epochs; returns per-epoch mean losses.

    All clouds must share the model's point count. `log_fn(epoch, mean_loss,
    wall_seconds)` is invoked after each epoch when given.
    """
    if not clouds:
        raise ParameterError("training set is empty")
    n_expected = params.config.n_points
    for cloud in clouds:
        if cloud.n_points != n_expected:
            raise ParameterError(
                f"cloud {cloud.id!r} has {cloud.n_points} points, model expects {n_expected}"
            )
    prepared = prepare_clouds(clouds, params.config.knn_k)
    blocks = param_blocks(params)
    if adam_state is None:
        adam_state = init_adam(params)
    m, L = latent_shape(params.config)
    n_symbols = (m * L + 1) // 2
    losses = []
    for epoch in range(start_epoch, start_epoch + schedule.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([seed, _STREAM_SHUFFLE, epoch]).permutation(len(prepared))
        epoch_loss = 0.0
        for batch_start in range(0, len(order), schedule.batch_size):
            batch = order[batch_start : batch_start + schedule.batch_size]
            acc = [np.zeros_like(b) for b in blocks]
            for offset, cloud_idx in enumerate(batch):
                position = batch_start + offset
                realization = draw_realization(channel_cfg, n_symbols, channel_seed(seed, epoch, position))
                loss, grads = sample_loss_and_grads(prepared[cloud_idx], params, channel_cfg, realization)
                if not np.isfinite(loss):
                    raise NumericalError(
                        f"training diverged: loss={loss} at epoch {epoch}, sample {int(cloud_idx)}"
                    )
                epoch_loss += loss
                for a, g in zip(acc, grads):
                    a += g
            scale = 1.0 / len(batch)
            for a in acc:
                a *= scale
            adam_step(
                blocks, acc, adam_state,
                lr=schedule.lr_at(epoch), beta1=schedule.beta1, beta2=schedule.beta2, eps=schedule.eps,
            )
        mean_loss = epoch_loss / len(prepared)
        losses.append(mean_loss)
        if log_fn is not None:
            log_fn(epoch, mean_loss, time.perf_counter() - t0)
    return losses, adam_state
