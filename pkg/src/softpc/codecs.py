"""The three soft delivery pipelines behind one interface.

Each codec exposes `encode(cloud) -> CodecOutput` (channel independent, so a
sweep over SNRs or realizations pays the transform cost once) and
`decode(received_reals, output) -> PointCloud`. Reconstruction side info
(bases, keep maps, normalization) is assumed delivered error-free; what each
scheme must *pay* for is recorded in the output's MetadataSpec and charged by
`count_overhead`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, MetadataSpec, count_overhead, draw_realization, transmit
from .cloud import PointCloud, build_knn_graph, chamfer_distance, denormalize, normalize, octree_decompose
from .errors import ParameterError
from .gspmath import (
    dct_forward,
    dct_inverse,
    gft_basis_from_graph,
    gft_forward,
    givens_factorize,
    quantize_angles,
    reconstruct_basis,
)
from .neural.model import ModelParams, decode as nn_decode, encode as nn_encode, latent_to_reals

SOFTCAST_CHUNK = 64
MORTON_BITS = 10


@dataclass(frozen=True)
class CodecOutput:
    """Everything needed to account overhead and reconstruct after the channel."""

    data_reals: np.ndarray
    metadata: MetadataSpec
    side_info: dict


@dataclass(frozen=True)
class TransmissionReport:
    codec: str
    snr_db: float
    equalization: str
    precoding: bool
    data_symbols: int
    metadata_symbols: int
    total_symbols: int
    chamfer_mean: float
    chamfer_std: float
    seed: int

    CSV_HEADER = (
        "codec,snr_db,equalization,precoding,data_symbols,metadata_symbols,"
        "total_symbols,chamfer_mean,chamfer_std,seed"
    )

    def csv_row(self) -> str:
        return ",".join(
            [
                self.codec,
                f"{self.snr_db:g}",
                self.equalization,
                "on" if self.precoding else "off",
                str(self.data_symbols),
                str(self.metadata_symbols),
                str(self.total_symbols),
                f"{self.chamfer_mean:.9g}",
                f"{self.chamfer_std:.9g}",
                str(self.seed),
            ]
        )


def _allocation_gains(group_power: np.ndarray, group_len: np.ndarray, avg_power: float) -> np.ndarray:
    """Per-group transmit gains g ~ lambda^(-1/4) under a mean-power budget.

    This is the classic analog power allocation: it minimizes total MSE across
    groups of unequal variance. Groups with negligible power get the largest
    finite gain so the inverse stays well defined.
    """
    lam = np.maximum(group_power, 1e-12 * max(float(group_power.max(initial=0.0)), 1e-300))
    raw = lam**-0.25
    budget = float(np.sum(group_len * raw**2 * lam))
    if budget <= 0.0:
        return np.ones_like(lam)
    kappa = np.sqrt(avg_power * float(group_len.sum()) / budget)
    return kappa * raw


def _wiener_decode(received: np.ndarray, gains: np.ndarray, lam: np.ndarray, noise_var) -> np.ndarray:
    """Invert the transmit gains; with known per-real noise variances apply the
    LLSE (Wiener) estimate of each coefficient instead of plain division."""
    if noise_var is None:
        return received / gains
    noise_var = np.asarray(noise_var, dtype=np.float64)
    exact = noise_var <= 0.0
    shrink = gains * lam / (gains**2 * lam + noise_var + 1e-300)
    out = received * shrink
    if np.any(exact):
        out[exact] = received[exact] / gains[exact]
    return out


# ---------------------------------------------------------------------------
# Trained GNN codec
# ---------------------------------------------------------------------------


class GnnCodec:
    """Graph-autoencoder pipeline; needs no basis metadata at all."""

    def __init__(self, params: ModelParams, name: str = "gnn"):
        self.params = params
        self.name = name

    def encode(self, cloud: PointCloud) -> CodecOutput:
        cfg = self.params.config
        if cloud.n_points != cfg.n_points:
            raise ParameterError(
                f"cloud has {cloud.n_points} points but the model expects {cfg.n_points}"
            )
        normed, affine = normalize(cloud)
        graph = build_knn_graph(normed, cfg.knn_k)
        code, _ = nn_encode(normed.points, graph.adjacency, self.params)
        return CodecOutput(
            data_reals=latent_to_reals(code),
            metadata=MetadataSpec(),
            side_info={"affine": affine, "id": cloud.id},
        )

    def decode(self, received: np.ndarray, output: CodecOutput, noise_var=None) -> PointCloud:
        recon, _ = nn_decode(received, self.params)
        return denormalize(PointCloud(recon, output.side_info["id"]), output.side_info["affine"])


# ---------------------------------------------------------------------------
# Octree + GFT codec, optionally with Givens-compressed bases
# ---------------------------------------------------------------------------


class HolocastCodec:
    """Per-octree-block spectral transform. The basis of every block is
    metadata: n^2 analog reals per block when shipped plain, or quantized
    rotation angles charged as bits in the Givens variant."""

    def __init__(
        self,
        block_size: int = 300,
        knn_k: int = 8,
        givens_bits: int | None = None,
        avg_power: float = 1.0,
        name: str | None = None,
    ):
        if block_size < 2:
            raise ParameterError(f"block_size must be >= 2, got {block_size}")
        self.block_size = block_size
        self.knn_k = knn_k
        self.givens_bits = givens_bits
        self.avg_power = avg_power
        if name is None:
            name = f"holocast_b{block_size}" if givens_bits is None else f"givens_b{block_size}_q{givens_bits}"
        self.name = name

    def encode(self, cloud: PointCloud) -> CodecOutput:
        normed, affine = normalize(cloud)
        octree = octree_decompose(normed, self.block_size)
        segments = []
        group_power = []
        group_len = []
        block_infos = []
        analog_reals = 0
        digital_bits = 0
        for block in octree.blocks:
            idx = block.indices
            pts = normed.points[idx]
            if idx.size < 2:
                # Degenerate block: its raw coordinates ride along as data.
                seg = pts.ravel()
                segments.append(seg)
                group_power.append(float(np.mean(seg**2)))
                group_len.append(seg.size)
                block_infos.append({"indices": idx, "basis": None})
                continue
            graph = build_knn_graph(PointCloud(pts), min(self.knn_k, idx.size - 1))
            basis = gft_basis_from_graph(graph, kind="random_walk_compatible")
            coeffs = gft_forward(basis, pts)
            # Axis-major layout keeps each (block, axis) power group contiguous.
            seg = coeffs.ravel(order="F")
            segments.append(seg)
            group_power.extend(float(np.mean(coeffs[:, a] ** 2)) for a in range(3))
            group_len.extend([idx.size] * 3)
            if self.givens_bits is None:
                analog_reals += idx.size**2
                receiver_basis = basis.basis
            else:
                fact = quantize_angles(givens_factorize(basis.basis), self.givens_bits)
                digital_bits += fact.angles.size * self.givens_bits
                receiver_basis = reconstruct_basis(fact)
            block_infos.append({"indices": idx, "basis": receiver_basis})
        v = np.concatenate(segments)
        group_power = np.asarray(group_power)
        group_len = np.asarray(group_len)
        gains = np.repeat(_allocation_gains(group_power, group_len, self.avg_power), group_len)
        lam = np.repeat(group_power, group_len)
        return CodecOutput(
            data_reals=v * gains,
            metadata=MetadataSpec(analog_reals=analog_reals, digital_bits=digital_bits),
            side_info={
                "affine": affine,
                "blocks": block_infos,
                "gains": gains,
                "lam": lam,
                "n_points": cloud.n_points,
                "id": cloud.id,
            },
        )

    def decode(self, received: np.ndarray, output: CodecOutput, noise_var=None) -> PointCloud:
        side = output.side_info
        v = _wiener_decode(np.asarray(received, dtype=np.float64), side["gains"], side["lam"], noise_var)
        points = np.zeros((side["n_points"], 3))
        offset = 0
        for info in side["blocks"]:
            idx = info["indices"]
            seg = v[offset : offset + 3 * idx.size]
            offset += 3 * idx.size
            if info["basis"] is None:
                points[idx] = seg.reshape(idx.size, 3)
            else:
                points[idx] = info["basis"] @ seg.reshape((idx.size, 3), order="F")
        return denormalize(PointCloud(points, side["id"]), side["affine"])


# ---------------------------------------------------------------------------
# DCT codec over Morton-ordered points
# ---------------------------------------------------------------------------


def _spread_bits(x: np.ndarray) -> np.ndarray:
    """Spread 10-bit values so their bits occupy every third position."""
    x = x.astype(np.uint64) & np.uint64(0x3FF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x030000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x0300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x030C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x09249249)
    return x


def morton_order(points: np.ndarray) -> np.ndarray:
    """Z-order permutation of points quantized to a 10-bit grid over [-1, 1]."""
    levels = 1 << MORTON_BITS
    q = np.clip(((points + 1.0) / 2.0 * levels).astype(np.int64), 0, levels - 1)
    code = (_spread_bits(q[:, 0]) << np.uint64(2)) | (_spread_bits(q[:, 1]) << np.uint64(1)) | _spread_bits(q[:, 2])
    return np.argsort(code, kind="stable")


class SoftcastCodec:
    """Per-axis DCT over a spatially coherent point order; the highest-energy
    64-coefficient chunks are sent until the symbol budget is filled, the rest
    decode as zero. The chunk-keep map and ordering are uncharged side info."""

    def __init__(self, symbol_budget: int, avg_power: float = 1.0, name: str | None = None):
        if symbol_budget < 3:
            raise ParameterError(f"symbol_budget must be >= 3, got {symbol_budget}")
        self.symbol_budget = symbol_budget
        self.avg_power = avg_power
        self.name = name if name is not None else f"softcast_s{symbol_budget}"

    def encode(self, cloud: PointCloud) -> CodecOutput:
        normed, affine = normalize(cloud)
        order = morton_order(normed.points)
        sorted_pts = normed.points[order]
        coeffs = np.stack([dct_forward(sorted_pts[:, axis]) for axis in range(3)], axis=1)
        n = cloud.n_points
        chunks = []
        for axis in range(3):
            for start in range(0, n, SOFTCAST_CHUNK):
                stop = min(n, start + SOFTCAST_CHUNK)
                energy = float(np.sum(coeffs[start:stop, axis] ** 2))
                chunks.append((axis, start, stop, energy))
        ranked = sorted(chunks, key=lambda c: (-c[3], c[0], c[1]))
        budget_reals = min(2 * self.symbol_budget, 3 * n)
        kept = []
        used = 0
        for axis, start, stop, _ in ranked:
            length = stop - start
            # The single strongest chunk is always sent, even past the budget.
            if not kept or used + length <= budget_reals:
                kept.append((axis, start, stop))
                used += length
        kept.sort()
        v = np.concatenate([coeffs[start:stop, axis] for axis, start, stop in kept])
        group_power = np.asarray([float(np.mean(coeffs[start:stop, axis] ** 2)) for axis, start, stop in kept])
        group_len = np.asarray([stop - start for _, start, stop in kept])
        gains = np.repeat(_allocation_gains(group_power, group_len, self.avg_power), group_len)
        lam = np.repeat(group_power, group_len)
        return CodecOutput(
            data_reals=v * gains,
            metadata=MetadataSpec(),
            side_info={
                "affine": affine,
                "order": order,
                "kept": kept,
                "gains": gains,
                "lam": lam,
                "n_points": n,
                "id": cloud.id,
            },
        )

    def decode(self, received: np.ndarray, output: CodecOutput, noise_var=None) -> PointCloud:
        side = output.side_info
        v = _wiener_decode(np.asarray(received, dtype=np.float64), side["gains"], side["lam"], noise_var)
        n = side["n_points"]
        coeffs = np.zeros((n, 3))
        offset = 0
        for axis, start, stop in side["kept"]:
            coeffs[start:stop, axis] = v[offset : offset + (stop - start)]
            offset += stop - start
        sorted_pts = np.stack([dct_inverse(coeffs[:, axis]) for axis in range(3)], axis=1)
        points = np.empty_like(sorted_pts)
        points[side["order"]] = sorted_pts
        return denormalize(PointCloud(points, side["id"]), side["affine"])


# ---------------------------------------------------------------------------
# Monte-Carlo trial driver
# ---------------------------------------------------------------------------


def run_codec_trial(
    codec,
    cloud: PointCloud,
    cfg: ChannelConfig,
    n_realizations: int,
    seed: int,
    output: CodecOutput | None = None,
) -> TransmissionReport:
    """Average the Chamfer distance over independent channel realizations.

    Per-trial randomness comes from (seed, trial index). Pass a precomputed
    `output` to amortize the encode across configurations.
    """
    if n_realizations < 1:
        raise ParameterError("n_realizations must be >= 1")
    if output is None:
        output = codec.encode(cloud)
    overhead = count_overhead(output.data_reals.size, output.metadata)
    n_symbols = (output.data_reals.size + 1) // 2
    chamfers = np.empty(n_realizations)
    for trial in range(n_realizations):
        realization = draw_realization(cfg, n_symbols, [int(seed), trial])
        z_hat, report = transmit(output.data_reals, cfg, realization)
        reconstruction = codec.decode(z_hat, output, noise_var=report.noise_std_per_real**2)
        chamfers[trial] = chamfer_distance(cloud, reconstruction)
    return TransmissionReport(
        codec=codec.name,
        snr_db=cfg.snr_db,
        equalization=cfg.equalization,
        precoding=cfg.precoding,
        data_symbols=overhead.data_symbols,
        metadata_symbols=overhead.metadata_symbols,
        total_symbols=overhead.total,
        chamfer_mean=float(chamfers.mean()),
        chamfer_std=float(chamfers.std()),
        seed=int(seed),
    )
