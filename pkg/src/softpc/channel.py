"""Analog I/Q symbol mapping, Rayleigh/AWGN channel simulation, equalization,
descending-|h| precoding, and transmission-overhead accounting.

The forward path is differentiable in the sense needed for training: for a
fixed channel realization the received reals are an affine function of the
transmitted reals, and `transmit_grad` applies the exact per-real gains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

MODES = ("awgn", "rayleigh")
EQUALIZATIONS = ("pre", "post")

# Divisor floor for post-equalization in a deep fade; keeps 1/h finite.
DEEP_FADE_FLOOR = 1e-12


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    mode: str = "rayleigh"
    equalization: str = "post"
    precoding: bool = False
    avg_power: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown channel mode {self.mode!r}")
        if self.equalization not in EQUALIZATIONS:
            raise ParameterError(f"unknown equalization {self.equalization!r}")
        if self.avg_power <= 0.0:
            raise ParameterError("avg_power must be positive")

    @property
    def noise_variance(self) -> float:
        """Per complex symbol: sigma^2 = P * 10^(-SNR/10)."""
        return self.avg_power * 10.0 ** (-self.snr_db / 10.0)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray            # (M,) complex fading coefficients
    noise: np.ndarray        # (M,) complex noise samples
    permutation: np.ndarray | None  # indices sorting |h| descending, or None

    @property
    def m_symbols(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class SymbolStream:
    symbols: np.ndarray  # (M,) complex
    source_len: int      # number of real values mapped


def reals_to_symbols(v: np.ndarray) -> SymbolStream:
    """Pack consecutive real pairs into I/Q symbols; odd tail pads Q with 0."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 1:
        raise ParameterError("need at least one real value to map")
    padded = v if v.size % 2 == 0 else np.concatenate([v, [0.0]])
    return SymbolStream(symbols=padded[0::2] + 1j * padded[1::2], source_len=v.size)


def symbols_to_reals(stream: SymbolStream) -> np.ndarray:
    out = np.empty(2 * stream.symbols.size)
    out[0::2] = stream.symbols.real
    out[1::2] = stream.symbols.imag
    return out[: stream.source_len]


def draw_realization(cfg: ChannelConfig, m_symbols: int, seed) -> ChannelRealization:
    """Seeded draw of fading and noise for `m_symbols` complex symbols.

    awgn mode fixes h = 1. The precoding permutation sorts |h| descending,
    ties broken toward the lower original index.
    """
    if m_symbols < 1:
        raise ParameterError("m_symbols must be >= 1")
    rng = np.random.default_rng(seed)
    if cfg.mode == "rayleigh":
        h = (rng.standard_normal(m_symbols) + 1j * rng.standard_normal(m_symbols)) / np.sqrt(2.0)
    else:
        h = np.ones(m_symbols, dtype=np.complex128)
    sigma = np.sqrt(cfg.noise_variance)
    if sigma > 0.0:
        noise = (rng.standard_normal(m_symbols) + 1j * rng.standard_normal(m_symbols)) * (sigma / np.sqrt(2.0))
    else:
        noise = np.zeros(m_symbols, dtype=np.complex128)
    permutation = np.argsort(-np.abs(h), kind="stable") if cfg.precoding else None
    return ChannelRealization(h=h, noise=noise, permutation=permutation)


@dataclass(frozen=True)
class ChannelReport:
    """Per-real effective transfer data, in transmit (latent) order."""

    gain_per_real: np.ndarray
    noise_std_per_real: np.ndarray
    outage_count: int


def transmit(z: np.ndarray, cfg: ChannelConfig, realization: ChannelRealization) -> tuple[np.ndarray, ChannelReport]:
    """Send a real vector through the configured fading channel.

    pre-equalization:  received symbol = |h| x + n        (no receiver division)
    post-equalization: received symbol = x + n / h
    With precoding, symbol t rides the channel use with the t-th largest |h|;
    gains are reported in latent order, so no un-permutation is needed later.
    """
    stream = reals_to_symbols(z)
    m = stream.symbols.size
    if realization.m_symbols < m:
        raise ParameterError(f"realization holds {realization.m_symbols} symbols, need {m}")
    if cfg.precoding:
        if realization.permutation is None:
            raise ParameterError("precoding enabled but realization carries no permutation")
        use = realization.permutation[:m]
    else:
        use = np.arange(m)
    h = realization.h[use]
    noise = realization.noise[use]
    abs_h = np.abs(h)
    outages = 0
    if cfg.equalization == "pre":
        received = abs_h * stream.symbols + noise
        gain_sym = abs_h
        noise_std_sym = np.full(m, np.sqrt(cfg.noise_variance / 2.0))
    else:
        deep = abs_h < DEEP_FADE_FLOOR
        outages = int(deep.sum())
        safe_h = h.copy()
        safe_h[deep] = DEEP_FADE_FLOOR
        received = stream.symbols + noise / safe_h
        gain_sym = np.ones(m)
        noise_std_sym = np.sqrt(cfg.noise_variance / 2.0) / np.maximum(abs_h, DEEP_FADE_FLOOR)
    z_hat = symbols_to_reals(SymbolStream(symbols=received, source_len=stream.source_len))
    gain = np.repeat(gain_sym, 2)[: stream.source_len]
    noise_std = np.repeat(noise_std_sym, 2)[: stream.source_len]
    return z_hat, ChannelReport(gain_per_real=gain, noise_std_per_real=noise_std, outage_count=outages)


def transmit_grad(upstream: np.ndarray, report: ChannelReport) -> np.ndarray:
    """Back-propagate through `transmit` for the realization that produced `report`."""
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if upstream.size != report.gain_per_real.size:
        raise ParameterError(
            f"gradient length {upstream.size} does not match report length {report.gain_per_real.size}"
        )
    return upstream * report.gain_per_real


# ---------------------------------------------------------------------------
# Overhead accounting
# ---------------------------------------------------------------------------

# Error-free digital side information is charged at a QPSK-equivalent rate.
BITS_PER_SYMBOL = 2


@dataclass(frozen=True)
class MetadataSpec:
    """What a codec must deliver besides data: analog reals and/or digital bits."""

    analog_reals: int = 0
    digital_bits: int = 0


@dataclass(frozen=True)
class OverheadReport:
    data_symbols: int
    metadata_symbols: int

    @property
    def total(self) -> int:
        return self.data_symbols + self.metadata_symbols

    def csv_fields(self) -> tuple[int, int, int]:
        return (self.data_symbols, self.metadata_symbols, self.total)


def count_overhead(data_reals: int, metadata: MetadataSpec | None = None) -> OverheadReport:
    """Total transmission symbols: two reals per symbol, two bits per symbol."""
    if data_reals < 0:
        raise ParameterError("data_reals must be >= 0")
    metadata = metadata or MetadataSpec()
    if metadata.analog_reals < 0 or metadata.digital_bits < 0:
        raise ParameterError("metadata counts must be >= 0")
    data_symbols = -(-data_reals // 2)
    meta_symbols = -(-metadata.analog_reals // 2) + -(-metadata.digital_bits // BITS_PER_SYMBOL)
    return OverheadReport(data_symbols=int(data_symbols), metadata_symbols=int(meta_symbols))
