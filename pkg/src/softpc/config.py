"""Declarative experiment configuration: INI sections with typed defaults.

Every CLI command is a pure function of (config file, master seed); the
defaults below are the shipped desk-scale operating point and `print-config`
dumps them in loadable form.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ParameterError


@dataclass
class DatasetSection:
    source: str = "synthetic"        # "synthetic" | "manifest"
    path: str = ""                   # manifest directory when source=manifest
    family: str = "airplane"
    train_count: int = 200
    test_count: int = 34
    points: int = 512


@dataclass
class ModelSection:
    channels: tuple[int, ...] = (24, 36, 48)
    ratios: tuple[float, ...] = (0.6, 0.5, 0.5)
    leaky_slope: float = 0.01
    knn_k: int = 8
    avg_power: float = 1.0


@dataclass
class TrainSection:
    epochs: int = 500
    batch_size: int = 10
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    lr_decay_factor: float = 1.0
    lr_decay_every: int = 0
    snr_db: float = 18.0
    mode: str = "rayleigh"
    equalization: str = "post"
    precoding: bool = True


@dataclass
class ChannelSection:
    snr_list: tuple[float, ...] = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    mode: str = "rayleigh"
    equalization: str = "post"
    precoding: bool = True


@dataclass
class CodecsSection:
    holocast_block_sizes: tuple[int, ...] = (100, 200, 300, 500)
    givens_block_size: int = 300
    givens_bit_depths: tuple[int, ...] = (2, 3, 4, 5, 6, 8, 10, 12)
    softcast_budget_fracs: tuple[float, ...] = (0.125, 0.25, 0.5, 1.0)
    # Single-variant choices used by the SNR sweep and snapshots.
    snr_holocast_block: int = 300
    snr_givens_bits: int = 5
    snr_softcast_frac: float = 0.25


@dataclass
class ExperimentSection:
    seed: int = 20210
    out_dir: str = "out"
    n_realizations: int = 20
    eval_clouds: int = 8
    overhead_snr_db: float = 20.0


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    codecs: CodecsSection = field(default_factory=CodecsSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def validate(self) -> None:
        if not self.channel.snr_list:
            raise ParameterError("channel.snr_list must not be empty")
        if self.dataset.source not in ("synthetic", "manifest"):
            raise ParameterError(f"unknown dataset source {self.dataset.source!r}")
        if self.dataset.source == "manifest" and not Path(self.dataset.path).is_dir():
            raise ParameterError(f"dataset.path does not exist: {self.dataset.path!r}")


def _parse_value(current, text: str):
    text = text.strip()
    if isinstance(current, bool):
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"expected a boolean, got {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        items = [t for t in text.split(",") if t.strip()]
        if current and isinstance(current[0], int) and not isinstance(current[0], bool):
            return tuple(int(t) for t in items)
        return tuple(float(t) for t in items)
    return text


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def load_config(path=None) -> ExperimentConfig:
    """Defaults overlaid with the file's sections; unknown keys are rejected."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(str(path))
    if not read:
        raise ParameterError(f"config file not found: {path}")
    for section_name in parser.sections():
        if not hasattr(cfg, section_name):
            raise ParameterError(f"unknown config section [{section_name}]")
        section = getattr(cfg, section_name)
        known = {f.name for f in fields(section)}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ParameterError(f"unknown key {key!r} in section [{section_name}]")
            try:
                setattr(section, key, _parse_value(getattr(section, key), raw))
            except ValueError as exc:
                raise ParameterError(f"[{section_name}] {key}: {exc}") from None
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    for section_field in fields(cfg):
        section = getattr(cfg, section_field.name)
        out.write(f"[{section_field.name}]\n")
        for f in fields(section):
            out.write(f"{f.name} = {_format_value(getattr(section, f.name))}\n")
        out.write("\n")
    return out.getvalue()
