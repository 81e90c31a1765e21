"""Experiment driver.

Subcommands: train, sweep-overhead, sweep-snr, matrix, snapshot, gen-data,
print-config. Every command derives all randomness from the master seed, so
a rerun with the same config file and seed reproduces its CSV bit for bit
(the train log's wall_time column is the one explicitly non-reproducible
field). Exit code 0 on success; a one-line `error: <kind>: <message>` on
stderr and a nonzero code otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelConfig, draw_realization, transmit
from .cloud import PointCloud, chamfer_distance
from .codecs import GnnCodec, HolocastCodec, SoftcastCodec, TransmissionReport, run_codec_trial
from .config import ExperimentConfig, dump_config, load_config
from .errors import SoftpcError
from .neural.model import ModelConfig, init_params, load_model, save_model
from .neural.train import TrainSchedule, train
from .pcio import read_manifest, save_cloud, write_manifest
from .synthetic import generate_synthetic_dataset

MODEL_FILE = "model.spcm"

# RNG stream tags for seeds derived from the master seed.
_STREAM_INIT = 5
_STREAM_MATRIX = 6


def load_dataset(cfg: ExperimentConfig) -> tuple[list[PointCloud], list[PointCloud]]:
    ds = cfg.dataset
    if ds.source == "manifest":
        entries = read_manifest(ds.path)
        train_clouds = [c for c, split in entries if split == "train"]
        test_clouds = [c for c, split in entries if split == "test"]
        if not train_clouds or not test_clouds:
            raise SoftpcError(f"manifest at {ds.path!r} lacks a train or test split")
        return train_clouds, test_clouds
    clouds = generate_synthetic_dataset(
        ds.family, ds.train_count + ds.test_count, ds.points, seed=cfg.experiment.seed
    )
    return clouds[: ds.train_count], clouds[ds.train_count :]


def model_config(cfg: ExperimentConfig, n_points: int) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        n_points=n_points,
        channels=tuple(m.channels),
        ratios=tuple(m.ratios),
        leaky_slope=m.leaky_slope,
        avg_power=m.avg_power,
        knn_k=m.knn_k,
    )


def train_schedule(cfg: ExperimentConfig) -> TrainSchedule:
    t = cfg.train
    return TrainSchedule(
        epochs=t.epochs,
        batch_size=t.batch_size,
        learning_rate=t.learning_rate,
        beta1=t.beta1,
        beta2=t.beta2,
        lr_decay_factor=t.lr_decay_factor,
        lr_decay_every=t.lr_decay_every,
    )


def training_channel(cfg: ExperimentConfig) -> ChannelConfig:
    t = cfg.train
    return ChannelConfig(
        snr_db=t.snr_db,
        mode=t.mode,
        equalization=t.equalization,
        precoding=t.precoding,
        avg_power=cfg.model.avg_power,
    )


def _write_lines(path: Path, header: str, rows: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header] + rows) + "\n")


def _pooled(reports: list[TransmissionReport]):
    """Aggregate per-cloud trial statistics into one operating-point row."""
    means = np.array([r.chamfer_mean for r in reports])
    stds = np.array([r.chamfer_std for r in reports])
    second = stds**2 + means**2
    mean = float(means.mean())
    std = float(np.sqrt(max(0.0, second.mean() - mean**2)))
    return (
        float(np.mean([r.data_symbols for r in reports])),
        float(np.mean([r.metadata_symbols for r in reports])),
        float(np.mean([r.total_symbols for r in reports])),
        mean,
        std,
    )


def _pooled_row(name: str, cfg_ch: ChannelConfig, reports: list[TransmissionReport], seed: int) -> str:
    data_sym, meta_sym, total_sym, mean, std = _pooled(reports)
    return ",".join(
        [
            name,
            f"{cfg_ch.snr_db:g}",
            cfg_ch.equalization,
            "on" if cfg_ch.precoding else "off",
            f"{data_sym:g}",
            f"{meta_sym:g}",
            f"{total_sym:g}",
            f"{mean:.9g}",
            f"{std:.9g}",
            str(seed),
        ]
    )


def softcast_budget(frac: float, n_points: int) -> int:
    total_symbols = -(-3 * n_points // 2)
    return max(3, int(round(frac * total_symbols)))


def build_eval_codecs(cfg: ExperimentConfig, params) -> list:
    """The fixed per-codec operating points used by the SNR sweep and snapshots."""
    c = cfg.codecs
    n = cfg.dataset.points
    return [
        GnnCodec(params),
        HolocastCodec(block_size=c.snr_holocast_block, knn_k=cfg.model.knn_k, avg_power=cfg.model.avg_power),
        HolocastCodec(
            block_size=c.givens_block_size,
            knn_k=cfg.model.knn_k,
            givens_bits=c.snr_givens_bits,
            avg_power=cfg.model.avg_power,
        ),
        SoftcastCodec(softcast_budget(c.snr_softcast_frac, n), avg_power=cfg.model.avg_power),
    ]


def _load_checkpoint(out_dir: Path):
    path = out_dir / MODEL_FILE
    if not path.exists():
        raise SoftpcError(f"missing checkpoint {path}; run the train command first")
    return load_model(path)


def _eval_clouds(cfg: ExperimentConfig, test_clouds: list[PointCloud]) -> list[PointCloud]:
    count = min(cfg.experiment.eval_clouds, len(test_clouds))
    if count < 1:
        raise SoftpcError("no evaluation clouds available")
    return test_clouds[:count]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_data(cfg: ExperimentConfig, out_dir: Path) -> Path:
    train_clouds, test_clouds = load_dataset(cfg)
    target = out_dir / "dataset"
    write_manifest(
        target,
        train_clouds + test_clouds,
        ["train"] * len(train_clouds) + ["test"] * len(test_clouds),
    )
    return target

def cmd_train(cfg: ExperimentConfig, out_dir: Path, resume: bool = False) -> Path:
    train_clouds, _ = load_dataset(cfg)
    seed = cfg.experiment.seed
    model_path = out_dir / MODEL_FILE
    if resume:
        params, start_epoch, adam_state = _load_checkpoint(out_dir)
    else:
        params = init_params(model_config(cfg, cfg.dataset.points), seed=[seed, _STREAM_INIT])
        start_epoch, adam_state = 0, None
    rows: list[str] = []

    def log(epoch, mean_loss, wall):
        rows.append(f"{epoch},{mean_loss:.9g},{wall:.3f}")

    losses, adam_state = train(
        train_clouds,
        params,
        training_channel(cfg),
        train_schedule(cfg),
        seed=seed,
        start_epoch=start_epoch,
        adam_state=adam_state,
        log_fn=log,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(params, model_path, epoch=start_epoch + len(losses), adam_state=adam_state)
    mode = "a" if resume and (out_dir / "train.csv").exists() else "w"
    if mode == "a":
        with open(out_dir / "train.csv", "a") as fh:
            fh.write("\n".join(rows) + "\n")
    else:
        _write_lines(out_dir / "train.csv", "epoch,mean_loss,wall_time", rows)
    return model_path


def cmd_sweep_overhead(cfg: ExperimentConfig, out_dir: Path) -> Path:
    params, _, _ = _load_checkpoint(out_dir)
    _, test_clouds = load_dataset(cfg)
    clouds = _eval_clouds(cfg, test_clouds)
    seed = cfg.experiment.seed
    ch = ChannelConfig(
        snr_db=cfg.experiment.overhead_snr_db,
        mode=cfg.channel.mode,
        equalization=cfg.channel.equalization,
        precoding=cfg.channel.precoding,
        avg_power=cfg.model.avg_power,
    )
    codecs = [GnnCodec(params)]
    for block in cfg.codecs.holocast_block_sizes:
        codecs.append(HolocastCodec(block_size=block, knn_k=cfg.model.knn_k, avg_power=cfg.model.avg_power))
    for bits in cfg.codecs.givens_bit_depths:
        codecs.append(
            HolocastCodec(
                block_size=cfg.codecs.givens_block_size,
                knn_k=cfg.model.knn_k,
                givens_bits=bits,
                avg_power=cfg.model.avg_power,
            )
        )
    for frac in cfg.codecs.softcast_budget_fracs:
        codecs.append(SoftcastCodec(softcast_budget(frac, cfg.dataset.points), avg_power=cfg.model.avg_power))
    rows = []
    for codec in codecs:
        reports = [
            run_codec_trial(codec, cloud, ch, cfg.experiment.n_realizations, seed) for cloud in clouds
        ]
        rows.append(_pooled_row(codec.name, ch, reports, seed))
    rows.sort()
    path = out_dir / "sweep-overhead.csv"
    _write_lines(path, TransmissionReport.CSV_HEADER, rows)
    return path


def cmd_sweep_snr(cfg: ExperimentConfig, out_dir: Path) -> Path:
    params, _, _ = _load_checkpoint(out_dir)
    _, test_clouds = load_dataset(cfg)
    clouds = _eval_clouds(cfg, test_clouds)
    seed = cfg.experiment.seed
    rows = []
    for codec in build_eval_codecs(cfg, params):
        outputs = [codec.encode(cloud) for cloud in clouds]
        for snr in cfg.channel.snr_list:
            ch = ChannelConfig(
                snr_db=snr,
                mode=cfg.channel.mode,
                equalization=cfg.channel.equalization,
                precoding=cfg.channel.precoding,
                avg_power=cfg.model.avg_power,
            )
            reports = [
                run_codec_trial(codec, cloud, ch, cfg.experiment.n_realizations, seed, output=out)
                for cloud, out in zip(clouds, outputs)
            ]
            rows.append(_pooled_row(codec.name, ch, reports, seed))
    rows.sort(key=lambda r: (r.split(",")[0], float(r.split(",")[1])))
    path = out_dir / "sweep-snr.csv"
    _write_lines(path, TransmissionReport.CSV_HEADER, rows)
    return path


def cmd_matrix(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Train one model per (equalization, precoding) cell and sweep SNR."""
    train_clouds, test_clouds = load_dataset(cfg)
    clouds = _eval_clouds(cfg, test_clouds)
    seed = cfg.experiment.seed
    rows = []
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx, (eq, precoding) in enumerate(
        [("pre", False), ("pre", True), ("post", False), ("post", True)]
    ):
        ch_train = ChannelConfig(
            snr_db=cfg.train.snr_db,
            mode=cfg.train.mode,
            equalization=eq,
            precoding=precoding,
            avg_power=cfg.model.avg_power,
        )
        params = init_params(model_config(cfg, cfg.dataset.points), seed=[seed, _STREAM_INIT])
        train(train_clouds, params, ch_train, train_schedule(cfg), seed=seed)
        tag = f"{eq}_{'on' if precoding else 'off'}"
        save_model(params, out_dir / f"matrix_{tag}.spcm", epoch=cfg.train.epochs)
        codec = GnnCodec(params, name=f"gnn_{tag}")
        outputs = [codec.encode(cloud) for cloud in clouds]
        for snr in cfg.channel.snr_list:
            ch = ChannelConfig(
                snr_db=snr, mode=cfg.channel.mode, equalization=eq,
                precoding=precoding, avg_power=cfg.model.avg_power,
            )
            reports = [
                run_codec_trial(codec, cloud, ch, cfg.experiment.n_realizations, seed, output=out)
                for cloud, out in zip(clouds, outputs)
            ]
            rows.append(_pooled_row(codec.name, ch, reports, seed))
    rows.sort(key=lambda r: (r.split(",")[2], r.split(",")[3], float(r.split(",")[1])))
    path = out_dir / "matrix.csv"
    _write_lines(path, TransmissionReport.CSV_HEADER, rows)
    return path


def cmd_snapshot(cfg: ExperimentConfig, out_dir: Path, cloud_id: str = "", snr_db: float | None = None) -> Path:
    params, _, _ = _load_checkpoint(out_dir)
    _, test_clouds = load_dataset(cfg)
    if cloud_id:
        matches = [c for c in test_clouds if c.id == cloud_id]
        if not matches:
            raise SoftpcError(f"unknown cloud id {cloud_id!r} in the test split")
        cloud = matches[0]
    else:
        cloud = test_clouds[0]
    snr = cfg.experiment.overhead_snr_db if snr_db is None else snr_db
    seed = cfg.experiment.seed
    out_dir.mkdir(parents=True, exist_ok=True)
    save_cloud(cloud, out_dir / "snapshot_original.ply")
    rows = []
    for codec in build_eval_codecs(cfg, params):
        ch = ChannelConfig(
            snr_db=snr, mode=cfg.channel.mode, equalization=cfg.channel.equalization,
            precoding=cfg.channel.precoding, avg_power=cfg.model.avg_power,
        )
        output = codec.encode(cloud)
        n_symbols = (output.data_reals.size + 1) // 2
        realization = draw_realization(ch, n_symbols, [seed, 0])
        z_hat, report = transmit(output.data_reals, ch, realization)
        reconstruction = codec.decode(z_hat, output, noise_var=report.noise_std_per_real**2)
        fname = f"snapshot_{codec.name}.ply"
        save_cloud(reconstruction, out_dir / fname)
        rows.append(f"{codec.name},{snr:g},{chamfer_distance(cloud, reconstruction):.9g},{fname}")
    rows.sort()
    path = out_dir / "snapshot.csv"
    _write_lines(path, "codec,snr_db,chamfer,file", rows)
    return path


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softpc", description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="INI config file (defaults apply otherwise)")
    parser.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    parser.add_argument("--out", type=str, default=None, help="output directory, overrides the config")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("print-config", help="print the effective configuration")
    sub.add_parser("gen-data", help="write the dataset as cloud files plus an index")
    p_train = sub.add_parser("train", help="train the codec and write checkpoint + loss CSV")
    p_train.add_argument("--resume", action="store_true", help="continue from the existing checkpoint")
    sub.add_parser("sweep-overhead", help="quality vs overhead at a fixed SNR")
    sub.add_parser("sweep-snr", help="quality vs SNR for the fixed codec set")
    sub.add_parser("matrix", help="equalization x precoding grid, one trained model per cell")
    p_snap = sub.add_parser("snapshot", help="write per-codec reconstructions of one cloud")
    p_snap.add_argument("--cloud-id", type=str, default="", help="test-split cloud id (default: first)")
    p_snap.add_argument("--snr", type=float, default=None, help="channel SNR in dB")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.experiment.seed = args.seed
        if args.out is not None:
            cfg.experiment.out_dir = args.out
        out_dir = Path(cfg.experiment.out_dir)
        if args.command == "print-config":
            sys.stdout.write(dump_config(cfg))
        elif args.command == "gen-data":
            print(cmd_gen_data(cfg, out_dir))
        elif args.command == "train":
            print(cmd_train(cfg, out_dir, resume=args.resume))
        elif args.command == "sweep-overhead":
            print(cmd_sweep_overhead(cfg, out_dir))
        elif args.command == "sweep-snr":
            print(cmd_sweep_snr(cfg, out_dir))
        elif args.command == "matrix":
            print(cmd_matrix(cfg, out_dir))
        elif args.command == "snapshot":
            print(cmd_snapshot(cfg, out_dir, cloud_id=args.cloud_id, snr_db=args.snr))
    except (SoftpcError, FileNotFoundError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
