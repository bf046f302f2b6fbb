"""Command-line pipeline: simulate, characterize, train, evaluate, pipeline.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2
validation or configuration failure. All randomness flows from explicit
seeds, so identical invocations produce byte-identical outputs. The
BEAMFIX_SEED environment variable overrides the config seed; a --seed
flag overrides both.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset, denoise, evaluate, grid, nn, simulate, txid
from .dataset import DatasetBundle, DatasetFormatError, Direction
from .geo import NoiseSpec
from .grid import FitConvergenceError
from .nn import TrainConfig, TrainingDivergedError

DEFAULT_NOISE_LEVELS = (0.1, 0.5, 1.0, 2.0, 3.0)


class ConfigError(ValueError):
    """Invalid configuration or command arguments."""


@dataclass(frozen=True)
class RunConfig:
    scene_path: str | None = None
    grid_count: int = 100
    codebook_beams: int = 64
    codebook_antennas: int = 16
    noise_levels_m: tuple[float, ...] = DEFAULT_NOISE_LEVELS
    train_fraction: float = 0.7
    seed: int = 7
    samples_left_to_right: int = 1353
    samples_right_to_left: int = 1086
    num_distractors: int = 2
    output_dir: str = "runs/latest"
    learning_rate: float = 1e-3
    epochs: int = 250
    batch_size: int = 32
    bin_width_m: float = 0.05

    def validate(self) -> None:
        if self.grid_count < 1:
            raise ConfigError(f"grid_count must be >= 1, got {self.grid_count}")
        if any(level < 0 for level in self.noise_levels_m):
            raise ConfigError(f"noise levels must be >= 0, got {self.noise_levels_m}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.codebook_beams < self.codebook_antennas:
            raise ConfigError(
                f"codebook_beams ({self.codebook_beams}) must be >= "
                f"codebook_antennas ({self.codebook_antennas})"
            )
        if min(self.samples_left_to_right, self.samples_right_to_left) < 1:
            raise ConfigError("sample counts must be >= 1")
        if self.scene_path is not None and not Path(self.scene_path).exists():
            raise ConfigError(f"scene file does not exist: {self.scene_path}")


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        config = RunConfig()
        config.validate()
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if "noise_levels_m" in raw:
        raw["noise_levels_m"] = tuple(float(v) for v in raw["noise_levels_m"])
    config = RunConfig(**raw)
    config.validate()
    return config


def derived_seed(master: int, *tags: str) -> int:
    """Stable per-purpose seed derived from the master seed and string tags."""
    entropy = (master,) + tuple(zlib.crc32(t.encode("utf-8")) for t in tags)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def resolve_seed(flag_seed: int | None, config_seed: int) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("BEAMFIX_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"BEAMFIX_SEED must be an integer, got {env!r}") from None
    return config_seed


def _level_tag(level: float) -> str:
    return f"rms{level:g}"


def _direction_tag(direction: Direction) -> str:
    return direction.value.lower()


def _load_scene(config: RunConfig) -> simulate.SceneGeometry:
    if config.scene_path is None:
        return simulate.default_scene()
    try:
        return simulate.load_scene(config.scene_path)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot load scene {config.scene_path}: {exc}") from None


def _simulate_datasets(config: RunConfig, seed: int, out_dir: Path) -> list[Path]:
    """Write one clean bundle plus one bundle per noise level, per direction."""
    scene = _load_scene(config)
    codebook = simulate.build_dft_codebook(config.codebook_antennas, config.codebook_beams)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    counts = {
        Direction.LEFT_TO_RIGHT: config.samples_left_to_right,
        Direction.RIGHT_TO_LEFT: config.samples_right_to_left,
    }
    for direction, count in counts.items():
        dtag = _direction_tag(direction)
        traj = simulate.TrajectoryConfig(
            num_samples=count,
            direction=direction,
            num_distractors=config.num_distractors,
            seed=derived_seed(seed, "trajectory", dtag),
        )
        clean = simulate.generate_scenario(
            scene,
            codebook,
            traj,
            NoiseSpec(0.0, derived_seed(seed, "noise", dtag, "clean")),
            grid_count=config.grid_count,
            source=f"synthetic:{dtag}:clean",
        )
        clean = dataset.remove_outliers(clean)
        path = out_dir / f"{dtag}_clean.csv"
        dataset.save_csv(clean, path)
        written.append(path)
        for level in config.noise_levels_m:
            spec = NoiseSpec(level, derived_seed(seed, "noise", dtag, _level_tag(level)))
            noisy = dataset.inject_noise(clean, spec)
            noisy = DatasetBundle(
                noisy.samples,
                dataclasses.replace(noisy.metadata, source=f"synthetic:{dtag}:{_level_tag(level)}"),
            )
            path = out_dir / f"{dtag}_{_level_tag(level)}.csv"
            dataset.save_csv(noisy, path)
            written.append(path)
    return written


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    seed = resolve_seed(args.seed, config.seed)
    out_dir = Path(args.out if args.out else config.output_dir) / "datasets"
    written = _simulate_datasets(config, seed, out_dir)
    for path in written:
        bundle = dataset.load_csv(path)
        print(f"wrote {path} ({len(bundle)} samples, rms {bundle.metadata.noise_rms_m:g} m)")
    return 0


def _characterize(
    bundle: DatasetBundle, grid_count: int, bin_width_m: float, positions: str, out_dir: Path
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if positions == "auto":
        selector = "noisy" if all(s.noisy_position for s in bundle.samples) else "ground_truth"
    else:
        selector = {"ground-truth": "ground_truth", "noisy": "noisy"}[positions]
    table = grid.build_grid_table(bundle.samples, selector, grid_count)
    grid.save_grid_table_csv(table, out_dir / "pergrid.csv")
    pergrid_hist = grid.displacement_histogram(table, bin_width_m)
    grid.save_histogram_csv(pergrid_hist, out_dir / "histogram.csv")
    disp = grid.per_sample_displacements(bundle.samples, table, selector)
    sample_hist = grid.histogram_from_values(disp, bin_width_m)
    grid.save_histogram_csv(sample_hist, out_dir / "sample_histogram.csv")

    summary: dict = {
        "positions": selector,
        "grid_count": grid_count,
        "bin_width_m": bin_width_m,
        "populated_grids": len(table.cells),
        "mean_displacement_m": float(
            np.mean([table.cells[g].avg_displacement_m for g in table.populated()])
        ),
    }
    try:
        fit = grid.fit_gaussian(sample_hist)
        summary["fit"] = {
            "amplitude": fit.amplitude,
            "mean_m": fit.mean_m,
            "sigma_m": fit.sigma_m,
            "r_squared": fit.r_squared,
            "adjusted_r_squared": fit.adjusted_r_squared,
        }
        print(
            f"gaussian fit: mean {fit.mean_m:.3f} m, sigma {fit.sigma_m:.3f} m, "
            f"adjusted R^2 {fit.adjusted_r_squared:.4f}"
        )
    except (ValueError, FitConvergenceError) as exc:
        summary["fit"] = None
        summary["fit_skipped_reason"] = str(exc)
        print(f"gaussian fit skipped: {exc}")
    with open(out_dir / "fit.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_characterize(args: argparse.Namespace) -> int:
    bundle = dataset.load_csv(args.dataset)
    grid_count = args.grid_count if args.grid_count else bundle.metadata.grid_count
    out_dir = Path(args.out) if args.out else Path(args.dataset).parent / "characterize"
    _characterize(bundle, grid_count, args.bin_width, args.positions, out_dir)
    print(f"wrote characterization to {out_dir}")
    return 0


def _train_artifacts(
    bundle: DatasetBundle,
    train_fraction: float,
    seed: int,
    train_config: TrainConfig,
    out_dir: Path,
) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    z = bundle.metadata.grid_count
    anchor = grid.build_grid_table(bundle.samples, "ground_truth", z)
    train_bundle, test_bundle = dataset.split_train_test(
        bundle, train_fraction, derived_seed(seed, "split")
    )
    if train_config.batch_size > len(train_bundle):
        train_config = dataclasses.replace(train_config, batch_size=len(train_bundle))

    txid_config = dataclasses.replace(train_config, seed=derived_seed(seed, "txid"))
    txid_model, txid_history = txid.train_txid(train_bundle, txid_config)
    tx_preds = txid.identify_all(txid_model, train_bundle)
    centers = [p.selected_center for p in tx_preds]
    lut = denoise.build_lut(train_bundle, z, centers)
    denoiser_config = dataclasses.replace(train_config, seed=derived_seed(seed, "denoiser"))
    denoiser_model, denoiser_history = denoise.train_denoiser(
        train_bundle, centers, denoiser_config
    )

    dataset.save_csv(train_bundle, out_dir / "train.csv")
    dataset.save_csv(test_bundle, out_dir / "test.csv")
    grid.save_grid_table_csv(anchor, out_dir / "anchor.csv")
    nn.save_weights(txid_model, out_dir / "txid.json")
    nn.save_weights(denoiser_model, out_dir / "denoiser.json")
    denoise.save_lut_csv(lut, out_dir / "lut.csv")
    for name, history in (("txid_loss.csv", txid_history), ("denoiser_loss.csv", denoiser_history)):
        with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,loss\n")
            for epoch, loss in enumerate(history):
                fh.write(f"{epoch},{loss!r}\n")

    manifest = {
        "grid_count": z,
        "codebook_size": bundle.metadata.codebook_size,
        "noise_rms_m": bundle.metadata.noise_rms_m,
        "direction": bundle.metadata.direction.value,
        "source": bundle.metadata.source,
        "seed": seed,
        "train_fraction": train_fraction,
        "train_samples": len(train_bundle),
        "test_samples": len(test_bundle),
        "hyperparameters": {
            "learning_rate": train_config.learning_rate,
            "epochs": train_config.epochs,
            "batch_size": train_config.batch_size,
            "weight_init_scale": train_config.weight_init_scale,
        },
        "files": {
            "train": "train.csv",
            "test": "test.csv",
            "anchor": "anchor.csv",
            "txid_model": "txid.json",
            "denoiser_model": "denoiser.json",
            "lut": "lut.csv",
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def cmd_train(args: argparse.Namespace) -> int:
    bundle = dataset.load_csv(args.dataset)
    seed = resolve_seed(args.seed, RunConfig().seed)
    train_config = TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
    )
    manifest = _train_artifacts(bundle, args.train_fraction, seed, train_config, Path(args.out))
    print(
        f"trained artifacts in {args.out} "
        f"(train {manifest['train_samples']}, test {manifest['test_samples']})"
    )
    return 0


def _evaluate_artifacts(artifact_dirs: list[Path], out_dir: Path, bin_width_m: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: dict[float, evaluate.EvalReport] = {}
    exported = False
    for artifact_dir in artifact_dirs:
        manifest_path = artifact_dir / "manifest.json"
        if not manifest_path.exists():
            raise ConfigError(f"{artifact_dir}: no manifest.json; not a train output directory")
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        z = int(manifest["grid_count"])
        level = float(manifest["noise_rms_m"])
        test_bundle = dataset.load_csv(artifact_dir / manifest["files"]["test"])
        anchor = grid.load_grid_table_csv(artifact_dir / manifest["files"]["anchor"], z)
        txid_model = nn.load_weights(artifact_dir / manifest["files"]["txid_model"])
        if txid_model.layer_dims[0] != test_bundle.metadata.codebook_size:
            raise ConfigError(
                f"{artifact_dir}: txid model expects {txid_model.layer_dims[0]} beams but "
                f"dataset codebook has {test_bundle.metadata.codebook_size}"
            )
        denoiser_model = nn.load_weights(artifact_dir / manifest["files"]["denoiser_model"])
        lut = denoise.load_lut_csv(artifact_dir / manifest["files"]["lut"], z)

        predictions, tx_preds = evaluate.predict_methods(
            test_bundle, txid_model, lut, denoiser_model
        )
        report = evaluate.per_grid_error(test_bundle, predictions, anchor)
        reports[level] = report
        tag = _level_tag(level)
        evaluate.save_report_json(report, out_dir / f"report_{tag}.json")
        evaluate.save_pergrid_csv(report, out_dir / f"pergrid_{tag}.csv")
        txid.save_predictions_csv(
            [s.id for s in test_bundle.samples], tx_preds, out_dir / f"txid_predictions_{tag}.csv"
        )
        if level == 0.5:
            evaluate.export_plot_data(
                report, test_bundle, predictions, out_dir / "plots_rms0.5", bin_width_m
            )
            exported = True

    evaluate.save_comparison_csv(reports, out_dir / "comparison.csv")
    with open(out_dir / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump(evaluate.comparison_rows(reports), fh, indent=2, sort_keys=True)
        fh.write("\n")
    table = evaluate.comparison_text_table(reports)
    with open(out_dir / "comparison.txt", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    if exported:
        print(f"plot data for the 0.5 m level in {out_dir / 'plots_rms0.5'}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.artifacts]
    for d in dirs:
        if not d.exists():
            raise ConfigError(f"artifact directory does not exist: {d}")
    _evaluate_artifacts(dirs, Path(args.out), args.bin_width)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    seed = resolve_seed(args.seed, config.seed)
    root = Path(args.out if args.out else config.output_dir)
    dataset_paths = _simulate_datasets(config, seed, root / "datasets")
    print(f"simulated {len(dataset_paths)} datasets in {root / 'datasets'}")

    train_config = TrainConfig(
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
    )
    for direction in (Direction.LEFT_TO_RIGHT, Direction.RIGHT_TO_LEFT):
        dtag = _direction_tag(direction)
        artifact_dirs = []
        for path in dataset_paths:
            if not path.name.startswith(f"{dtag}_"):
                continue
            bundle = dataset.load_csv(path)
            tag = path.stem.removeprefix(f"{dtag}_")
            _characterize(
                bundle,
                config.grid_count,
                config.bin_width_m,
                "auto",
                root / "characterize" / f"{dtag}_{tag}",
            )
            if tag == "clean":
                continue
            artifact_dir = root / "artifacts" / dtag / tag
            _train_artifacts(
                bundle,
                config.train_fraction,
                derived_seed(seed, "train", dtag, tag),
                train_config,
                artifact_dir,
            )
            artifact_dirs.append(artifact_dir)
            print(f"trained {dtag} {tag}")
        _evaluate_artifacts(artifact_dirs, root / "eval" / dtag, config.bin_width_m)
    print(f"pipeline outputs in {root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamfix",
        description=(
            "Characterize site-specific GPS error and denoise positions to "
            "sub-meter accuracy from camera detections and beam indices."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic datasets per direction and noise level")
    p.add_argument("--config", help="run config JSON (defaults used when omitted)")
    p.add_argument("--out", help="output root (default: config output_dir)")
    p.add_argument("--seed", type=int, help="master seed override (beats BEAMFIX_SEED)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("characterize", help="per-grid error table, histograms, and Gaussian fit")
    p.add_argument("--dataset", required=True, help="dataset CSV to characterize")
    p.add_argument("--grid-count", type=int, default=None, help="grids Z (default: dataset metadata, typically 100)")
    p.add_argument("--bin-width", type=float, default=0.05, help="histogram bin width in meters (default 0.05)")
    p.add_argument(
        "--positions",
        choices=["auto", "ground-truth", "noisy"],
        default="auto",
        help="which positions to characterize (auto: noisy when present)",
    )
    p.add_argument("--out", help="output directory (default: <dataset dir>/characterize)")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("train", help="split, train both networks, and build the lookup table")
    p.add_argument("--dataset", required=True, help="dataset CSV with noisy positions")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--train-fraction", type=float, default=0.7, help="train split fraction (default 0.7)")
    p.add_argument("--seed", type=int, help="master seed override (beats BEAMFIX_SEED)")
    p.add_argument("--epochs", type=int, default=250, help="training epochs (default 250)")
    p.add_argument("--learning-rate", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=int, default=32, help="mini-batch size (default 32)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score trained artifacts on their test splits")
    p.add_argument("--artifacts", nargs="+", required=True, help="train output directories, one per noise level")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--bin-width", type=float, default=0.05, help="histogram bin width in meters (default 0.05)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="simulate, characterize, train, and evaluate end to end")
    p.add_argument("--config", help="run config JSON (defaults used when omitted)")
    p.add_argument("--out", help="output root (default: config output_dir)")
    p.add_argument("--seed", type=int, help="master seed override (beats BEAMFIX_SEED)")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, FitConvergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
