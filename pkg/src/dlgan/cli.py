"""Command-line surface: train, synthesize, evaluate, make-sine.

Every command is deterministic under (inputs, seed). Exit codes: 0 success,
2 invalid configuration, 3 data errors, 4 training divergence, 5 checkpoint
errors.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from . import __version__
from .data import (
    NormStats,
    fit_normalizer,
    load_csv,
    make_sine_frame,
    make_windows,
    normalize,
    train_eval_split,
    as_window_array,
)
from .errors import (
    ConfigInvalid,
    CorruptFile,
    DivergenceDetected,
    DlganError,
    EmptyAfterCleaning,
    FeatureCountMismatch,
    InsufficientData,
    NoNumericColumns,
    SeriesTooShort,
    ShapeMismatch,
    UntrainedCheckpoint,
    VersionMismatch,
)
from .evaluation import (
    MetricsReport,
    discriminative_score,
    predictive_score,
    score_over_seeds,
    tsne_export,
)
from .training import Checkpoint, Trainer, TrainingConfig, synthesize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_CHECKPOINT = 5

_DATA_ERRORS = (FileNotFoundError, NoNumericColumns, EmptyAfterCleaning,
                SeriesTooShort, FeatureCountMismatch, InsufficientData,
                ShapeMismatch)
_CHECKPOINT_ERRORS = (VersionMismatch, CorruptFile, UntrainedCheckpoint)

METRIC_SEEDS = 5


@dataclass
class RunManifest:
    """Everything needed to reproduce a run, written before training."""

    command: str
    config: dict
    data_path: str
    data_sha256: str
    started_at: str
    tool_version: str = __version__

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _resolve_seed(args, config_dict):
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in config_dict:
        return config_dict["seed"]
    env = os.environ.get("DLGAN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigInvalid(f"DLGAN_SEED must be an integer, got {env!r}") from exc
    return None


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"config {path}: expected a flat key-value object")
    known = {f.name for f in fields(TrainingConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigInvalid(f"config {path}: unknown fields {sorted(unknown)}")
    return raw


def _build_config(args):
    values = _load_config(getattr(args, "config", None))
    seed = _resolve_seed(args, values)
    if seed is not None:
        values["seed"] = seed
    ablation = getattr(args, "ablation", None)
    if ablation == "no_extractor":
        values["no_extractor"] = True
    elif ablation == "no_reconstructor":
        values["no_reconstructor"] = True
    elif ablation == "all":
        values["no_extractor"] = True
        values["no_reconstructor"] = True
    try:
        return TrainingConfig(**values)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from exc


def _prepare_dataset(data_path, config):
    raw = load_csv(data_path, min_rows=config.window_length)
    stats = fit_normalizer(raw)
    normalized = normalize(raw, stats)
    windows = make_windows(normalized, config.window_length, config.stride)
    train, held_out = train_eval_split(windows, config.eval_fraction, config.seed)
    return stats, train, held_out


def cmd_train(args):
    config = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    raw_probe = load_csv(args.data, min_rows=1)
    resolved = config.resolved(raw_probe.feature_count)
    resolved.validate()
    stats, train, _ = _prepare_dataset(args.data, resolved)
    manifest = RunManifest(
        command=" ".join(sys.argv),
        config=asdict(resolved) | {"n_features": resolved.n_features},
        data_path=str(args.data),
        data_sha256=_sha256_file(args.data),
        started_at=datetime.now(timezone.utc).isoformat(),
    )
    manifest.save(os.path.join(args.out, "manifest.json"))
    checkpoint_path = os.path.join(args.out, "checkpoint.dlgan")
    loss_log = os.path.join(args.out, "losses.jsonl")
    trainer = Trainer(resolved, train, norm_stats=stats)
    with open(loss_log, "w") as fh:
        def log(record):
            fh.write(record.to_json() + "\n")
            fh.flush()
            if not args.quiet:
                print(record.to_json())
        trainer.train(on_record=log, checkpoint_path=checkpoint_path)
    return EXIT_OK


def _write_windows_csv(path, windows, feature_names):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_id"] + list(feature_names))
        for i, window in enumerate(windows):
            for row in window:
                writer.writerow([i] + [repr(float(v)) for v in row])


def cmd_synthesize(args):
    ckpt = Checkpoint.load(args.checkpoint)
    seed = args.seed
    if seed is None:
        env = os.environ.get("DLGAN_SEED")
        seed = int(env) if env is not None else ckpt.config.seed
    generated = synthesize(ckpt, args.n, seed=seed)
    names = (ckpt.norm_stats.feature_names if ckpt.norm_stats is not None
             else [f"f{j}" for j in range(ckpt.config.n_features)])
    if args.per_window_files:
        os.makedirs(args.out, exist_ok=True)
        for i, window in enumerate(generated):
            _write_windows_csv(os.path.join(args.out, f"window_{i:05d}.csv"),
                               window[None], names)
        if not args.quiet:
            print(f"wrote {len(generated)} window files under {args.out}")
    else:
        _write_windows_csv(args.out, generated, names)
        if not args.quiet:
            print(f"wrote {len(generated)} windows to {args.out}")
    return EXIT_OK


def read_windows_csv(path, window_length=None):
    """Read a window-id CSV (as written by ``synthesize``) into (B, T, M)."""
    frame = pd.read_csv(path)
    if "window_id" not in frame.columns:
        raise NoNumericColumns(f"{path}: missing window_id column")
    groups = [g.drop(columns="window_id").to_numpy(dtype=np.float64)
              for _, g in frame.groupby("window_id", sort=True)]
    if not groups:
        raise EmptyAfterCleaning(f"{path}: no windows")
    lengths = {g.shape for g in groups}
    if len(lengths) != 1:
        raise ShapeMismatch(f"{path}: inconsistent window shapes {lengths}")
    arr = np.stack(groups)
    if window_length is not None and arr.shape[1] != window_length:
        raise ShapeMismatch(
            f"{path}: windows have {arr.shape[1]} steps, expected {window_length}")
    features = [c for c in frame.columns if c != "window_id"]
    return arr, features


def cmd_evaluate(args):
    if (args.checkpoint is None) == (args.synth is None):
        raise ConfigInvalid("provide exactly one of --checkpoint or --synth")
    os.makedirs(args.out, exist_ok=True)

    if args.checkpoint is not None:
        ckpt = Checkpoint.load(args.checkpoint)
        config, stats = ckpt.config, ckpt.norm_stats
        raw = load_csv(args.data, min_rows=config.window_length)
        if raw.feature_count != config.n_features:
            raise FeatureCountMismatch(
                f"checkpoint expects {config.n_features} features, "
                f"data has {raw.feature_count}")
        seed = args.seed if args.seed is not None else config.seed
        _, train_real, eval_real = _split_real(raw, stats, config)
        synth_norm = synthesize(ckpt, len(eval_real), seed=seed, denormalized=False)
        ablation = {"no_extractor": config.no_extractor,
                    "no_reconstructor": config.no_reconstructor}
    else:
        raw = load_csv(args.data, min_rows=2)
        seed = args.seed if args.seed is not None else 0
        config = TrainingConfig(seed=seed).resolved(raw.feature_count)
        synth_raw, features = read_windows_csv(args.synth)
        if synth_raw.shape[2] != raw.feature_count:
            raise FeatureCountMismatch(
                f"synthetic windows have {synth_raw.shape[2]} features, "
                f"data has {raw.feature_count}")
        config.window_length = synth_raw.shape[1]
        stats = fit_normalizer(raw)
        _, train_real, eval_real = _split_real(raw, stats, config)
        span = np.where(stats.is_constant, 1.0, stats.maximum - stats.minimum)
        synth_norm = np.clip((synth_raw - stats.minimum) / span, 0.0, 1.0)
        synth_norm[..., stats.is_constant] = 0.5
        ablation = {}

    seeds = [seed + i for i in range(METRIC_SEEDS)]
    disc_mean, disc_std = score_over_seeds(
        discriminative_score, eval_real, synth_norm, seeds)
    pred_mean, pred_std = score_over_seeds(
        predictive_score, eval_real, synth_norm, seeds)
    trtr_mean, _ = score_over_seeds(predictive_score, eval_real, train_real, seeds)
    tsne_path = os.path.join(args.out, "tsne.csv")
    image = os.path.join(args.out, "tsne.png") if args.image else None
    tsne_export(eval_real, synth_norm, tsne_path, seed=seed, image_path=image)

    report = MetricsReport(
        discriminative_score=disc_mean,
        predictive_score=pred_mean,
        discriminative_std=disc_std,
        predictive_std=pred_std,
        trtr_score=trtr_mean,
        tsne_path=tsne_path,
        dataset=str(args.data),
        seed=seed,
        real_windows=len(eval_real),
        synthetic_windows=len(synth_norm),
        metric_seeds=METRIC_SEEDS,
        ablation=ablation,
    )
    report.save(os.path.join(args.out, "metrics.json"))
    if not args.quiet:
        print(report.to_json())
    return EXIT_OK


def _split_real(raw, stats, config):
    normalized = normalize(raw, stats)
    windows = make_windows(normalized, config.window_length, config.stride)
    train_real, eval_real = train_eval_split(windows, config.eval_fraction, config.seed)
    return windows, train_real, eval_real


def cmd_make_sine(args):
    frame = make_sine_frame(length=args.length, features=args.features, seed=args.seed or 0)
    frame.to_csv(args.out, index=False)
    if not args.quiet:
        print(f"wrote {len(frame)} rows x {frame.shape[1]} features to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dlgan",
        description="Train, sample, and evaluate the dual-layer time-series synthesizer.",
    )
    parser.add_argument("--print-config", action="store_true",
                        help="print the default configuration as JSON and exit")
    parser.add_argument("--version", action="version", version=f"dlgan {__version__}")
    sub = parser.add_subparsers(dest="command")

    train = sub.add_parser("train", help="run the three-phase training schedule")
    train.add_argument("--config", help="flat JSON config file")
    train.add_argument("--data", required=True, help="input CSV (header row)")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--seed", type=int)
    train.add_argument("--ablation", choices=["no_extractor", "no_reconstructor", "all"])
    train.add_argument("--quiet", action="store_true")
    train.set_defaults(fn=cmd_train)

    synth = sub.add_parser("synthesize", help="sample windows from a checkpoint")
    synth.add_argument("--checkpoint", required=True)
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--out", required=True,
                       help="output CSV (or directory with --per-window-files)")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--per-window-files", action="store_true",
                       help="one CSV per window instead of a window-id column")
    synth.add_argument("--quiet", action="store_true")
    synth.set_defaults(fn=cmd_synthesize)

    evaluate = sub.add_parser("evaluate", help="score synthetic against real data")
    evaluate.add_argument("--checkpoint", help="checkpoint to synthesize from")
    evaluate.add_argument("--synth", help="synthetic windows CSV (window-id format)")
    evaluate.add_argument("--data", required=True, help="real data CSV")
    evaluate.add_argument("--out", required=True, help="output directory")
    evaluate.add_argument("--seed", type=int)
    evaluate.add_argument("--image", action="store_true",
                          help="also write a t-SNE scatter image")
    evaluate.add_argument("--quiet", action="store_true")
    evaluate.set_defaults(fn=cmd_evaluate)

    sine = sub.add_parser("make-sine", help="write a bundled sinusoid fixture CSV")
    sine.add_argument("--out", required=True)
    sine.add_argument("--seed", type=int)
    sine.add_argument("--length", type=int, default=2000)
    sine.add_argument("--features", type=int, default=5)
    sine.add_argument("--quiet", action="store_true")
    sine.set_defaults(fn=cmd_make_sine)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        defaults = asdict(TrainingConfig())
        print(json.dumps(defaults, indent=2, sort_keys=True))
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _CHECKPOINT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DivergenceDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DlganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
