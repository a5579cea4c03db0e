"""Single entry-point command line: dataset generation/inspection, training,
prediction, and evaluation with metric plots.

Exit codes: 0 success, 2 I/O or validation error, 3 config conflict,
4 numerical training fault. Every command writes a run manifest naming its
artifacts; given identical inputs and seed, artifacts are byte-identical
across invocations (manifest timing fields excepted).
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (CheckpointError, ConfigConflictError, DatasetError,
                     DimensionError, FramecastError, GlyphSourceError,
                     TrainingFault, ValidationError)
from .evaluation import copylast_predictor, evaluate, long_term_predict
from .trainer import (TrainConfig, Trainer, generator_predictor, load_generator,
                      run_training)
from .videodata import (MovingMnistConfig, SequenceWindowing, VideoDataset,
                        count_windows, downsample_to_resolution,
                        generate_moving_mnist, load_digit_glyphs,
                        window_sequences)

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_FAULT = 4

OUT_ROOT_ENV = "FRAMECAST_OUT"


def _default_out(command):
    root = os.environ.get(OUT_ROOT_ENV, "framecast_runs")
    return Path(root) / command


def _write_manifest(out_dir, command, config_snapshot, seed, artifacts, started):
    """Atomically record what a run produced; called last, so every artifact
    it names exists."""
    out_dir = Path(out_dir)
    paths = [Path(p) for p in artifacts]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise DatasetError(f"manifest lists missing artifacts: {missing}")
    manifest = {
        "command": command,
        "config": config_snapshot,
        "seed": seed,
        "artifacts": sorted(str(p) for p in paths),
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    tmp = out_dir / "run_manifest.json.tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    tmp.replace(out_dir / "run_manifest.json")


def _frames_to_uint8(frames):
    """(C, T, H, W) in [-1, 1] -> (T, H, W) or (T, H, W, 3) uint8.

    One fixed linear mapping for the whole clip, so brightness is comparable
    across a strip.
    """
    u8 = np.round((np.clip(frames, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    u8 = u8.transpose(1, 2, 3, 0)
    return u8[..., 0] if u8.shape[-1] == 1 else u8


def _save_frames(u8, out_dir, prefix):
    from PIL import Image

    paths = []
    for i, frame in enumerate(u8):
        p = Path(out_dir) / f"{prefix}_{i:03d}.png"
        Image.fromarray(frame).save(p)
        paths.append(p)
    return paths


def _save_gif(u8, path, ms_per_frame=150):
    from PIL import Image

    imgs = [Image.fromarray(f) for f in u8]
    imgs[0].save(path, save_all=True, append_images=imgs[1:],
                 duration=ms_per_frame, loop=0)
    return path


def _save_strip(u8, path):
    from PIL import Image

    strip = np.concatenate(list(u8), axis=1)
    Image.fromarray(strip).save(path)
    return path


def _plot_curves(report, baseline_report, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = {"mse": "MSE", "psnr_db": "PSNR [dB]", "ssim": "SSIM"}
    paths = []
    for key, ylabel in labels.items():
        fig, ax = plt.subplots(figsize=(5, 3.5))
        x = range(1, len(report.per_frame) + 1)
        ax.plot(x, [row[key] for row in report.per_frame], marker="o",
                label=report.metadata.get("model_id", "model"))
        if baseline_report is not None:
            ax.plot(x, [row[key] for row in baseline_report.per_frame], marker="s",
                    label=baseline_report.metadata.get("model_id", "baseline"))
        ax.set_xlabel("predicted frame")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        p = Path(out_dir) / f"{key.split('_')[0]}.png"
        fig.savefig(p, metadata={"Software": f"framecast {__version__}"})
        plt.close(fig)
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# subcommands


def cmd_dataset_gen(args):
    started = time.time()
    config = MovingMnistConfig(
        num_videos=args.videos, video_length=args.length, canvas=args.canvas,
        digits_per_video=args.digits, speed_min=args.speed_min,
        speed_max=args.speed_max, seed=args.seed)
    glyphs = load_digit_glyphs(args.glyphs) if args.glyphs else None
    dataset = generate_moving_mnist(config, glyphs=glyphs)
    out = Path(args.out) if args.out else _default_out("dataset") / "moving_mnist.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset.save(out)
    print(f"wrote {out}: {dataset.num_videos} videos x {dataset.lengths[0]} frames "
          f"@ {dataset.resolution}x{dataset.resolution}")
    _write_manifest(out.parent, "dataset gen", asdict(config), config.seed,
                    [out], started)
    return EXIT_OK


def cmd_dataset_inspect(args):
    dataset = VideoDataset.load(args.path)
    w = SequenceWindowing(args.t_in, args.t_out, args.stride)
    total = sum(count_windows(n, w) for n in dataset.lengths)
    skipped = sum(1 for n in dataset.lengths if count_windows(n, w) == 0)
    print(json.dumps(dataset.manifest, indent=2, sort_keys=True))
    print(f"videos: {dataset.num_videos}")
    print(f"resolution: {dataset.resolution} channels: {dataset.channels}")
    print(f"windowing (t_in={w.t_in}, t_out={w.t_out}, stride={w.stride}): "
          f"{total} sequences, {skipped} videos too short")
    return EXIT_OK


def _assemble_train_config(args):
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    explicit = args.config is not None
    for flag, key in [("final_resolution", "final_resolution"), ("seed", "seed"),
                      ("batch_size", "batch_size_base"),
                      ("base_feature_maps", "base_feature_maps"),
                      ("t_in", "t_in"), ("t_out", "t_out")]:
        v = getattr(args, flag)
        if v is not None:
            setattr(config, key, v)
            explicit = True
    if args.epochs:
        parts = [int(p) for p in args.epochs.split(",")]
        if len(parts) != 3:
            raise ValidationError("--epochs expects 'transition,stabilization,final'")
        config.epochs_transition, config.epochs_stabilization, config.epochs_final_extra = parts
        explicit = True
    return config, explicit


def cmd_train(args):
    started = time.time()
    out_dir = Path(args.out_dir) if args.out_dir else _default_out("train")
    out_dir.mkdir(parents=True, exist_ok=True)
    config, explicit = _assemble_train_config(args)
    dataset = VideoDataset.load(args.dataset)
    sequences = window_sequences(dataset, SequenceWindowing(config.t_in, config.t_out))
    if args.resume:
        trainer = Trainer.resume(args.resume, sequences, out_dir=out_dir,
                                 config=config if explicit else None)
        config = trainer.config
        records = trainer.run(max_steps=args.max_steps)
    else:
        trainer, records = run_training(config, sequences, out_dir=out_dir,
                                        max_steps=args.max_steps)
    final = out_dir / "checkpoints" / "final.ckpt"
    trainer.save(final)
    config_out = out_dir / "train_config.cfg"
    config.to_file(config_out)
    artifacts = [out_dir / "training_log.jsonl", config_out]
    artifacts += sorted((out_dir / "checkpoints").glob("*.ckpt"))
    print(f"trained {len(records)} steps "
          f"(resolution {trainer.generator.resolution}, "
          f"{'finished' if trainer.finished else 'stopped early'}); "
          f"checkpoints in {out_dir / 'checkpoints'}")
    _write_manifest(out_dir, "train", asdict(config), config.seed, artifacts, started)
    return EXIT_OK


def cmd_predict(args):
    started = time.time()
    out_dir = Path(args.out_dir) if args.out_dir else _default_out("predict")
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = VideoDataset.load(args.input)
    generator, config = load_generator(args.checkpoint)
    res = generator.resolution
    if dataset.resolution < res:
        raise ValidationError(
            f"input resolution {dataset.resolution} below network resolution {res}")
    video = downsample_to_resolution(dataset.video(args.index), res)
    if video.shape[1] < config.t_in:
        raise DimensionError(f"video {args.index} has {video.shape[1]} frames; "
                             f"need at least t_in={config.t_in}")
    z = video[:, :config.t_in]
    steps = args.steps if args.steps else config.t_out
    result = long_term_predict(generator_predictor(generator), z, steps,
                               config.t_in, config.t_out)
    if not result.completed:
        raise TrainingFault(f"prediction failed after {result.passes} passes: {result.error}")
    u8 = _frames_to_uint8(result.frames)
    artifacts = _save_frames(u8, out_dir, "frame")
    artifacts.append(_save_gif(u8, out_dir / "prediction.gif"))
    artifacts.append(_save_strip(u8, out_dir / "strip.png"))
    print(f"predicted {result.frames.shape[1]} frames in {result.passes} passes "
          f"-> {out_dir}")
    _write_manifest(out_dir, "predict", asdict(config), config.seed, artifacts, started)
    return EXIT_OK


def cmd_evaluate(args):
    started = time.time()
    if not args.checkpoint and not args.baseline:
        raise ValidationError("nothing to evaluate: give --checkpoint and/or --baseline")
    out_dir = Path(args.out) if args.out else _default_out("evaluate")
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = VideoDataset.load(args.dataset)

    generator = None
    if args.checkpoint:
        generator, config = load_generator(args.checkpoint)
        res = generator.resolution
        t_in, t_out = config.t_in, config.t_out
    else:
        t_in, t_out = args.t_in, args.t_out
        res = dataset.resolution
    sequences = window_sequences(dataset, SequenceWindowing(t_in, t_out))

    def eval_at_resolution(predictor, model_id):
        scaled_set = _ResolutionView(sequences, res)
        return evaluate(predictor, scaled_set,
                        metadata={"model_id": model_id, "resolution": res,
                                  "dataset_id": dataset.manifest.get("kind", "unknown")})

    reports, artifacts = [], []
    if generator is not None:
        report = eval_at_resolution(generator_predictor(generator), "model")
        reports.append(report)
    baseline_report = None
    if args.baseline:
        baseline_report = eval_at_resolution(copylast_predictor(t_out), args.baseline)
        if generator is None:
            reports.append(baseline_report)
            baseline_report = None

    primary = reports[0]
    artifacts.append(out_dir / "report.json")
    primary.to_json(artifacts[-1])
    artifacts.append(out_dir / "report.csv")
    primary.to_csv(artifacts[-1])
    if baseline_report is not None:
        artifacts.append(out_dir / "baseline_report.json")
        baseline_report.to_json(artifacts[-1])
        artifacts.append(out_dir / "baseline_report.csv")
        baseline_report.to_csv(artifacts[-1])
    artifacts += _plot_curves(primary, baseline_report, out_dir)

    if args.long_term and generator is not None:
        from PIL import Image

        from .flow import flow_to_color, optical_flow

        z = downsample_to_resolution(sequences[0][0], res)
        result = long_term_predict(generator_predictor(generator), z,
                                   args.long_term, t_in, t_out)
        u8 = _frames_to_uint8(result.frames)
        artifacts.append(_save_gif(u8, out_dir / "longterm.gif"))
        artifacts.append(_save_strip(u8, out_dir / "longterm_strip.png"))
        # dense flow maps between consecutive rollout frames, colored by
        # angle (hue) and magnitude (value)
        flow_dir = out_dir / "flow"
        flow_dir.mkdir(exist_ok=True)
        gray = (np.clip(result.frames, -1.0, 1.0) + 1.0).mean(axis=0) * 127.5
        for i in range(gray.shape[0] - 1):
            rgb = flow_to_color(optical_flow(gray[i], gray[i + 1]))
            p = flow_dir / f"flow_{i:03d}.png"
            Image.fromarray(rgb).save(p)
            artifacts.append(p)

    a = primary.averaged
    print(f"{primary.metadata['model_id']}: MSE {a['mse']:.4f}  "
          f"PSNR {a['psnr_db']:.2f} dB  SSIM {a['ssim']:.4f} "
          f"({primary.metadata['sample_count']} sequences)")
    if baseline_report is not None:
        b = baseline_report.averaged
        print(f"{args.baseline}: MSE {b['mse']:.4f}  PSNR {b['psnr_db']:.2f} dB  "
              f"SSIM {b['ssim']:.4f}")
    seed = dataset.manifest.get("config", {}).get("seed")
    _write_manifest(out_dir, "evaluate", {"dataset": str(args.dataset)}, seed,
                    artifacts, started)
    return EXIT_OK


class _ResolutionView:
    """SequenceSet proxy serving windows downsampled to a fixed resolution."""

    def __init__(self, sequences, resolution):
        self._seq = sequences
        self._res = resolution
        self.windowing = sequences.windowing

    @property
    def dataset(self):
        return self._seq.dataset

    def __len__(self):
        return len(self._seq)

    def batch(self, indices):
        z, target = self._seq.batch(indices)
        return (downsample_to_resolution(z, self._res),
                downsample_to_resolution(target, self._res))


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="framecast",
        description="Video frame prediction with a progressively growing GAN.")
    parser.add_argument("--version", action="version", version=f"framecast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="generate or inspect dataset containers")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)

    gen = ds_sub.add_parser("gen", help="generate the synthetic bouncing-digit dataset")
    gen.add_argument("--out", help="output container path (.npz)")
    gen.add_argument("--videos", type=int, required=True,
                     help="number of videos [config key: num_videos]")
    gen.add_argument("--length", type=int, default=36,
                     help="frames per video [config key: video_length]")
    gen.add_argument("--canvas", type=int, default=64,
                     help="canvas size in px [config key: canvas]")
    gen.add_argument("--digits", type=int, default=2,
                     help="digits per video [config key: digits_per_video]")
    gen.add_argument("--speed-min", type=float, default=3.0,
                     help="min digit speed px/frame [config key: speed_min]")
    gen.add_argument("--speed-max", type=float, default=5.0,
                     help="max digit speed px/frame [config key: speed_max]")
    gen.add_argument("--seed", type=int, default=0,
                     help="generation seed [config key: seed]")
    gen.add_argument("--glyphs", help="optional .npz glyph source (glyphs, labels)")
    gen.set_defaults(func=cmd_dataset_gen)

    ins = ds_sub.add_parser("inspect", help="print a container's manifest and window counts")
    ins.add_argument("--path", required=True, help="dataset container path")
    ins.add_argument("--t-in", type=int, default=6, dest="t_in",
                     help="conditioning frames [config key: t_in]")
    ins.add_argument("--t-out", type=int, default=6, dest="t_out",
                     help="predicted frames [config key: t_out]")
    ins.add_argument("--stride", type=int, default=None,
                     help="window stride, default t_in+t_out [config key: stride]")
    ins.set_defaults(func=cmd_dataset_inspect)

    tr = sub.add_parser("train", help="run progressive training")
    tr.add_argument("--dataset", required=True, help="dataset container path")
    tr.add_argument("--config", help="flat key = value config file")
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.add_argument("--final-resolution", type=int, dest="final_resolution",
                    help="target resolution [config key: final_resolution]")
    tr.add_argument("--seed", type=int, help="training seed [config key: seed]")
    tr.add_argument("--out-dir", dest="out_dir", help="run output directory")
    tr.add_argument("--epochs", help="transition,stabilization,final epoch counts "
                    "[config keys: epochs_transition, epochs_stabilization, "
                    "epochs_final_extra]")
    tr.add_argument("--batch-size", type=int, dest="batch_size",
                    help="batch at base resolution, halved per level "
                    "[config key: batch_size_base]")
    tr.add_argument("--base-feature-maps", type=int, dest="base_feature_maps",
                    help="feature maps of the base layers [config key: base_feature_maps]")
    tr.add_argument("--t-in", type=int, dest="t_in",
                    help="conditioning frames [config key: t_in]")
    tr.add_argument("--t-out", type=int, dest="t_out",
                    help="predicted frames [config key: t_out]")
    tr.add_argument("--max-steps", type=int, dest="max_steps",
                    help="stop after N iterations (testing aid)")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict future frames from a checkpoint")
    pr.add_argument("--checkpoint", required=True, help="trained checkpoint path")
    pr.add_argument("--input", required=True, help="dataset container with input frames")
    pr.add_argument("--index", type=int, default=0, help="video index in the container")
    pr.add_argument("--steps", type=int, help="frames to predict; beyond t_out "
                    "predictions are fed back in recursively")
    pr.add_argument("--out-dir", dest="out_dir", help="output directory")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="compute per-frame MSE/PSNR/SSIM on a test split")
    ev.add_argument("--checkpoint", help="trained checkpoint path")
    ev.add_argument("--dataset", required=True, help="dataset container path")
    ev.add_argument("--baseline", choices=["copylast"],
                    help="also evaluate a baseline curve")
    ev.add_argument("--long-term", type=int, dest="long_term",
                    help="also roll out N frames recursively")
    ev.add_argument("--t-in", type=int, default=6, dest="t_in",
                    help="conditioning frames when no checkpoint [config key: t_in]")
    ev.add_argument("--t-out", type=int, default=6, dest="t_out",
                    help="predicted frames when no checkpoint [config key: t_out]")
    ev.add_argument("--out", help="output directory")
    ev.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigConflictError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingFault as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ValidationError, DatasetError, GlyphSourceError, DimensionError,
            CheckpointError, FramecastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
