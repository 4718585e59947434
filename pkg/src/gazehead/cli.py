"""Command-line interface wiring the pipeline end to end.

Subcommands: synth, prepare, train, generate, evaluate, plot. Every value
can come from a config file of flat dotted keys (``train.steps = 4000``),
overridden by command-line flags; each run writes a reproducibility record
(resolved config, seed, tool version) beside its outputs. Logs go to
stderr, data to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigurationError, GazeHeadError, ValidationError
from .generation import (
    GenerationMethod,
    constant_head_baseline,
    generate_diverse,
    mirror_gaze_baseline,
)
from .metrics import EvalItem, evaluate, read_report_csv, write_report_csv
from .model import CHECKPOINT_FORMAT_VERSION, HeadMotionCVAE
from .pipeline import (
    DatasetManifest,
    FilterPolicy,
    FrameRecord,
    frame_record_to_dict,
    is_manifest_file,
    load_manifest,
    prepare,
    read_frame_records,
    save_manifest,
    write_frame_records,
    write_rejections,
)
from .synthetic import OracleParams, dataset_records
from .types import AngularPose, MotionKind, MotionSequence, concat_sequences

logger = logging.getLogger(__name__)

_SUBCOMMANDS = ("synth", "prepare", "train", "generate", "evaluate", "plot")


def _bool_flag(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {value!r}")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazehead",
        description="Learn and generate gaze-conditioned head motion sequences.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"gazehead {__version__} (checkpoint format {CHECKPOINT_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="config file with flat dotted keys")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--log-level", default="info")

    p = sub.add_parser("synth", help="generate a synthetic gaze/head dataset")
    common(p)
    p.add_argument("--out", default=None, help="output frame-record file (.jsonl)")
    p.add_argument("--sequences", type=int, default=200)
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--fps", type=float, default=5.0)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--gain-mean", type=float, default=0.6)
    p.add_argument("--gain-std", type=float, default=0.1)
    p.add_argument("--lag", type=float, default=0.5)
    p.add_argument("--bias-std", type=float, default=5.0, help="degrees")
    p.add_argument("--noise-std", type=float, default=0.3, help="degrees")
    p.add_argument("--fixation-min", type=float, default=0.6, help="seconds")
    p.add_argument("--fixation-max", type=float, default=1.6, help="seconds")
    p.add_argument("--saccade-min", type=float, default=8.6, help="degrees")
    p.add_argument("--saccade-max", type=float, default=28.6, help="degrees")

    p = sub.add_parser("prepare", help="filter, resample, window and split frame records")
    common(p)
    p.add_argument("--input", default=None, help="frame-record file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--source-fps", type=float, default=25.0)
    p.add_argument("--model-fps", type=float, default=5.0)
    p.add_argument("--window", type=int, default=12)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--max-bad-frames", type=float, default=0.10)
    p.add_argument("--scene-cut-policy", choices=("split", "drop"), default="split")

    p = sub.add_parser("train", help="train the head motion model on a manifest")
    common(p)
    p.add_argument("--manifest", default=None, help="training manifest file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--steps", type=int, default=60_000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--latent-dim", type=int, default=128)
    p.add_argument("--encoder-hidden", type=int, default=256)
    p.add_argument("--decoder-hidden", type=int, default=256)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=5e-5)
    p.add_argument("--kl-weight-max", type=float, default=0.1)
    p.add_argument("--kl-anneal-steps", type=int, default=12_000)
    p.add_argument("--context-dropout", type=float, default=0.5)
    p.add_argument("--feature-dropout", type=float, default=0.1)
    p.add_argument("--temporal-modeling", type=_bool_flag, default=True)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = sub.add_parser("generate", help="generate head motion for gaze inputs")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--gaze", default=None, help="frame-record file or manifest")
    p.add_argument("--k", type=int, default=30)
    p.add_argument(
        "--method",
        choices=("cvae", "no-temporal", "constant", "mirror"),
        default="cvae",
    )
    p.add_argument("--out", default=None, help="output record file (.jsonl)")

    p = sub.add_parser("evaluate", help="score generated outputs against a test manifest")
    common(p)
    p.add_argument("--manifest", default=None, help="test manifest file")
    p.add_argument("--generated", default=None, help="generated record file or directory")
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--out", default=None, help="report CSV path")

    p = sub.add_parser("plot", help="plot metric comparisons and sample trajectories")
    common(p)
    p.add_argument("--report", default=None, help="report CSV from evaluate")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--manifest", default=None, help="optional manifest for trajectories")
    p.add_argument("--generated", default=None, help="optional generated record file")
    p.add_argument("--max-inputs", type=int, default=4)

    return parser


# ---------------------------------------------------------------------------
# config file

def load_config_file(path, command: str, parser: argparse.ArgumentParser) -> dict:
    """Flat dotted-key config: ``<subcommand>.<flag> = value``.

    Returns the overrides for ``command``; keys for other subcommands are
    ignored so one file can configure a whole pipeline. Unknown keys are
    rejected.
    """
    known = _known_dests(parser)
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{line_number}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if "." not in key:
                raise ConfigurationError(f"{path}:{line_number}: key {key!r} must be <subcommand>.<flag>")
            section, _, name = key.partition(".")
            dest = name.strip().replace("-", "_")
            if section not in _SUBCOMMANDS or dest not in known.get(section, set()):
                raise ConfigurationError(f"{path}:{line_number}: unknown config key {key!r}")
            if section != command:
                continue
            text = value.strip()
            try:
                overrides[dest] = json.loads(text)
            except json.JSONDecodeError:
                overrides[dest] = text
    return overrides


def _known_dests(parser: argparse.ArgumentParser) -> dict[str, set[str]]:
    dests: dict[str, set[str]] = {}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, sub in action.choices.items():
                dests[name] = {
                    a.dest for a in sub._actions if a.dest not in ("help", "config")
                }
    return dests


def _resolved_config(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_run_record(args: argparse.Namespace, record_path) -> None:
    payload = {
        "tool": "gazehead",
        "version": __version__,
        "checkpoint_format_version": CHECKPOINT_FORMAT_VERSION,
        "subcommand": args.command,
        "seed": getattr(args, "seed", None),
        "resolved_config": _resolved_config(args),
    }
    with open(record_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise ConfigurationError(f"--{name.replace('_', '-')} is required for {args.command}")


# ---------------------------------------------------------------------------
# shared input loading

def _load_gaze_inputs(path, default_fps: float = 5.0):
    """Per-video (gaze, head-or-None, frame_indices, subject_id) from records or a manifest.

    Plain record files are assumed to already be at the model frame rate
    (``default_fps``); no resampling happens here.
    """
    inputs = []
    if is_manifest_file(path):
        manifest = load_manifest(path)
        for video_id, gaze, head in manifest_sequences(manifest):
            indices = list(range(len(gaze)))
            subject = next(w.subject_id for w in manifest.windows if w.video_id == video_id)
            inputs.append((video_id, gaze, head, indices, subject))
        return inputs
    videos = read_frame_records(path)
    for seq in videos:
        if any(r.gaze is None for r in seq):
            raise ValidationError(f"video {seq[0].video_id!r}: gaze missing on some frames")
        gaze = MotionSequence(
            np.array([[r.gaze.pitch, r.gaze.yaw] for r in seq]), default_fps, MotionKind.GAZE
        )
        head = None
        if all(r.head is not None for r in seq):
            head = MotionSequence(
                np.array([[r.head.pitch, r.head.yaw] for r in seq]), default_fps, MotionKind.HEAD
            )
        indices = [r.frame_index for r in seq]
        inputs.append((seq[0].video_id, gaze, head, indices, seq[0].subject_id))
    return inputs


def manifest_sequences(manifest: DatasetManifest):
    """Reconstruct per-video (gaze, head) sequences by concatenating windows."""
    by_video: dict[str, list] = {}
    for w in manifest.windows:
        by_video.setdefault(w.video_id, []).append(w)
    out = []
    for video_id in sorted(by_video):
        windows = sorted(by_video[video_id], key=lambda w: w.start_frame)
        gaze = concat_sequences([w.gaze for w in windows])
        head = None
        if all(w.head is not None for w in windows):
            head = concat_sequences([w.head for w in windows])
        out.append((video_id, gaze, head))
    return out


def _read_generated(path) -> dict[str, dict[int, list]]:
    """Generated records grouped as {video_id: {sample_index: [(frame, pitch, yaw)]}}."""
    grouped: dict[str, dict[int, list]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            obj = json.loads(line)
            head = obj.get("head")
            if head is None:
                raise ValidationError(f"{path}:{line_number}: generated record has no head pose")
            sample = int(obj.get("sample_index", 0))
            grouped.setdefault(str(obj["video_id"]), {}).setdefault(sample, []).append(
                (int(obj["frame_index"]), float(head["pitch"]), float(head["yaw"]))
            )
    return grouped


def _generated_sequences(grouped: dict[int, list], fps: float) -> list[MotionSequence]:
    sequences = []
    for sample in sorted(grouped):
        frames = sorted(grouped[sample])
        angles = np.radians(np.array([[p, y] for _, p, y in frames]))
        sequences.append(MotionSequence(angles, fps, MotionKind.HEAD))
    return sequences


# ---------------------------------------------------------------------------
# subcommands

def _run_synth(args) -> int:
    _require(args, "out")
    params = OracleParams(
        gain_mean=args.gain_mean,
        gain_std=args.gain_std,
        lag_alpha=args.lag,
        bias_std=math.radians(args.bias_std),
        noise_std=math.radians(args.noise_std),
        fixation_duration_range=(args.fixation_min, args.fixation_max),
        saccade_amplitude_range=(math.radians(args.saccade_min), math.radians(args.saccade_max)),
        seed=args.seed,
    )
    records = dataset_records(
        params, args.sequences, args.frames, args.fps, num_subjects=args.subjects
    )
    write_frame_records(records, args.out)
    logger.info("wrote %d records (%d sequences) to %s", len(records), args.sequences, args.out)
    _write_run_record(args, f"{args.out}.run.json")
    return 0


def _run_prepare(args) -> int:
    _require(args, "input", "out")
    os.makedirs(args.out, exist_ok=True)
    videos = read_frame_records(args.input)
    policy = FilterPolicy(
        max_bad_frame_fraction=args.max_bad_frames,
        scene_cut_policy=args.scene_cut_policy,
    )
    train_manifest, test_manifest, rejections = prepare(
        videos,
        source_fps=args.source_fps,
        model_fps=args.model_fps,
        window_frames=args.window,
        test_fraction=args.test_fraction,
        seed=args.seed,
        policy=policy,
    )
    save_manifest(train_manifest, os.path.join(args.out, "train_manifest.jsonl"))
    save_manifest(test_manifest, os.path.join(args.out, "test_manifest.jsonl"))
    write_rejections(rejections, os.path.join(args.out, "rejections.jsonl"))
    logger.info(
        "prepared %d train / %d test windows (%d rejected videos)",
        len(train_manifest.windows), len(test_manifest.windows), len(rejections),
    )
    _write_run_record(args, os.path.join(args.out, "prepare_run.json"))
    return 0


def _run_train(args) -> int:
    _require(args, "manifest", "out")
    os.makedirs(args.out, exist_ok=True)
    manifest = load_manifest(args.manifest)
    if not manifest.windows:
        raise ValidationError("training manifest has no windows")
    window_frames = manifest.windows[0].num_frames
    estimator = HeadMotionCVAE(
        window_frames=window_frames,
        latent_dim=args.latent_dim,
        model_fps=manifest.model_fps,
        encoder_hidden=args.encoder_hidden,
        decoder_hidden=args.decoder_hidden,
        feature_dim=args.feature_dim,
        kl_weight_max=args.kl_weight_max,
        kl_anneal_steps=args.kl_anneal_steps,
        context_dropout_prob=args.context_dropout,
        feature_dropout_prob=args.feature_dropout,
        batch_size=args.batch_size,
        train_steps=args.steps,
        learning_rate=args.learning_rate,
        temporal_modeling=args.temporal_modeling,
        seed=args.seed,
    )
    estimator.fit(
        manifest, checkpoint_every=args.checkpoint_every, checkpoint_dir=args.out
    )
    checkpoint_path = os.path.join(args.out, "checkpoint.pt")
    estimator.save(checkpoint_path)
    log_path = os.path.join(args.out, "training_log.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("step,total,reconstruction,kl,kl_weight\n")
        for entry in estimator.history_:
            fh.write(
                f"{entry['step']},{entry['total']:.6f},{entry['reconstruction']:.6f},"
                f"{entry['kl']:.6f},{entry['kl_weight']:.6f}\n"
            )
    logger.info("saved checkpoint to %s", checkpoint_path)
    _write_run_record(args, os.path.join(args.out, "train_run.json"))
    return 0


def _run_generate(args) -> int:
    _require(args, "gaze", "out")
    method = {
        "cvae": GenerationMethod.CVAE,
        "no-temporal": GenerationMethod.CVAE_NO_TEMPORAL,
        "constant": GenerationMethod.CONSTANT_HEAD,
        "mirror": GenerationMethod.MIRROR_GAZE,
    }[args.method]
    model = None
    if method in (GenerationMethod.CVAE, GenerationMethod.CVAE_NO_TEMPORAL):
        _require(args, "checkpoint")
        model = HeadMotionCVAE.load(args.checkpoint)
        wants_temporal = method == GenerationMethod.CVAE
        if model.config_.temporal_modeling != wants_temporal:
            raise ConfigurationError(
                f"checkpoint temporal_modeling={model.config_.temporal_modeling} does not "
                f"match method {args.method!r}"
            )
    default_fps = model.config_.model_fps if model is not None else 5.0
    inputs = _load_gaze_inputs(args.gaze, default_fps=default_fps)
    deterministic = method in (GenerationMethod.CONSTANT_HEAD, GenerationMethod.MIRROR_GAZE)
    k = 1 if deterministic else args.k
    if deterministic and args.k != 1:
        logger.info("method %s is deterministic; writing a single sample per input", args.method)
    lines_written = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for video_index, (video_id, gaze, head, indices, subject_id) in enumerate(inputs):
            if model is not None:
                window_frames = model.config_.window_frames
                if len(gaze) < window_frames:
                    logger.warning(
                        "skipping %s: %d frames is shorter than one window (%d)",
                        video_id, len(gaze), window_frames,
                    )
                    continue
                usable = (len(gaze) // window_frames) * window_frames
                if usable < len(gaze):
                    logger.info(
                        "%s: remainder of %d frames beyond the last full window not generated",
                        video_id, len(gaze) - usable,
                    )
                samples = generate_diverse(model, gaze, k, seed=(args.seed, video_index))
            elif method == GenerationMethod.CONSTANT_HEAD:
                initial = head[0] if head is not None else None
                samples = [constant_head_baseline(gaze, initial)]
            else:
                samples = [mirror_gaze_baseline(gaze)]
            for sample_index, sample in enumerate(samples):
                for t in range(len(sample)):
                    record = FrameRecord(
                        video_id=video_id,
                        subject_id=subject_id,
                        frame_index=indices[t],
                        gaze=None,
                        head=AngularPose(float(sample.angles[t, 0]), float(sample.angles[t, 1])),
                        face_count=1,
                    )
                    fh.write(
                        json.dumps(
                            frame_record_to_dict(record, sample_index=sample_index),
                            sort_keys=True,
                        )
                        + "\n"
                    )
                    lines_written += 1
    logger.info("wrote %d generated records to %s", lines_written, args.out)
    _write_run_record(args, f"{args.out}.run.json")
    return 0


def _run_evaluate(args) -> int:
    _require(args, "manifest", "generated", "out")
    manifest = load_manifest(args.manifest)
    real = {}
    for video_id, gaze, head in manifest_sequences(manifest):
        if head is None:
            raise ValidationError(f"manifest video {video_id!r} has no real head sequence")
        real[video_id] = head
    if os.path.isdir(args.generated):
        paths = sorted(
            os.path.join(args.generated, name)
            for name in os.listdir(args.generated)
            if name.endswith(".jsonl")
        )
    else:
        paths = [args.generated]
    if not paths:
        raise ValidationError(f"no generated .jsonl files found under {args.generated}")
    reports = []
    for path in paths:
        method = os.path.splitext(os.path.basename(path))[0]
        grouped = _read_generated(path)
        unknown = sorted(set(grouped) - set(real))
        if unknown:
            raise ValidationError(f"{path}: generated videos not in manifest: {unknown}")
        uncovered = sorted(set(real) - set(grouped))
        if uncovered:
            logger.warning(
                "%s: %d manifest videos have no generated samples (e.g. %s)",
                method, len(uncovered), uncovered[0],
            )
        items = []
        for video_id in sorted(grouped):
            samples = _generated_sequences(grouped[video_id], manifest.model_fps)
            items.append(EvalItem(video_id, real[video_id], samples))
        report = evaluate(items, method)
        if report.k not in (1, args.k):
            logger.warning(
                "%s: observed %d samples per input, expected %d", method, report.k, args.k
            )
        reports.append(report)
    write_report_csv(reports, args.out)
    logger.info("wrote report for %d method(s) to %s", len(reports), args.out)
    _write_run_record(args, f"{args.out}.run.json")
    return 0


def _run_plot(args) -> int:
    _require(args, "report", "out")
    from .plots import plot_metric_comparisons, plot_trajectories

    reports = read_report_csv(args.report)
    written = plot_metric_comparisons(reports, args.out)
    if args.manifest and args.generated:
        manifest = load_manifest(args.manifest)
        sequences = {vid: (gaze, head) for vid, gaze, head in manifest_sequences(manifest)}
        grouped = _read_generated(args.generated)
        for video_id in sorted(grouped)[: args.max_inputs]:
            gaze, head = sequences.get(video_id, (None, None))
            samples = _generated_sequences(grouped[video_id], manifest.model_fps)
            written += plot_trajectories(video_id, gaze, head, samples, args.out)
    logger.info("wrote %d plot artifacts to %s", len(written), args.out)
    _write_run_record(args, os.path.join(args.out, "plot_run.json"))
    return 0


_RUNNERS = {
    "synth": _run_synth,
    "prepare": _run_prepare,
    "train": _run_train,
    "generate": _run_generate,
    "evaluate": _run_evaluate,
    "plot": _run_plot,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.config:
            overrides = load_config_file(args.config, args.command, parser)
            # defaults must land on the subparser: it parses into a fresh
            # namespace, so top-level set_defaults would be overwritten
            for action in parser._actions:
                if isinstance(action, argparse._SubParsersAction):
                    action.choices[args.command].set_defaults(**overrides)
            args = parser.parse_args(argv)
        return _RUNNERS[args.command](args)
    except GazeHeadError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
