"""Frame-record ingestion, quality filtering, resampling, windowing and splits.

Input files are UTF-8, line-delimited JSON with one object per frame and
angles in degrees; everything in memory is radians. The pipeline stages
compose as: ingest -> filter_videos -> resample -> window -> split_by_subject,
with normalization statistics computed on the training split only.

Frames inside a kept video that are individually unusable (detection
failure or face_count != 1, at a rate below the filter threshold) split
the resampled sequence into independent runs; windows never span such a
gap, so no pose values are ever invented.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError
from .types import (
    AngularPose,
    MotionKind,
    MotionSequence,
    MotionWindow,
    ZERO_POSE,
)

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FrameRecord:
    """One video frame's gaze/head angles plus quality flags."""

    video_id: str
    subject_id: str
    frame_index: int
    gaze: AngularPose | None
    head: AngularPose | None
    face_count: int = 1
    glasses_flag: bool = False
    scene_cut_flag: bool = False

    @property
    def usable(self) -> bool:
        return self.face_count == 1 and self.gaze is not None and self.head is not None


@dataclass(frozen=True)
class FilterPolicy:
    """Video-level quality filtering knobs.

    scene_cut_policy "split" cuts a video into independent segments at cut
    boundaries; "drop" discards the whole video, reproducing the strict
    filtering behaviour.
    """

    max_bad_frame_fraction: float = 0.10
    scene_cut_policy: str = "split"

    def __post_init__(self):
        if not 0.0 <= self.max_bad_frame_fraction <= 1.0:
            raise ConfigurationError(
                f"max_bad_frame_fraction must be in [0, 1], got {self.max_bad_frame_fraction}"
            )
        if self.scene_cut_policy not in ("split", "drop"):
            raise ConfigurationError(
                f"scene_cut_policy must be 'split' or 'drop', got {self.scene_cut_policy!r}"
            )


@dataclass(frozen=True)
class Rejection:
    video_id: str
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class NormStats:
    """Per-dimension z-score statistics in radians.

    Dimension order is (gaze-pitch, gaze-yaw, head-pitch, head-yaw).
    Standard deviations are population (ddof=0); zero-variance dimensions
    fall back to std=1 with a warning.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(4)
        std = np.array(self.std, dtype=float).reshape(4)
        if not (np.isfinite(mean).all() and np.isfinite(std).all()):
            raise ValueError("normalization stats must be finite")
        if (std <= 0).any():
            raise ValueError("normalization std must be positive in every dimension")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def _slice(self, kind: MotionKind) -> slice:
        return slice(0, 2) if MotionKind(kind) == MotionKind.GAZE else slice(2, 4)

    def normalize(self, angles: np.ndarray, kind: MotionKind) -> np.ndarray:
        s = self._slice(kind)
        return (np.asarray(angles, dtype=float) - self.mean[s]) / self.std[s]

    def denormalize(self, normalized: np.ndarray, kind: MotionKind) -> np.ndarray:
        s = self._slice(kind)
        return np.asarray(normalized, dtype=float) * self.std[s] + self.mean[s]

    def to_dict(self) -> dict:
        return {
            "mean_deg": np.degrees(self.mean).tolist(),
            "std_deg": np.degrees(self.std).tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NormStats":
        return cls(
            mean=np.radians(np.array(payload["mean_deg"], dtype=float)),
            std=np.radians(np.array(payload["std_deg"], dtype=float)),
        )


@dataclass
class DatasetManifest:
    """A split's windows plus the bookkeeping needed to train or evaluate on them."""

    split: str
    windows: list[MotionWindow] = field(default_factory=list)
    source_fps: float = 25.0
    model_fps: float = 5.0
    normalization: NormStats | None = None

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")
        resample_stride(self.source_fps, self.model_fps)

    @property
    def subject_ids(self) -> set[str]:
        return {w.subject_id for w in self.windows}


# ---------------------------------------------------------------------------
# ingest

_POSE_KEYS = {"pitch", "yaw"}
_REQUIRED_KEYS = {
    "video_id",
    "subject_id",
    "frame_index",
    "gaze",
    "head",
    "face_count",
    "glasses_flag",
    "scene_cut_flag",
}


def _parse_pose(value, line_number: int, name: str) -> AngularPose | None:
    if value is None:
        return None
    if not isinstance(value, dict) or not _POSE_KEYS.issubset(value):
        raise ParseError(f"field {name!r} must be null or an object with pitch/yaw", line_number)
    try:
        pitch = math.radians(float(value["pitch"]))
        yaw = math.radians(float(value["yaw"]))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field {name!r} has non-numeric angles: {exc}", line_number) from None
    if not (math.isfinite(pitch) and math.isfinite(yaw)):
        raise ParseError(f"field {name!r} has non-finite angles", line_number)
    return AngularPose(pitch, yaw)


def parse_frame_record(obj: dict, line_number: int = 0) -> FrameRecord:
    missing = _REQUIRED_KEYS - obj.keys()
    if missing:
        raise ParseError(f"missing fields {sorted(missing)}", line_number)
    frame_index = obj["frame_index"]
    if not isinstance(frame_index, int) or frame_index < 0:
        raise ParseError(f"frame_index must be a non-negative integer, got {frame_index!r}", line_number)
    face_count = obj["face_count"]
    if not isinstance(face_count, int) or face_count < 0:
        raise ParseError(f"face_count must be a non-negative integer, got {face_count!r}", line_number)
    return FrameRecord(
        video_id=str(obj["video_id"]),
        subject_id=str(obj["subject_id"]),
        frame_index=frame_index,
        gaze=_parse_pose(obj["gaze"], line_number, "gaze"),
        head=_parse_pose(obj["head"], line_number, "head"),
        face_count=face_count,
        glasses_flag=bool(obj["glasses_flag"]),
        scene_cut_flag=bool(obj["scene_cut_flag"]),
    )


def frame_record_to_dict(record: FrameRecord, **extra) -> dict:
    def pose_dict(pose):
        if pose is None:
            return None
        return {"pitch": math.degrees(pose.pitch), "yaw": math.degrees(pose.yaw)}

    payload = {
        "video_id": record.video_id,
        "subject_id": record.subject_id,
        "frame_index": record.frame_index,
        "gaze": pose_dict(record.gaze),
        "head": pose_dict(record.head),
        "face_count": record.face_count,
        "glasses_flag": record.glasses_flag,
        "scene_cut_flag": record.scene_cut_flag,
    }
    payload.update(extra)
    return payload


def ingest(lines) -> list[list[FrameRecord]]:
    """Parse line-delimited frame records into per-video sequences.

    Videos may be interleaved; each video's records must appear with
    strictly increasing frame_index. Returns one record list per video in
    order of first appearance.
    """
    by_video: dict[str, list[FrameRecord]] = {}
    for line_number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line_number) from None
        if not isinstance(obj, dict):
            raise ParseError("record must be a JSON object", line_number)
        record = parse_frame_record(obj, line_number)
        seq = by_video.setdefault(record.video_id, [])
        if seq:
            last = seq[-1].frame_index
            if record.frame_index == last:
                raise ValidationError(
                    f"video {record.video_id!r}: duplicate frame_index {record.frame_index}"
                )
            if record.frame_index < last:
                raise ValidationError(
                    f"video {record.video_id!r}: frame_index {record.frame_index} out of order"
                )
        seq.append(record)
    return list(by_video.values())


def read_frame_records(path) -> list[list[FrameRecord]]:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest(fh)


def write_frame_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(frame_record_to_dict(record), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# filtering

def _bad_fraction(seq: list[FrameRecord]) -> float:
    bad = sum(1 for r in seq if not r.usable)
    return bad / len(seq)


def _split_at_cuts(seq: list[FrameRecord]) -> list[list[FrameRecord]]:
    """Split a video at scene-cut frames; each cut frame starts a new segment."""
    segments, current = [], []
    for record in seq:
        if record.scene_cut_flag and current:
            segments.append(current)
            current = []
        current.append(record)
    if current:
        segments.append(current)
    if len(segments) == 1:
        return segments
    renamed = []
    for k, segment in enumerate(segments):
        vid = f"{segment[0].video_id}#seg{k}"
        renamed.append([
            FrameRecord(
                video_id=vid,
                subject_id=r.subject_id,
                frame_index=r.frame_index,
                gaze=r.gaze,
                head=r.head,
                face_count=r.face_count,
                glasses_flag=r.glasses_flag,
                scene_cut_flag=False,
            )
            for r in segment
        ])
    return renamed


def filter_videos(
    videos: list[list[FrameRecord]], policy: FilterPolicy | None = None
) -> tuple[list[list[FrameRecord]], list[Rejection]]:
    """Apply the three quality rules: eyewear, scene cuts, detection failures.

    Returns (kept videos or segments, rejection log). Filtering each video
    is independent of the others, so permuting the input permutes but never
    changes the kept set.
    """
    policy = policy or FilterPolicy()
    kept: list[list[FrameRecord]] = []
    rejections: list[Rejection] = []
    for seq in videos:
        if not seq:
            continue
        video_id = seq[0].video_id
        if any(r.glasses_flag for r in seq):
            rejections.append(Rejection(video_id, "eyewear", "glasses detected"))
            continue
        if any(r.scene_cut_flag for r in seq):
            if policy.scene_cut_policy == "drop":
                rejections.append(Rejection(video_id, "scene_cuts", "scene cut detected"))
                continue
            segments = _split_at_cuts(seq)
        else:
            segments = [seq]
        for segment in segments:
            fraction = _bad_fraction(segment)
            if fraction > policy.max_bad_frame_fraction:
                rejections.append(
                    Rejection(
                        segment[0].video_id,
                        "detection_failures",
                        f"bad frame fraction {fraction:.3f}",
                    )
                )
            else:
                kept.append(segment)
    return kept, rejections


def write_rejections(rejections: list[Rejection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejections:
            fh.write(json.dumps({"video_id": r.video_id, "rule": r.rule, "detail": r.detail}) + "\n")


# ---------------------------------------------------------------------------
# resampling and windowing

def resample_stride(source_fps: float, model_fps: float) -> int:
    if source_fps <= 0 or model_fps <= 0:
        raise ConfigurationError("frame rates must be positive")
    ratio = Fraction(source_fps).limit_denominator(10**6) / Fraction(model_fps).limit_denominator(10**6)
    if ratio.denominator != 1 or ratio.numerator < 1:
        raise ConfigurationError(
            f"model fps {model_fps} must divide source fps {source_fps} evenly"
        )
    return int(ratio)


def resample(seq: list[FrameRecord], source_fps: float, model_fps: float) -> list[FrameRecord]:
    """Keep every stride-th frame starting from position 0 (no filtering)."""
    stride = resample_stride(source_fps, model_fps)
    return seq[::stride]


def usable_runs(seq: list[FrameRecord]) -> list[list[FrameRecord]]:
    """Maximal runs of consecutive usable frames."""
    runs, current = [], []
    for record in seq:
        if record.usable:
            current.append(record)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)
    return runs


def window(seq: list[FrameRecord], num_frames: int, model_fps: float = 5.0) -> list[MotionWindow]:
    """Chop a resampled, fully usable sequence into non-overlapping windows.

    Window k>0 carries the last two real head poses of window k-1 as
    context; window 0 carries zero context. The trailing remainder is
    discarded. A sequence shorter than ``num_frames`` yields no windows.
    """
    if num_frames < 3:
        raise ConfigurationError(f"window length must be >= 3, got {num_frames}")
    for record in seq:
        if not record.usable:
            raise ValidationError(
                f"video {record.video_id!r}: frame {record.frame_index} is not usable for windowing"
            )
    windows: list[MotionWindow] = []
    total = (len(seq) // num_frames) * num_frames
    prev_head: MotionSequence | None = None
    for start in range(0, total, num_frames):
        chunk = seq[start : start + num_frames]
        gaze = MotionSequence(
            np.array([[r.gaze.pitch, r.gaze.yaw] for r in chunk]), model_fps, MotionKind.GAZE
        )
        head = MotionSequence(
            np.array([[r.head.pitch, r.head.yaw] for r in chunk]), model_fps, MotionKind.HEAD
        )
        if prev_head is None:
            context = (ZERO_POSE, ZERO_POSE)
            has_context = False
        else:
            context = (prev_head[num_frames - 2], prev_head[num_frames - 1])
            has_context = True
        windows.append(
            MotionWindow(
                gaze=gaze,
                head=head,
                context=context,
                has_context=has_context,
                video_id=chunk[0].video_id,
                subject_id=chunk[0].subject_id,
                start_frame=chunk[0].frame_index,
            )
        )
        prev_head = head
    return windows


# ---------------------------------------------------------------------------
# splitting and normalization

def split_by_subject(
    windows: list[MotionWindow],
    test_fraction: float,
    seed: int,
    source_fps: float = 25.0,
    model_fps: float = 5.0,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Assign whole subjects to train or test, deterministically given seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if any(not w.subject_id for w in windows):
        raise ValidationError("every window must carry a subject_id")
    subjects = sorted({w.subject_id for w in windows})
    if len(subjects) < 2:
        raise ConfigurationError(f"need at least 2 subjects to split, got {len(subjects)}")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n_test = int(round(len(subjects) * test_fraction))
    n_test = min(max(n_test, 1), len(subjects) - 1)
    test_subjects = set(order[:n_test])
    train = DatasetManifest(
        split="train",
        windows=[w for w in windows if w.subject_id not in test_subjects],
        source_fps=source_fps,
        model_fps=model_fps,
    )
    test = DatasetManifest(
        split="test",
        windows=[w for w in windows if w.subject_id in test_subjects],
        source_fps=source_fps,
        model_fps=model_fps,
    )
    return train, test


def compute_norm_stats(windows: list[MotionWindow]) -> NormStats:
    """Per-dimension mean/std over all frames of the given (training) windows."""
    if not windows:
        raise ValidationError("cannot compute normalization stats from zero windows")
    gaze = np.concatenate([w.gaze.angles for w in windows])
    head = np.concatenate([w.head.angles for w in windows if w.head is not None])
    if len(head) != len(gaze):
        raise ValidationError("all windows need head sequences to compute normalization stats")
    stacked = np.concatenate([gaze, head], axis=1)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    if (std == 0).any():
        warnings.warn("zero-variance dimension in training data; using std=1", stacklevel=2)
        std = np.where(std == 0, 1.0, std)
    return NormStats(mean=mean, std=std)


# ---------------------------------------------------------------------------
# manifest serialization

def _window_to_dict(w: MotionWindow) -> dict:
    payload = {
        "video_id": w.video_id,
        "subject_id": w.subject_id,
        "start_frame": w.start_frame,
        "has_context": w.has_context,
        "context": np.degrees(w.context_array).tolist(),
        "gaze": np.degrees(w.gaze.angles).tolist(),
    }
    if w.head is not None:
        payload["head"] = np.degrees(w.head.angles).tolist()
    return payload


def _window_from_dict(obj: dict, model_fps: float) -> MotionWindow:
    gaze = MotionSequence(np.radians(np.array(obj["gaze"], dtype=float)), model_fps, MotionKind.GAZE)
    head = None
    if obj.get("head") is not None:
        head = MotionSequence(np.radians(np.array(obj["head"], dtype=float)), model_fps, MotionKind.HEAD)
    context_arr = np.radians(np.array(obj["context"], dtype=float))
    context = (
        AngularPose(float(context_arr[0, 0]), float(context_arr[0, 1])),
        AngularPose(float(context_arr[1, 0]), float(context_arr[1, 1])),
    )
    return MotionWindow(
        gaze=gaze,
        head=head,
        context=context,
        has_context=bool(obj["has_context"]),
        video_id=str(obj["video_id"]),
        subject_id=str(obj["subject_id"]),
        start_frame=int(obj["start_frame"]),
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    header = {
        "kind": "manifest",
        "format_version": MANIFEST_FORMAT_VERSION,
        "split": manifest.split,
        "source_fps": manifest.source_fps,
        "model_fps": manifest.model_fps,
        "normalization": manifest.normalization.to_dict() if manifest.normalization else None,
        "num_windows": len(manifest.windows),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for w in manifest.windows:
            fh.write(json.dumps(_window_to_dict(w), sort_keys=True) + "\n")


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in (raw.strip() for raw in fh) if line]
    if not lines:
        raise ParseError("empty manifest file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", 1) from None
    if not isinstance(header, dict) or header.get("kind") != "manifest":
        raise ParseError("first line is not a manifest header", 1)
    if header.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ParseError(
            f"unsupported manifest format_version {header.get('format_version')!r}", 1
        )
    model_fps = float(header["model_fps"])
    windows = []
    for line_number, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line_number) from None
        windows.append(_window_from_dict(obj, model_fps))
    normalization = None
    if header.get("normalization") is not None:
        normalization = NormStats.from_dict(header["normalization"])
    return DatasetManifest(
        split=header["split"],
        windows=windows,
        source_fps=float(header["source_fps"]),
        model_fps=model_fps,
        normalization=normalization,
    )


def is_manifest_file(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                return False
            return isinstance(obj, dict) and obj.get("kind") == "manifest"
    return False


# ---------------------------------------------------------------------------
# end-to-end preparation

def prepare(
    videos: list[list[FrameRecord]],
    *,
    source_fps: float = 25.0,
    model_fps: float = 5.0,
    window_frames: int = 12,
    test_fraction: float = 0.1,
    seed: int = 0,
    policy: FilterPolicy | None = None,
) -> tuple[DatasetManifest, DatasetManifest, list[Rejection]]:
    """Run the full preparation pipeline on ingested videos."""
    kept, rejections = filter_videos(videos, policy)
    windows: list[MotionWindow] = []
    for seq in kept:
        resampled = resample(seq, source_fps, model_fps)
        for run in usable_runs(resampled):
            windows.extend(window(run, window_frames, model_fps))
    if not windows:
        raise ValidationError("no usable windows after filtering and windowing")
    train, test = split_by_subject(
        windows, test_fraction, seed, source_fps=source_fps, model_fps=model_fps
    )
    stats = compute_norm_stats(train.windows)
    train.normalization = stats
    test.normalization = stats
    return train, test, rejections
