"""Shared data model for gaze/head angle sequences.

Angles are stored in radians throughout the package; file formats and
reports use degrees. A pose is a (pitch, yaw) pair: pitch rotates up/down
and is clamped to [-pi/2, pi/2], yaw rotates left/right and is wrapped to
(-pi, pi]. The matching direction vector convention is

    v = (cos(pitch) * sin(yaw), sin(pitch), cos(pitch) * cos(yaw))

i.e. yaw rotation about the vertical axis applied after pitch, with
(0, 0) looking straight down the +z axis. Any fixed convention yields the
same angular differences between pose pairs; this one is documented so
results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

HALF_PI = math.pi / 2.0
TWO_PI = 2.0 * math.pi


class MotionKind(str, Enum):
    GAZE = "gaze"
    HEAD = "head"


def wrap_yaw(yaw):
    """Wrap yaw angle(s) into (-pi, pi]. Exact no-op for in-range values."""
    arr = np.asarray(yaw, dtype=float)
    wrapped = np.mod(arr + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    out = np.where((arr > -math.pi) & (arr <= math.pi), arr, wrapped)
    if np.isscalar(yaw) or np.ndim(yaw) == 0:
        return float(out)
    return out


def clamp_pitch(pitch):
    """Clamp pitch angle(s) to [-pi/2, pi/2]. Works on scalars and arrays."""
    clamped = np.clip(np.asarray(pitch, dtype=float), -HALF_PI, HALF_PI)
    if np.isscalar(pitch) or np.ndim(pitch) == 0:
        return float(clamped)
    return clamped


@dataclass(frozen=True)
class AngularPose:
    """One gaze or head orientation as (pitch, yaw) in radians."""

    pitch: float
    yaw: float

    def __post_init__(self):
        if not (math.isfinite(self.pitch) and math.isfinite(self.yaw)):
            raise ValueError(f"pose angles must be finite, got {self.pitch!r}, {self.yaw!r}")
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "yaw", float(self.yaw))

    def __iter__(self):
        yield self.pitch
        yield self.yaw

    def is_canonical(self, tol: float = 0.0) -> bool:
        return (
            -HALF_PI - tol <= self.pitch <= HALF_PI + tol
            and -math.pi - tol < self.yaw <= math.pi + tol
        )


ZERO_POSE = AngularPose(0.0, 0.0)


def canonicalize(pose: AngularPose) -> AngularPose:
    """Clamp pitch to [-pi/2, pi/2] and wrap yaw into (-pi, pi]. Idempotent."""
    return AngularPose(clamp_pitch(pose.pitch), wrap_yaw(pose.yaw))


def canonicalize_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized canonicalization of an (..., 2) array of (pitch, yaw) radians."""
    angles = np.asarray(angles, dtype=float)
    out = np.empty_like(angles)
    out[..., 0] = clamp_pitch(angles[..., 0])
    out[..., 1] = wrap_yaw(angles[..., 1])
    return out


def to_direction_vector(pose: AngularPose) -> np.ndarray:
    """Unit 3-vector for a pose, per the module's pitch-then-yaw convention."""
    if not (math.isfinite(pose.pitch) and math.isfinite(pose.yaw)):
        raise ValueError("pose angles must be finite")
    return direction_vectors(np.array([[pose.pitch, pose.yaw]]))[0]


def direction_vectors(angles: np.ndarray) -> np.ndarray:
    """Unit 3-vectors for an (N, 2) array of (pitch, yaw) radians."""
    angles = np.asarray(angles, dtype=float)
    if not np.isfinite(angles).all():
        raise ValueError("pose angles must be finite")
    pitch, yaw = angles[..., 0], angles[..., 1]
    cos_pitch = np.cos(pitch)
    return np.stack(
        [cos_pitch * np.sin(yaw), np.sin(pitch), cos_pitch * np.cos(yaw)],
        axis=-1,
    )


@dataclass(frozen=True)
class MotionSequence:
    """An ordered pose sequence with its frame rate and stream kind.

    ``angles`` is an (N, 2) float64 array of (pitch, yaw) radians; it is
    canonicalized and frozen on construction, so instances are safe to
    share between threads.
    """

    angles: np.ndarray
    fps: float
    kind: MotionKind

    def __post_init__(self):
        angles = np.array(self.angles, dtype=float, copy=True)
        if angles.ndim != 2 or angles.shape[1] != 2:
            raise ValueError(f"angles must have shape (N, 2), got {angles.shape}")
        if len(angles) < 1:
            raise ValueError("a motion sequence needs at least one frame")
        if not np.isfinite(angles).all():
            raise ValueError("angles must be finite")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be positive, got {self.fps!r}")
        angles = canonicalize_angles(angles)
        angles.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "kind", MotionKind(self.kind))

    def __len__(self) -> int:
        return len(self.angles)

    def __getitem__(self, index: int) -> AngularPose:
        pitch, yaw = self.angles[index]
        return AngularPose(float(pitch), float(yaw))

    @property
    def frames(self) -> list[AngularPose]:
        return [AngularPose(float(p), float(y)) for p, y in self.angles]

    @property
    def pitch(self) -> np.ndarray:
        return self.angles[:, 0]

    @property
    def yaw(self) -> np.ndarray:
        return self.angles[:, 1]

    def slice(self, start: int, stop: int) -> "MotionSequence":
        return MotionSequence(self.angles[start:stop], self.fps, self.kind)


def concat_sequences(parts: list[MotionSequence]) -> MotionSequence:
    if not parts:
        raise ValueError("cannot concatenate zero sequences")
    fps, kind = parts[0].fps, parts[0].kind
    if any(p.fps != fps or p.kind != kind for p in parts):
        raise ValueError("sequences must share fps and kind")
    return MotionSequence(np.concatenate([p.angles for p in parts]), fps, kind)


@dataclass(frozen=True)
class MotionWindow:
    """One T-frame training/inference unit.

    ``context`` holds the last two head poses of the preceding window
    (c1, c2); windows with no predecessor carry zero poses and
    ``has_context=False``. ``head`` is None at inference time.
    """

    gaze: MotionSequence
    head: MotionSequence | None
    context: tuple[AngularPose, AngularPose] = (ZERO_POSE, ZERO_POSE)
    has_context: bool = False
    video_id: str = ""
    subject_id: str = ""
    start_frame: int = 0

    def __post_init__(self):
        if self.gaze.kind != MotionKind.GAZE:
            raise ValueError("window gaze sequence must have kind=gaze")
        if self.head is not None:
            if self.head.kind != MotionKind.HEAD:
                raise ValueError("window head sequence must have kind=head")
            if len(self.head) != len(self.gaze):
                raise ValueError(
                    f"gaze/head length mismatch: {len(self.gaze)} vs {len(self.head)}"
                )
        if len(self.context) != 2:
            raise ValueError("context must hold exactly two poses")
        if not self.has_context:
            for pose in self.context:
                if pose != ZERO_POSE:
                    raise ValueError("windows without context must carry zero context poses")

    @property
    def num_frames(self) -> int:
        return len(self.gaze)

    @property
    def context_array(self) -> np.ndarray:
        """Context as a (2, 2) array of (pitch, yaw) radians."""
        return np.array([[p.pitch, p.yaw] for p in self.context], dtype=float)
