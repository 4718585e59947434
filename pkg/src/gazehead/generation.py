"""Inference-time head motion generation and the deterministic baselines.

Long inputs are chunked into consecutive model windows; each window draws
a fresh latent from the prior and, from the second window on, receives the
last two generated head poses as context so segments join smoothly.
Remainder frames beyond the last full window are not generated.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .types import AngularPose, MotionKind, MotionSequence, concat_sequences


class GenerationMethod(str, Enum):
    CVAE = "cvae"
    CVAE_NO_TEMPORAL = "cvae_no_temporal"
    CONSTANT_HEAD = "constant_head"
    MIRROR_GAZE = "mirror_gaze"


@dataclass(frozen=True)
class GenerationRequest:
    gaze: MotionSequence
    num_samples: int = 30
    seed: int = 0
    method: GenerationMethod = GenerationMethod.CVAE

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples}")
        object.__setattr__(self, "method", GenerationMethod(self.method))


def generate_window(model, gaze: MotionSequence, context, z: np.ndarray) -> MotionSequence:
    """One decoded window; deterministic given (model, gaze, context, z)."""
    return model.decode(z, gaze, context)


def generate_long(
    model,
    gaze: MotionSequence,
    seed: int = 0,
    rng: np.random.Generator | None = None,
    z_mode: str = "sample",
    context_mode: str = "chain",
) -> MotionSequence:
    """Autoregressive generation over a gaze sequence of any length >= T.

    Output covers T * floor(N / T) frames. ``z_mode`` "sample" draws one
    latent per window from the prior ("zero" uses z=0 for deterministic
    output); ``context_mode`` "chain" hands the previous window's last two
    generated poses forward ("zero" forces every window to start cold,
    which exists for continuity measurements).
    """
    if z_mode not in ("sample", "zero"):
        raise ValueError(f"unknown z_mode {z_mode!r}")
    if context_mode not in ("chain", "zero"):
        raise ValueError(f"unknown context_mode {context_mode!r}")
    num_frames = model.config_.window_frames
    if len(gaze) < num_frames:
        raise ValueError(
            f"gaze length {len(gaze)} is shorter than one model window ({num_frames})"
        )
    if rng is None:
        rng = np.random.default_rng(seed)
    latent_dim = model.config_.latent_dim
    chunks = []
    context = None
    for start in range(0, (len(gaze) // num_frames) * num_frames, num_frames):
        gaze_window = gaze.slice(start, start + num_frames)
        z = rng.standard_normal(latent_dim) if z_mode == "sample" else np.zeros(latent_dim)
        head = model.decode(z, gaze_window, context)
        chunks.append(head)
        if context_mode == "chain":
            context = (head[num_frames - 2], head[num_frames - 1])
    return concat_sequences(chunks)


def generate_diverse(
    model, gaze: MotionSequence, num_samples: int, seed=0, **kwargs
) -> list[MotionSequence]:
    """num_samples independent long generations with derived per-sample seeds.

    ``seed`` may be an int or a tuple of ints (useful to derive disjoint
    streams per input video).
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    base = tuple(int(s) for s in seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    return [
        generate_long(model, gaze, rng=np.random.default_rng([*base, k]), **kwargs)
        for k in range(num_samples)
    ]


def constant_head_baseline(
    gaze: MotionSequence, initial_head: AngularPose | None = None
) -> MotionSequence:
    """Hold one fixed head pose for the whole sequence.

    Defaults to the zero pose; callers with ground truth available should
    pass the real first-frame head pose.
    """
    pose = initial_head if initial_head is not None else AngularPose(0.0, 0.0)
    angles = np.tile([pose.pitch, pose.yaw], (len(gaze), 1))
    return MotionSequence(angles, gaze.fps, MotionKind.HEAD)


def mirror_gaze_baseline(gaze: MotionSequence) -> MotionSequence:
    """Copy the gaze angles directly as head poses."""
    return MotionSequence(gaze.angles, gaze.fps, MotionKind.HEAD)
