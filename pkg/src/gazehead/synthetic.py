"""Synthetic gaze/head datasets from a known parametric coordination law.

Gaze trajectories are piecewise-constant fixation targets joined by
raised-cosine transitions. Head motion follows gaze through a first-order
lag with a per-sequence random gain and constant bias, so the mapping from
gaze to head is genuinely one-to-many across sequences:

    target_t = gain * gaze_t + bias
    h_0 = target_0
    h_t = h_{t-1} + lag_alpha * (target_t - h_{t-1}) + eps_t

where eps_t is white noise passed through the same first-order filter.
With noise_std=0 the recursion is exactly reproducible by a few-line
reference loop, which is what the tests check against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .pipeline import FrameRecord
from .types import AngularPose, MotionKind, MotionSequence

# Fixation targets stay inside this box so head poses (gain <= 1 plus a few
# sigma of bias) remain well within canonical pitch/yaw bounds.
TARGET_BOUND_PITCH = 0.5
TARGET_BOUND_YAW = 0.9
_INITIAL_TARGET_BOUND = 0.3


@dataclass(frozen=True)
class OracleParams:
    """Parameters of the synthetic gaze-head coordination law.

    Angles are radians, durations seconds. ``gain_mean``/``gain_std`` and
    ``bias_std`` control how strongly and around what offset the head
    follows gaze, drawn once per sequence; ``lag_alpha`` is the first-order
    follow rate per model frame; ``noise_std`` is the per-frame smooth
    noise scale.
    """

    gain_mean: float = 0.6
    gain_std: float = 0.1
    lag_alpha: float = 0.5
    bias_std: float = math.radians(5.0)
    noise_std: float = math.radians(0.3)
    fixation_duration_range: tuple[float, float] = (0.6, 1.6)
    saccade_amplitude_range: tuple[float, float] = (0.15, 0.5)
    transition_duration: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gain_mean <= 1.0:
            raise ConfigurationError(f"gain_mean must be in [0, 1], got {self.gain_mean}")
        if not 0.0 < self.lag_alpha <= 1.0:
            raise ConfigurationError(f"lag_alpha must be in (0, 1], got {self.lag_alpha}")
        for name in ("gain_std", "bias_std", "noise_std"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        for name in ("fixation_duration_range", "saccade_amplitude_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigurationError(f"{name} must be an ordered non-negative range")
        if self.transition_duration <= 0:
            raise ConfigurationError("transition_duration must be positive")


def sample_gaze_trajectory(
    params: OracleParams, length: int, fps: float, rng: np.random.Generator | None = None
) -> MotionSequence:
    """Sample one gaze trajectory: held fixation targets with smooth transitions."""
    if length < 1:
        raise ConfigurationError(f"length must be >= 1, got {length}")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    lo_fix, hi_fix = params.fixation_duration_range
    lo_amp, hi_amp = params.saccade_amplitude_range
    n_transition = max(1, int(round(params.transition_duration * fps)))

    target = rng.uniform(-_INITIAL_TARGET_BOUND, _INITIAL_TARGET_BOUND, size=2)
    frames: list[np.ndarray] = []
    while len(frames) < length:
        hold = max(1, int(round(rng.uniform(lo_fix, hi_fix) * fps)))
        frames.extend([target.copy()] * hold)
        if len(frames) >= length:
            break
        amplitude = rng.uniform(lo_amp, hi_amp)
        direction = rng.uniform(0.0, 2.0 * math.pi)
        step = amplitude * np.array([math.sin(direction), math.cos(direction)])
        new_target = np.clip(
            target + step,
            [-TARGET_BOUND_PITCH, -TARGET_BOUND_YAW],
            [TARGET_BOUND_PITCH, TARGET_BOUND_YAW],
        )
        # raised-cosine ramp; the final transition frame lands on the new target
        for i in range(1, n_transition + 1):
            blend = 0.5 * (1.0 - math.cos(math.pi * i / n_transition))
            frames.append(target + blend * (new_target - target))
        target = new_target
    angles = np.array(frames[:length])
    return MotionSequence(angles, fps, MotionKind.GAZE)


def simulate_head(
    gaze: MotionSequence, params: OracleParams, rng: np.random.Generator
) -> MotionSequence:
    """Simulate the head response to one gaze trajectory.

    Consumes from ``rng``, in order: the sequence gain, the 2-dim bias,
    then 2 noise values per frame from t=1 on (drawn even when
    noise_std=0, to keep the stream layout stable).
    """
    gain = float(np.clip(rng.normal(params.gain_mean, params.gain_std), 0.0, 1.0))
    bias = rng.normal(0.0, params.bias_std, size=2)
    target = gain * gaze.angles + bias
    head = np.empty_like(target)
    head[0] = target[0]
    smooth = np.zeros(2)
    for t in range(1, len(target)):
        white = rng.normal(0.0, params.noise_std, size=2)
        smooth = smooth + params.lag_alpha * (white - smooth)
        head[t] = head[t - 1] + params.lag_alpha * (target[t] - head[t - 1]) + smooth
    return MotionSequence(head, gaze.fps, MotionKind.HEAD)


def sequence_rng(params: OracleParams, index: int) -> np.random.Generator:
    """Independent per-sequence random stream derived from the dataset seed."""
    return np.random.default_rng([params.seed, index])


def generate_dataset(
    params: OracleParams, num_sequences: int, frames_per_sequence: int, fps: float
) -> list[tuple[MotionSequence, MotionSequence]]:
    """Generate (gaze, head) pairs, deterministic given params.seed."""
    if num_sequences < 1 or frames_per_sequence < 1:
        raise ConfigurationError("sequence and frame counts must be positive")
    pairs = []
    for i in range(num_sequences):
        rng = sequence_rng(params, i)
        gaze = sample_gaze_trajectory(params, frames_per_sequence, fps, rng)
        head = simulate_head(gaze, params, rng)
        pairs.append((gaze, head))
    return pairs


def dataset_records(
    params: OracleParams,
    num_sequences: int,
    frames_per_sequence: int,
    fps: float,
    num_subjects: int = 20,
    video_prefix: str = "v",
    subject_prefix: str = "s",
) -> list[FrameRecord]:
    """Generate a dataset and flatten it to clean frame records.

    Sequences are assigned round-robin to ``num_subjects`` synthetic
    subjects so the subject-disjoint split has something to work with.
    """
    if num_subjects < 1:
        raise ConfigurationError("num_subjects must be >= 1")
    pairs = generate_dataset(params, num_sequences, frames_per_sequence, fps)
    records = []
    for i, (gaze, head) in enumerate(pairs):
        video_id = f"{video_prefix}{i:05d}"
        subject_id = f"{subject_prefix}{i % num_subjects:03d}"
        for t in range(len(gaze)):
            records.append(
                FrameRecord(
                    video_id=video_id,
                    subject_id=subject_id,
                    frame_index=t,
                    gaze=AngularPose(float(gaze.angles[t, 0]), float(gaze.angles[t, 1])),
                    head=AngularPose(float(head.angles[t, 0]), float(head.angles[t, 1])),
                    face_count=1,
                    glasses_flag=False,
                    scene_cut_flag=False,
                )
            )
    return records


def with_seed(params: OracleParams, seed: int) -> OracleParams:
    return replace(params, seed=seed)
