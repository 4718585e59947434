import json

import numpy as np
import pytest

from gazehead.pipeline import FrameRecord, frame_record_to_dict
from gazehead.types import AngularPose, MotionKind, MotionSequence


def make_sequence(angles, fps=5.0, kind=MotionKind.HEAD):
    return MotionSequence(np.asarray(angles, dtype=float), fps, kind)


def make_records(
    video_id="v0",
    subject_id="s0",
    n=60,
    gaze_fn=None,
    head_fn=None,
    face_counts=None,
    glasses=(),
    cuts=(),
):
    """Build n frame records with optional per-frame overrides."""
    records = []
    for t in range(n):
        gaze = AngularPose(*(gaze_fn(t) if gaze_fn else (0.01 * t, -0.01 * t)))
        head = AngularPose(*(head_fn(t) if head_fn else (0.005 * t, 0.002 * t)))
        face_count = face_counts[t] if face_counts is not None else 1
        records.append(
            FrameRecord(
                video_id=video_id,
                subject_id=subject_id,
                frame_index=t,
                gaze=None if face_count == 0 else gaze,
                head=None if face_count == 0 else head,
                face_count=face_count,
                glasses_flag=t in glasses,
                scene_cut_flag=t in cuts,
            )
        )
    return records


def records_to_lines(records):
    return [json.dumps(frame_record_to_dict(r), sort_keys=True) for r in records]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
