"""Evaluation metrics for generated head motion, reported in degrees.

Per-sequence metrics: 3D angular error between direction vectors,
per-dimension Pearson correlation over time, average variance error
(population variance), smoothness as the mean absolute third finite
difference, and average pairwise distance across samples. ``evaluate``
aggregates them over a corpus into one report row per method, averaging
the per-input mean ("Avg.") and per-input best over the K samples.
"""

from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError
from .types import MotionSequence, direction_vectors

_DIM_INDEX = {"pitch": 0, "yaw": 1}


class ConstantSequenceWarning(UserWarning):
    """A correlation input was constant; the coefficient is reported as 0."""


def _angles(seq) -> np.ndarray:
    """(N, 2) array of radians from a MotionSequence or array."""
    if isinstance(seq, MotionSequence):
        return seq.angles
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) angle array, got shape {arr.shape}")
    return arr


def angular_error(generated, real) -> float:
    """Mean 3D angle (degrees) between generated and real orientations.

    Uses atan2(|v1 x v2|, v1 . v2), which is exact for identical inputs and
    numerically stable for small angles.
    """
    gen, ref = _angles(generated), _angles(real)
    if gen.shape != ref.shape:
        raise ValueError(f"length mismatch: {gen.shape} vs {ref.shape}")
    v1, v2 = direction_vectors(gen), direction_vectors(ref)
    dots = np.sum(v1 * v2, axis=1)
    crosses = np.linalg.norm(np.cross(v1, v2), axis=1)
    return float(np.degrees(np.arctan2(crosses, dots)).mean())


def correlation(generated, real, dim: str) -> float:
    """Pearson correlation over time of one dimension; 0 if either input is constant."""
    if dim not in _DIM_INDEX:
        raise ValueError(f"dim must be 'pitch' or 'yaw', got {dim!r}")
    d = _DIM_INDEX[dim]
    x = _angles(generated)[:, d]
    y = _angles(real)[:, d]
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("correlation needs at least 2 frames")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        warnings.warn(
            f"constant {dim} sequence; correlation reported as 0", ConstantSequenceWarning,
            stacklevel=2,
        )
        return 0.0
    x = x - x.mean()
    y = y - y.mean()
    return float(np.dot(x, y) / (np.linalg.norm(x) * np.linalg.norm(y)))


def ave(generated, real) -> float:
    """Average variance error in degrees^2 (population variance over time)."""
    gen = np.degrees(_angles(generated))
    ref = np.degrees(_angles(real))
    if gen.shape != ref.shape:
        raise ValueError(f"length mismatch: {gen.shape} vs {ref.shape}")
    if len(gen) < 2:
        raise ValueError("variance needs at least 2 frames")
    return float(np.abs(gen.var(axis=0) - ref.var(axis=0)).mean())


def smoothness(seq) -> float:
    """Mean absolute third finite difference in degrees/frame^3 (lower is smoother)."""
    angles = np.degrees(_angles(seq))
    if len(angles) < 4:
        raise ValueError(f"smoothness needs at least 4 frames, got {len(angles)}")
    return float(np.abs(np.diff(angles, n=3, axis=0)).mean())


def apd(samples) -> float:
    """Average pairwise L2 distance (degrees) among K >= 2 equal-length samples."""
    arrays = [np.degrees(_angles(s)).ravel() for s in samples]
    if len(arrays) < 2:
        raise ValueError(f"APD needs at least 2 samples, got {len(arrays)}")
    length = len(arrays[0])
    if any(len(a) != length for a in arrays):
        raise ValueError("all samples must have equal length")
    # sequential accumulation so results match a plain double-loop reference exactly
    distances = [np.linalg.norm(a - b) for a, b in itertools.combinations(arrays, 2)]
    return float(sum(distances) / len(distances))


@dataclass(frozen=True)
class EvalItem:
    """One test input: its real head sequence and the K generated samples."""

    input_id: str
    real_head: MotionSequence
    samples: list

    def __post_init__(self):
        if self.real_head is None:
            raise ValidationError(f"input {self.input_id!r}: missing real head sequence")
        if not self.samples:
            raise ValidationError(f"input {self.input_id!r}: no generated samples")
        for s in self.samples:
            if len(_angles(s)) != len(self.real_head):
                raise ValidationError(
                    f"input {self.input_id!r}: sample length {len(_angles(s))} != "
                    f"real length {len(self.real_head)}"
                )


@dataclass(frozen=True)
class EvalReport:
    """One method's corpus-level results, shaped like a comparison-table row."""

    method: str
    angular_error_avg: float
    angular_error_best: float
    correlation_pitch_best: float
    correlation_yaw_best: float
    ave_avg: float
    smoothness_avg: float
    apd: float
    k: int
    num_inputs: int

    def __post_init__(self):
        if self.angular_error_best > self.angular_error_avg + 1e-9:
            raise ValueError("best angular error cannot exceed the average")
        for name in ("correlation_pitch_best", "correlation_yaw_best"):
            if not -1.0 - 1e-9 <= getattr(self, name) <= 1.0 + 1e-9:
                raise ValueError(f"{name} outside [-1, 1]")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def evaluate(items: list[EvalItem], method: str) -> EvalReport:
    """Aggregate per-input metrics over a corpus for one method.

    Per input: mean and min over samples for angular error, max over
    samples for each correlation, mean over samples for AVE and
    smoothness, APD across the samples (0 when K == 1). The report is the
    mean of these per-input values.
    """
    if not items:
        raise ValidationError("cannot evaluate zero inputs")
    k = len(items[0].samples)
    if any(len(item.samples) != k for item in items):
        raise ValidationError("all inputs must carry the same number of samples")
    err_avg, err_best = [], []
    corr_pitch, corr_yaw = [], []
    ave_vals, smooth_vals, apd_vals = [], [], []
    for item in items:
        errors = [angular_error(s, item.real_head) for s in item.samples]
        err_avg.append(np.mean(errors))
        err_best.append(np.min(errors))
        corr_pitch.append(max(correlation(s, item.real_head, "pitch") for s in item.samples))
        corr_yaw.append(max(correlation(s, item.real_head, "yaw") for s in item.samples))
        ave_vals.append(np.mean([ave(s, item.real_head) for s in item.samples]))
        smooth_vals.append(np.mean([smoothness(s) for s in item.samples]))
        apd_vals.append(0.0 if k == 1 else apd(item.samples))
    return EvalReport(
        method=method,
        angular_error_avg=float(np.mean(err_avg)),
        angular_error_best=float(np.mean(err_best)),
        correlation_pitch_best=float(np.mean(corr_pitch)),
        correlation_yaw_best=float(np.mean(corr_yaw)),
        ave_avg=float(np.mean(ave_vals)),
        smoothness_avg=float(np.mean(smooth_vals)),
        apd=float(np.mean(apd_vals)),
        k=k,
        num_inputs=len(items),
    )


def write_report_csv(reports: list[EvalReport], path) -> None:
    """CSV with one row per method; columns exactly match EvalReport fields."""
    names = [f.name for f in fields(EvalReport)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.to_dict())


def read_report_csv(path) -> list[EvalReport]:
    reports = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(
                EvalReport(
                    method=row["method"],
                    angular_error_avg=float(row["angular_error_avg"]),
                    angular_error_best=float(row["angular_error_best"]),
                    correlation_pitch_best=float(row["correlation_pitch_best"]),
                    correlation_yaw_best=float(row["correlation_yaw_best"]),
                    ave_avg=float(row["ave_avg"]),
                    smoothness_avg=float(row["smoothness_avg"]),
                    apd=float(row["apd"]),
                    k=int(row["k"]),
                    num_inputs=int(row["num_inputs"]),
                )
            )
    return reports
