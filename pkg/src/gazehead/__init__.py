"""gazehead: learn and generate head-pose sequences conditioned on gaze."""

__version__ = "0.1.0"

from .errors import (
    CheckpointFormatError,
    ConfigurationError,
    GazeHeadError,
    ParseError,
    TrainingError,
    ValidationError,
)
from .types import (
    AngularPose,
    MotionKind,
    MotionSequence,
    MotionWindow,
    ZERO_POSE,
    canonicalize,
    canonicalize_angles,
    concat_sequences,
    direction_vectors,
    to_direction_vector,
)
from .pipeline import (
    DatasetManifest,
    FilterPolicy,
    FrameRecord,
    NormStats,
    Rejection,
    compute_norm_stats,
    filter_videos,
    ingest,
    load_manifest,
    prepare,
    resample,
    save_manifest,
    split_by_subject,
    window,
)
from .synthetic import OracleParams, generate_dataset, sample_gaze_trajectory, simulate_head
from .model import (
    Checkpoint,
    HeadMotionCVAE,
    LatentDistribution,
    ModelConfig,
    kl_divergence,
    kl_weight_at,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
    sequence_loss,
    train,
)
from .generation import (
    GenerationMethod,
    GenerationRequest,
    constant_head_baseline,
    generate_diverse,
    generate_long,
    generate_window,
    mirror_gaze_baseline,
)
from .metrics import (
    EvalItem,
    EvalReport,
    angular_error,
    apd,
    ave,
    correlation,
    evaluate,
    smoothness,
    write_report_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
