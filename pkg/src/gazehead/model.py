"""Conditional VAE over gaze/head windows: config, losses, training, checkpoints.

Training operates in normalized angle space; the loss is the L2 norm of
the stacked T x 2 residual plus an annealed KL term:

    L = ||h_hat - h||_2 + lambda * KL(N(mu, sigma^2) || N(0, 1))

Regularization: linear KL weight annealing, per-sample context dropout
(the whole context signal, including the decoder seed, is zeroed), and
feature dropout on the concatenated stream embeddings. "No context" is
represented as exact zeros in normalized space, for real initial windows,
dropped-out samples, and the no-temporal ablation alike.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import CheckpointFormatError, TrainingError
from .nets import LOG_VAR_MAX, LOG_VAR_MIN, CvaeNet
from .pipeline import DatasetManifest, NormStats, compute_norm_stats
from .types import AngularPose, MotionKind, MotionSequence, MotionWindow

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
_CHECKPOINT_KIND = "gazehead-checkpoint"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training hyperparameters."""

    window_frames: int = 12
    latent_dim: int = 128
    model_fps: float = 5.0
    encoder_hidden: int = 256
    decoder_hidden: int = 256
    feature_dim: int = 64
    kl_weight_max: float = 0.1
    kl_anneal_steps: int = 12_000
    context_dropout_prob: float = 0.5
    feature_dropout_prob: float = 0.1
    batch_size: int = 64
    train_steps: int = 60_000
    learning_rate: float = 5e-5
    temporal_modeling: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.window_frames < 3:
            raise ValueError(f"window_frames must be >= 3, got {self.window_frames}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.kl_weight_max < 0:
            raise ValueError("kl_weight_max must be >= 0")
        if self.kl_anneal_steps < 0:
            raise ValueError("kl_anneal_steps must be >= 0")
        for name in ("context_dropout_prob", "feature_dropout_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("encoder_hidden", "decoder_hidden", "feature_dim", "batch_size", "train_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0 or self.model_fps <= 0:
            raise ValueError("learning_rate and model_fps must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**payload)


@dataclass(frozen=True)
class LatentDistribution:
    """Posterior parameters (mu, log variance) of the latent code."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        log_var = np.array(self.log_var, dtype=float).reshape(-1)
        if mu.shape != log_var.shape:
            raise ValueError("mu and log_var must have the same length")
        if not (np.isfinite(mu).all() and np.isfinite(log_var).all()):
            raise ValueError("latent distribution parameters must be finite")
        if (log_var < LOG_VAR_MIN - 1e-9).any() or (log_var > LOG_VAR_MAX + 1e-9).any():
            raise ValueError(f"log_var outside clamp range [{LOG_VAR_MIN}, {LOG_VAR_MAX}]")
        mu.setflags(write=False)
        log_var.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_var", log_var)

    def __len__(self) -> int:
        return len(self.mu)


def kl_divergence(dist: LatentDistribution) -> float:
    """KL(N(mu, sigma^2) || N(0, 1)) in nats; always >= 0."""
    mu, log_var = dist.mu, dist.log_var
    return float(0.5 * np.sum(mu**2 + np.exp(log_var) - log_var - 1.0))


def reparameterize(dist: LatentDistribution, noise: np.ndarray) -> np.ndarray:
    """z = mu + exp(0.5 * log_var) * noise."""
    noise = np.asarray(noise, dtype=float).reshape(-1)
    if noise.shape != dist.mu.shape:
        raise ValueError(f"noise must have length {len(dist.mu)}, got {len(noise)}")
    return dist.mu + np.exp(0.5 * dist.log_var) * noise


def kl_weight_at(step: int, config: ModelConfig) -> float:
    """Linearly annealed KL weight; reaches kl_weight_max at kl_anneal_steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if config.kl_anneal_steps == 0:
        return config.kl_weight_max
    return config.kl_weight_max * min(1.0, step / config.kl_anneal_steps)


def sequence_loss(
    predicted: np.ndarray,
    target: np.ndarray,
    dist: LatentDistribution,
    kl_weight: float,
) -> tuple[float, float, float]:
    """(total, reconstruction, kl) for one window in normalized space.

    Reconstruction is the L2 norm of the stacked residual, not a mean
    squared error.
    """
    predicted = np.asarray(predicted, dtype=float)
    target = np.asarray(target, dtype=float)
    if predicted.shape != target.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {target.shape}")
    reconstruction = float(np.linalg.norm((predicted - target).ravel()))
    kl = kl_divergence(dist)
    return reconstruction + kl_weight * kl, reconstruction, kl


def training_loss(
    net: CvaeNet,
    gaze: torch.Tensor,
    head: torch.Tensor,
    ctx: torch.Tensor,
    noise: torch.Tensor,
    kl_weight: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batch-mean (total, reconstruction, kl) through the full encode/decode path.

    Deterministic given fixed inputs and module mode; the stochastic parts
    (noise, dropout masks, context dropout) are supplied or seeded by the
    caller.
    """
    mu, log_var = net.encode(gaze, head, ctx)
    z = mu + torch.exp(0.5 * log_var) * noise
    predicted = net.decode(z, gaze, ctx)
    residual = (predicted - head).reshape(gaze.shape[0], -1)
    reconstruction = torch.linalg.vector_norm(residual, dim=1).mean()
    kl = (0.5 * torch.sum(mu**2 + torch.exp(log_var) - log_var - 1.0, dim=1)).mean()
    return reconstruction + kl_weight * kl, reconstruction, kl


class HeadMotionCVAE(BaseEstimator):
    """Gaze-conditioned head motion generator with a scikit-learn style API.

    Hyperparameters mirror ModelConfig. fit() trains on MotionWindows (or a
    DatasetManifest); decode()/predict()/sample() generate head motion for
    gaze input. Set temporal_modeling=False for the per-frame feedforward
    ablation without context conditioning.
    """

    def __init__(
        self,
        window_frames: int = 12,
        latent_dim: int = 128,
        model_fps: float = 5.0,
        encoder_hidden: int = 256,
        decoder_hidden: int = 256,
        feature_dim: int = 64,
        kl_weight_max: float = 0.1,
        kl_anneal_steps: int = 12_000,
        context_dropout_prob: float = 0.5,
        feature_dropout_prob: float = 0.1,
        batch_size: int = 64,
        train_steps: int = 60_000,
        learning_rate: float = 5e-5,
        temporal_modeling: bool = True,
        seed: int = 0,
    ):
        self.window_frames = window_frames
        self.latent_dim = latent_dim
        self.model_fps = model_fps
        self.encoder_hidden = encoder_hidden
        self.decoder_hidden = decoder_hidden
        self.feature_dim = feature_dim
        self.kl_weight_max = kl_weight_max
        self.kl_anneal_steps = kl_anneal_steps
        self.context_dropout_prob = context_dropout_prob
        self.feature_dropout_prob = feature_dropout_prob
        self.batch_size = batch_size
        self.train_steps = train_steps
        self.learning_rate = learning_rate
        self.temporal_modeling = temporal_modeling
        self.seed = seed

    # -- fitting ------------------------------------------------------------

    def fit(
        self,
        windows,
        y=None,
        *,
        norm_stats: NormStats | None = None,
        checkpoint_every: int = 0,
        checkpoint_dir=None,
        history_every: int = 50,
    ):
        """Train on MotionWindows with real head sequences.

        ``windows`` may be a list of MotionWindow or a DatasetManifest;
        normalization statistics default to the manifest's (or are computed
        from the training windows). Deterministic given the seed.
        """
        if isinstance(windows, DatasetManifest):
            if norm_stats is None:
                norm_stats = windows.normalization
            windows = windows.windows
        windows = list(windows)
        if not windows:
            raise ValueError("cannot fit on zero windows")
        config = self._build_config()
        for w in windows:
            if w.head is None:
                raise ValueError("training windows must carry real head sequences")
            if w.num_frames != config.window_frames:
                raise ValueError(
                    f"window length {w.num_frames} != configured window_frames "
                    f"{config.window_frames}"
                )
        if norm_stats is None:
            norm_stats = compute_norm_stats(windows)

        torch.manual_seed(config.seed)
        net = self._build_net(config)
        optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
        gaze_t, head_t, ctx_t = self._window_tensors(windows, norm_stats)
        batch_rng = np.random.default_rng([config.seed, 101])

        self.config_ = config
        self.norm_stats_ = norm_stats
        self.net_ = net
        self.history_ = []

        net.train()
        num_windows = len(windows)
        for step in range(config.train_steps):
            idx = batch_rng.integers(0, num_windows, size=config.batch_size)
            idx_t = torch.from_numpy(idx)
            gaze_b = gaze_t[idx_t]
            head_b = head_t[idx_t]
            ctx_b = ctx_t[idx_t].clone()
            if config.context_dropout_prob > 0:
                drop = torch.rand(len(idx)) < config.context_dropout_prob
                ctx_b[drop] = 0.0
            noise = torch.randn(len(idx), config.latent_dim)
            kl_weight = kl_weight_at(step, config)
            total, reconstruction, kl = training_loss(
                net, gaze_b, head_b, ctx_b, noise, kl_weight
            )
            if not torch.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at step {step} (batch windows {idx.tolist()})"
                )
            optimizer.zero_grad()
            total.backward()
            optimizer.step()

            if step % history_every == 0 or step == config.train_steps - 1:
                entry = {
                    "step": step,
                    "total": float(total.detach()),
                    "reconstruction": float(reconstruction.detach()),
                    "kl": float(kl.detach()),
                    "kl_weight": kl_weight,
                }
                self.history_.append(entry)
                if step % (history_every * 10) == 0:
                    logger.info(
                        "step %d: total=%.4f recon=%.4f kl=%.4f (weight %.4f)",
                        step, entry["total"], entry["reconstruction"], entry["kl"], kl_weight,
                    )
            self.step_ = step + 1
            if (
                checkpoint_every > 0
                and checkpoint_dir is not None
                and (step + 1) % checkpoint_every == 0
                and (step + 1) < config.train_steps
            ):
                path = os.path.join(checkpoint_dir, f"checkpoint_step{step + 1:07d}.pt")
                save_checkpoint(self.to_checkpoint(), path)
        net.eval()
        return self

    def _build_config(self) -> ModelConfig:
        return ModelConfig(**{f.name: getattr(self, f.name) for f in dataclasses.fields(ModelConfig)})

    @staticmethod
    def _build_net(config: ModelConfig) -> CvaeNet:
        return CvaeNet(
            feature_dim=config.feature_dim,
            latent_dim=config.latent_dim,
            encoder_hidden=config.encoder_hidden,
            decoder_hidden=config.decoder_hidden,
            feature_dropout_prob=config.feature_dropout_prob,
            temporal_modeling=config.temporal_modeling,
        )

    def _window_tensors(self, windows, norm_stats: NormStats):
        gaze = np.stack([norm_stats.normalize(w.gaze.angles, MotionKind.GAZE) for w in windows])
        head = np.stack([norm_stats.normalize(w.head.angles, MotionKind.HEAD) for w in windows])
        ctx = np.stack(
            [
                norm_stats.normalize(w.context_array, MotionKind.HEAD)
                if w.has_context
                else np.zeros((2, 2))
                for w in windows
            ]
        )
        to_t = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
        return to_t(gaze), to_t(head), to_t(ctx)

    # -- inference ----------------------------------------------------------

    def _require_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError(
                "this HeadMotionCVAE instance is not fitted; call fit() or load a checkpoint"
            )

    def _dtype(self):
        return next(self.net_.parameters()).dtype

    def _context_tensor(self, context) -> torch.Tensor:
        """Normalized (1, 2, 2) context; zeros mean 'no context'."""
        if context is None:
            return torch.zeros(1, 2, 2, dtype=self._dtype())
        if isinstance(context, (tuple, list)) and len(context) == 2 and isinstance(context[0], AngularPose):
            raw = np.array([[p.pitch, p.yaw] for p in context])
        else:
            raw = np.asarray(context, dtype=float)
        if raw.shape != (2, 2):
            raise ValueError(f"context must be two (pitch, yaw) poses, got shape {raw.shape}")
        normalized = self.norm_stats_.normalize(raw, MotionKind.HEAD)
        return torch.from_numpy(normalized[None]).to(self._dtype())

    def encode(self, window: MotionWindow) -> LatentDistribution:
        """Posterior latent parameters for a window with a real head sequence."""
        self._require_fitted()
        if window.head is None:
            raise ValueError("encode requires a window with a real head sequence")
        if window.num_frames != self.config_.window_frames:
            raise ValueError(
                f"window length {window.num_frames} != model window_frames "
                f"{self.config_.window_frames}"
            )
        dtype = self._dtype()
        gaze = torch.from_numpy(
            self.norm_stats_.normalize(window.gaze.angles, MotionKind.GAZE)[None]
        ).to(dtype)
        head = torch.from_numpy(
            self.norm_stats_.normalize(window.head.angles, MotionKind.HEAD)[None]
        ).to(dtype)
        ctx = self._context_tensor(window.context if window.has_context else None)
        self.net_.eval()
        with torch.no_grad():
            mu, log_var = self.net_.encode(gaze, head, ctx)
        return LatentDistribution(
            mu=mu[0].double().numpy(), log_var=log_var[0].double().numpy()
        )

    def decode(self, z: np.ndarray, gaze: MotionSequence, context=None) -> MotionSequence:
        """Generate one head window for a latent code and a T-frame gaze window.

        ``context`` is None (initial window) or the last two head poses of
        the preceding window; the no-temporal variant ignores it.
        """
        self._require_fitted()
        z = np.asarray(z, dtype=float).reshape(-1)
        if len(z) != self.config_.latent_dim:
            raise ValueError(f"z must have length {self.config_.latent_dim}, got {len(z)}")
        if len(gaze) != self.config_.window_frames:
            raise ValueError(
                f"gaze window length {len(gaze)} != model window_frames "
                f"{self.config_.window_frames}"
            )
        dtype = self._dtype()
        gaze_t = torch.from_numpy(
            self.norm_stats_.normalize(gaze.angles, MotionKind.GAZE)[None]
        ).to(dtype)
        ctx_t = self._context_tensor(context)
        z_t = torch.from_numpy(z[None]).to(dtype)
        self.net_.eval()
        with torch.no_grad():
            predicted = self.net_.decode(z_t, gaze_t, ctx_t)
        angles = self.norm_stats_.denormalize(
            predicted[0].double().numpy(), MotionKind.HEAD
        )
        return MotionSequence(angles, gaze.fps, MotionKind.HEAD)

    def predict(self, gaze: MotionSequence) -> MotionSequence:
        """Deterministic generation (z = 0 in every window) for a gaze sequence."""
        from .generation import generate_long

        return generate_long(self, gaze, seed=0, z_mode="zero")

    def sample(self, gaze: MotionSequence, n_samples: int = 1, seed: int = 0):
        """Draw n_samples diverse head sequences for one gaze sequence."""
        from .generation import generate_diverse

        return generate_diverse(self, gaze, n_samples, seed)

    # -- persistence ----------------------------------------------------------

    def to_checkpoint(self) -> "Checkpoint":
        self._require_fitted()
        return Checkpoint(
            config=self.config_,
            norm_stats=self.norm_stats_,
            step=getattr(self, "step_", 0),
            state_dict={k: v.clone() for k, v in self.net_.state_dict().items()},
            torch_rng_state=torch.get_rng_state().clone(),
        )

    def save(self, path) -> None:
        save_checkpoint(self.to_checkpoint(), path)

    @classmethod
    def from_checkpoint(cls, checkpoint: "Checkpoint") -> "HeadMotionCVAE":
        estimator = cls(**checkpoint.config.to_dict())
        estimator.config_ = checkpoint.config
        estimator.norm_stats_ = checkpoint.norm_stats
        estimator.step_ = checkpoint.step
        net = cls._build_net(checkpoint.config)
        net.load_state_dict(checkpoint.state_dict)
        net.eval()
        estimator.net_ = net
        estimator.history_ = []
        return estimator

    @classmethod
    def load(cls, path) -> "HeadMotionCVAE":
        return cls.from_checkpoint(load_checkpoint(path))


@dataclass
class Checkpoint:
    """Self-describing training snapshot: config, normalization, parameters."""

    config: ModelConfig
    norm_stats: NormStats | None
    step: int
    state_dict: dict
    torch_rng_state: torch.Tensor
    format_version: int = CHECKPOINT_FORMAT_VERSION


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    payload = {
        "kind": _CHECKPOINT_KIND,
        "format_version": checkpoint.format_version,
        "config": checkpoint.config.to_dict(),
        "norm_stats": checkpoint.norm_stats.to_dict() if checkpoint.norm_stats else None,
        "step": checkpoint.step,
        "state_dict": checkpoint.state_dict,
        "torch_rng_state": checkpoint.torch_rng_state,
    }
    torch.save(payload, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != _CHECKPOINT_KIND:
        raise CheckpointFormatError(f"{path} is not a head-motion checkpoint")
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointFormatError(
            f"checkpoint format version {version!r} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    norm_stats = payload["norm_stats"]
    return Checkpoint(
        config=ModelConfig.from_dict(payload["config"]),
        norm_stats=NormStats.from_dict(norm_stats) if norm_stats else None,
        step=int(payload["step"]),
        state_dict=payload["state_dict"],
        torch_rng_state=payload["torch_rng_state"],
    )


def train(manifest: DatasetManifest, config: ModelConfig, **fit_kwargs) -> Checkpoint:
    """Train a model on a manifest and return its checkpoint."""
    estimator = HeadMotionCVAE(**config.to_dict())
    estimator.fit(manifest, **fit_kwargs)
    return estimator.to_checkpoint()
