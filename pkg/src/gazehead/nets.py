"""Torch building blocks for the recurrent conditional VAE.

All tensors here live in normalized angle space. The full variant uses a
GRU in both the sequence encoder and the frame-by-frame autoregressive
decoder; the no-temporal variant replaces each GRU with a per-frame
feedforward stack of matched parameter count (within 10%) and drops
context conditioning entirely.
"""

from __future__ import annotations

import math
import warnings

import torch
from torch import nn

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0

# inputs are z-scored; anything this large was almost certainly not normalized
_UNNORMALIZED_WARN_SIGMA = 10.0


def gru_param_count(input_dim: int, hidden_dim: int) -> int:
    """Parameter count of a single-layer nn.GRU(input_dim, hidden_dim)."""
    return 3 * hidden_dim * (input_dim + hidden_dim + 2)


def matched_mlp_width(in_dim: int, out_dim: int, target_params: int) -> int:
    """Hidden width making Linear(in,w)/Linear(w,w)/Linear(w,out) match target_params."""
    # params(w) = in*w + w + w^2 + w + out*w + out
    b = in_dim + out_dim + 2
    w = (-b + math.sqrt(b * b + 4.0 * (target_params - out_dim))) / 2.0
    return max(1, int(round(w)))


def _mlp(in_dim: int, width: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, width),
        nn.Tanh(),
        nn.Linear(width, width),
        nn.Tanh(),
        nn.Linear(width, out_dim),
        nn.Tanh(),
    )


class CvaeNet(nn.Module):
    """Encoder/decoder pair generating head poses conditioned on gaze.

    Stream inputs (gaze pose, head pose, 2-frame context, previous output)
    are each embedded by a fully connected layer with tanh; feature dropout
    acts on the concatenated embeddings during training only.
    """

    def __init__(
        self,
        feature_dim: int = 64,
        latent_dim: int = 128,
        encoder_hidden: int = 256,
        decoder_hidden: int = 256,
        feature_dropout_prob: float = 0.1,
        temporal_modeling: bool = True,
    ):
        super().__init__()
        self.feature_dim = feature_dim
        self.latent_dim = latent_dim
        self.temporal_modeling = temporal_modeling

        self.gaze_fc = nn.Linear(2, feature_dim)
        self.head_fc = nn.Linear(2, feature_dim)
        self.feature_dropout = nn.Dropout(feature_dropout_prob)

        enc_in_full = 3 * feature_dim  # gaze + head + context embeddings
        dec_in_full = 3 * feature_dim + latent_dim  # gaze + context + prev embeddings + z
        if temporal_modeling:
            self.ctx_fc = nn.Linear(4, feature_dim)
            self.prev_fc = nn.Linear(2, feature_dim)
            self.encoder_rnn = nn.GRU(enc_in_full, encoder_hidden, batch_first=True)
            self.decoder_rnn = nn.GRU(dec_in_full, decoder_hidden, batch_first=True)
        else:
            # per-frame stacks sized to the GRUs they replace
            enc_width = matched_mlp_width(
                2 * feature_dim, encoder_hidden, gru_param_count(enc_in_full, encoder_hidden)
            )
            dec_width = matched_mlp_width(
                feature_dim + latent_dim,
                decoder_hidden,
                gru_param_count(dec_in_full, decoder_hidden),
            )
            self.encoder_mlp = _mlp(2 * feature_dim, enc_width, encoder_hidden)
            self.decoder_mlp = _mlp(feature_dim + latent_dim, dec_width, decoder_hidden)

        self.fc_mu = nn.Linear(encoder_hidden, latent_dim)
        self.fc_logvar = nn.Linear(encoder_hidden, latent_dim)
        self.head_out = nn.Linear(decoder_hidden, 2)

    @property
    def encoder_feature_width(self) -> int:
        streams = 3 if self.temporal_modeling else 2
        return streams * self.feature_dim

    def preprocess(
        self,
        gaze: torch.Tensor,
        head: torch.Tensor | None = None,
        ctx: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Embed and concatenate per-frame input streams.

        gaze: (B, T, 2); head: (B, T, 2) or None; ctx: (B, 2, 2) or None
        (required for the temporal variant, ignored otherwise). Returns
        (B, T, width); dropout is active only in training mode.
        """
        for name, tensor in (("gaze", gaze), ("head", head), ("ctx", ctx)):
            if tensor is not None and tensor.abs().max() > _UNNORMALIZED_WARN_SIGMA:
                warnings.warn(
                    f"{name} input exceeds {_UNNORMALIZED_WARN_SIGMA} sigma; "
                    "did you forget to normalize?",
                    stacklevel=2,
                )
        parts = [torch.tanh(self.gaze_fc(gaze))]
        if head is not None:
            parts.append(torch.tanh(self.head_fc(head)))
        if self.temporal_modeling:
            if ctx is None:
                raise ValueError("the temporal variant requires a context tensor")
            batch, num_frames = gaze.shape[0], gaze.shape[1]
            ctx_feat = torch.tanh(self.ctx_fc(ctx.reshape(batch, 4)))
            parts.append(ctx_feat.unsqueeze(1).expand(-1, num_frames, -1))
        return self.feature_dropout(torch.cat(parts, dim=-1))

    def encode(
        self, gaze: torch.Tensor, head: torch.Tensor, ctx: torch.Tensor | None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Map a window (with real head motion) to latent posterior parameters."""
        features = self.preprocess(gaze, head, ctx if self.temporal_modeling else None)
        if self.temporal_modeling:
            _, hidden = self.encoder_rnn(features)
            pooled = hidden[-1]
        else:
            pooled = self.encoder_mlp(features).mean(dim=1)
        mu = self.fc_mu(pooled)
        log_var = torch.clamp(self.fc_logvar(pooled), LOG_VAR_MIN, LOG_VAR_MAX)
        return mu, log_var

    def decode(self, z: torch.Tensor, gaze: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        """Generate normalized head poses for a gaze window.

        z: (B, d); gaze: (B, T, 2); ctx: (B, 2, 2) in normalized head
        space, all-zero when there is no context. The temporal variant
        feeds each generated pose back as the next frame's input, seeding
        with the second context pose; the no-temporal variant maps each
        frame independently.
        """
        if not self.temporal_modeling:
            feats = self.feature_dropout(torch.tanh(self.gaze_fc(gaze)))
            z_rep = z.unsqueeze(1).expand(-1, gaze.shape[1], -1)
            hidden = self.decoder_mlp(torch.cat([feats, z_rep], dim=-1))
            return self.head_out(hidden)

        batch, num_frames = gaze.shape[0], gaze.shape[1]
        ctx_feat = torch.tanh(self.ctx_fc(ctx.reshape(batch, 4)))
        prev = ctx[:, 1, :]
        hidden = None
        outputs = []
        for t in range(num_frames):
            gaze_feat = torch.tanh(self.gaze_fc(gaze[:, t]))
            prev_feat = torch.tanh(self.prev_fc(prev))
            feats = self.feature_dropout(torch.cat([gaze_feat, ctx_feat, prev_feat], dim=-1))
            step_in = torch.cat([feats, z], dim=-1).unsqueeze(1)
            out, hidden = self.decoder_rnn(step_in, hidden)
            prev = self.head_out(out[:, 0])
            outputs.append(prev)
        return torch.stack(outputs, dim=1)

    def parameter_counts(self) -> dict[str, int]:
        """Per-block parameter counts, used to verify the matched-size ablation."""
        counts: dict[str, int] = {}
        for name, module in self.named_children():
            counts[name] = sum(p.numel() for p in module.parameters())
        return counts
