"""Transformer CVAE over pose sequences, conditioned on semantic embeddings.

The encoder maps (motion, condition) to a diagonal Gaussian over the latent
space: frames are linearly projected to model width, the projected condition
is appended as one extra token, two learned distribution tokens are prepended,
sinusoidal positional encodings are added, and the transformer-encoder
outputs at the two token positions are read off as (mu, log-variance).

The decoder is non-autoregressive: the latent vector plus a condition bias is
duplicated into a T-step memory sequence, and T sinusoidal position queries
cross-attend to it, producing the whole pose sequence in one pass.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .embeddings import SemanticEmbedding
from .errors import (
    ConfigError,
    FormatError,
    InvalidArgumentError,
    SequenceLengthError,
    ShapeError,
)
from .motion import JointLayout, Motion, convert_channels

LOG_VAR_MIN = -30.0
LOG_VAR_MAX = 20.0

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    pose_dim: int = 312
    d_emb: int = 512
    d_model: int = 256
    n_heads: int = 4
    n_enc_layers: int = 4
    n_dec_layers: int = 4
    d_ff: int = 1024
    dropout: float = 0.1
    d_latent: int = 256
    max_T: int = 120

    def __post_init__(self) -> None:
        dims = {
            "pose_dim": self.pose_dim,
            "d_emb": self.d_emb,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_enc_layers": self.n_enc_layers,
            "n_dec_layers": self.n_dec_layers,
            "d_ff": self.d_ff,
            "d_latent": self.d_latent,
            "max_T": self.max_T,
        }
        for name, value in dims.items():
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class LatentDistribution:
    """Diagonal Gaussian over the latent space: mean and log-variance."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_var = np.asarray(self.log_var, dtype=np.float64)
        if self.mu.shape != self.log_var.shape or self.mu.ndim != 1:
            raise ShapeError(f"mu and log_var must be 1-D with equal shape, got {self.mu.shape} / {self.log_var.shape}")
        if not (np.isfinite(self.mu).all() and np.isfinite(self.log_var).all()):
            raise InvalidArgumentError("latent distribution parameters must be finite")
        if np.any(self.log_var < LOG_VAR_MIN) or np.any(self.log_var > LOG_VAR_MAX):
            raise InvalidArgumentError(f"log_var must lie in [{LOG_VAR_MIN}, {LOG_VAR_MAX}] after clamping")


@dataclass
class LatentSample:
    """A latent draw plus the seed it came from (None for external z)."""

    z: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim != 1 or not np.isfinite(self.z).all():
            raise InvalidArgumentError("z must be a finite 1-D vector")


def sinusoidal_encoding(n_positions: int, d_model: int) -> torch.Tensor:
    """Standard fixed sin/cos position table of shape (n_positions, d_model)."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    table = torch.zeros(n_positions, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: d_model // 2])
    return table.to(torch.float32)


def _mlp(d_in: int, d_hidden: int, d_out: int) -> nn.Sequential:
    """Three-layer feed-forward projection used for condition fusion."""
    return nn.Sequential(
        nn.Linear(d_in, d_hidden),
        nn.GELU(),
        nn.Linear(d_hidden, d_hidden),
        nn.GELU(),
        nn.Linear(d_hidden, d_out),
    )


class SignCvae(nn.Module):
    """Encoder/decoder pair over a fixed joint layout (sixd channels)."""

    def __init__(self, config: ModelConfig, layout: JointLayout, fps: float = 30.0):
        super().__init__()
        layout = layout.with_channels("sixd")
        if layout.frame_size != config.pose_dim:
            raise ConfigError(
                f"layout {layout.name!r} in sixd channels has frame size {layout.frame_size}, "
                f"config says pose_dim={config.pose_dim}"
            )
        self.config = config
        self.layout = layout
        self.fps = fps

        d = config.d_model
        self.frame_proj = nn.Linear(config.pose_dim, d)
        self.cond_proj_enc = _mlp(config.d_emb, d, d)
        self.cond_proj_dec = _mlp(config.d_emb, d, config.d_latent)
        self.dist_tokens = nn.Parameter(torch.randn(2, d) * 0.02)
        self.mask_token = nn.Parameter(torch.randn(d) * 0.02)

        enc_layer = nn.TransformerEncoderLayer(
            d, config.n_heads, dim_feedforward=config.d_ff, dropout=config.dropout,
            activation="gelu", batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(enc_layer, num_layers=config.n_enc_layers)
        self.to_mu = nn.Linear(d, config.d_latent)
        self.to_log_var = nn.Linear(d, config.d_latent)

        self.z_proj = nn.Linear(config.d_latent, d)
        dec_layer = nn.TransformerDecoderLayer(
            d, config.n_heads, dim_feedforward=config.d_ff, dropout=config.dropout,
            activation="gelu", batch_first=True,
        )
        self.decoder = nn.TransformerDecoder(dec_layer, num_layers=config.n_dec_layers)
        self.out_proj = nn.Linear(d, config.pose_dim)

        self.register_buffer("pos_encoding", sinusoidal_encoding(config.max_T + 3, d), persistent=False)

    # --- batched tensor interface (training path) ---

    def encode_batch(
        self,
        frames: torch.Tensor,
        cond: torch.Tensor,
        pad_mask: torch.Tensor | None = None,
        frame_mask: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """(N, T, pose_dim) + (N, d_emb) -> mu, log_var of shape (N, d_latent).

        ``pad_mask`` flags padding frames (True = ignore); ``frame_mask``
        flags curriculum-masked frames, replaced by the learned mask token.
        """
        n, t, _ = frames.shape
        if t > self.config.max_T:
            raise SequenceLengthError(f"sequence length {t} exceeds max_T {self.config.max_T}")
        x = self.frame_proj(frames)
        if frame_mask is not None:
            x = torch.where(frame_mask.unsqueeze(-1), self.mask_token.to(x.dtype), x)
        c = self.cond_proj_enc(cond).unsqueeze(1)
        tokens = self.dist_tokens.unsqueeze(0).expand(n, 2, -1).to(x.dtype)
        seq = torch.cat([tokens, c, x], dim=1)
        seq = seq + self.pos_encoding[: t + 3].to(seq.dtype)
        key_pad = None
        if pad_mask is not None:
            key_pad = torch.cat([torch.zeros(n, 3, dtype=torch.bool, device=frames.device), pad_mask], dim=1)
        h = self.encoder(seq, src_key_padding_mask=key_pad)
        mu = self.to_mu(h[:, 0])
        log_var = torch.clamp(self.to_log_var(h[:, 1]), LOG_VAR_MIN, LOG_VAR_MAX)
        return mu, log_var

    def decode_batch(
        self,
        z: torch.Tensor,
        cond: torch.Tensor,
        t: int,
        pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """(N, d_latent) + (N, d_emb) -> pose sequences (N, t, pose_dim)."""
        if t < 1:
            raise SequenceLengthError("sequence length must be >= 1")
        if t > self.config.max_T:
            raise SequenceLengthError(f"sequence length {t} exceeds max_T {self.config.max_T}")
        n = z.shape[0]
        zc = z + self.cond_proj_dec(cond)
        pe = self.pos_encoding[:t].to(z.dtype)
        memory = self.z_proj(zc).unsqueeze(1) + pe.unsqueeze(0)
        queries = pe.unsqueeze(0).expand(n, t, -1)
        h = self.decoder(
            tgt=queries,
            memory=memory,
            tgt_key_padding_mask=pad_mask,
            memory_key_padding_mask=pad_mask,
        )
        return self.out_proj(h)

    # --- single-item interface over Motion values ---

    def encode(self, motion: Motion, cond: SemanticEmbedding) -> LatentDistribution:
        frames = self._frames_tensor(motion)
        c = self._cond_tensor(cond)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                mu, log_var = self.encode_batch(frames.unsqueeze(0), c.unsqueeze(0))
        finally:
            self.train(was_training)
        return LatentDistribution(mu=mu[0].double().numpy(), log_var=log_var[0].double().numpy())

    def decode(self, z: LatentSample | np.ndarray, cond: SemanticEmbedding, t: int) -> Motion:
        zv = z.z if isinstance(z, LatentSample) else np.asarray(z, dtype=np.float64)
        if zv.shape != (self.config.d_latent,):
            raise ShapeError(f"z has shape {zv.shape}, expected ({self.config.d_latent},)")
        c = self._cond_tensor(cond)
        zt = torch.from_numpy(np.ascontiguousarray(zv)).to(next(self.parameters()).dtype)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                out = self.decode_batch(zt.unsqueeze(0), c.unsqueeze(0), t)
        finally:
            self.train(was_training)
        frames = out[0].to(torch.float32).numpy()
        gloss = cond.key if cond.modality == "text" else None
        return Motion(layout=self.layout, frames=frames, fps=self.fps, gloss=gloss)

    def generate(self, cond: SemanticEmbedding, t: int, seed: int) -> Motion:
        """Sample z from the standard normal prior and decode it."""
        gen = torch.Generator().manual_seed(seed)
        z = torch.randn(self.config.d_latent, generator=gen, dtype=torch.float64).numpy()
        return self.decode(LatentSample(z=z, seed=seed), cond, t)

    def reconstruct(self, motion: Motion, cond: SemanticEmbedding, seed: int) -> Motion:
        """Encode, sample from the posterior, and decode at the input length."""
        dist = self.encode(motion, cond)
        sample = reparameterize(dist, seed)
        out = self.decode(sample, cond, motion.frame_count)
        if motion.gloss is not None:
            out.gloss = motion.gloss
        return out

    def _frames_tensor(self, motion: Motion) -> torch.Tensor:
        if motion.layout.channels != "sixd":
            motion = convert_channels(motion, "sixd")
        if motion.frames.shape[1] != self.config.pose_dim:
            raise ShapeError(
                f"motion frame size {motion.frames.shape[1]} does not match pose_dim {self.config.pose_dim}"
            )
        if motion.frame_count > self.config.max_T:
            raise SequenceLengthError(
                f"motion has {motion.frame_count} frames, model max_T is {self.config.max_T}"
            )
        return torch.from_numpy(motion.frames).to(next(self.parameters()).dtype)

    def _cond_tensor(self, cond: SemanticEmbedding) -> torch.Tensor:
        if cond.vector.shape != (self.config.d_emb,):
            raise ShapeError(f"condition has dimension {cond.vector.shape[0]}, expected {self.config.d_emb}")
        return torch.from_numpy(cond.vector).to(next(self.parameters()).dtype)


def reparameterize(dist: LatentDistribution, seed: int) -> LatentSample:
    """z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) from the seed."""
    gen = torch.Generator().manual_seed(seed)
    eps = torch.randn(dist.mu.shape[0], generator=gen, dtype=torch.float64).numpy()
    z = dist.mu + np.exp(0.5 * dist.log_var) * eps
    return LatentSample(z=z, seed=seed)


def reconstruction_loss(m: Motion | np.ndarray, m_hat: Motion | np.ndarray) -> float:
    """Mean over frames of the squared L2 difference of pose vectors."""
    a = m.frames if isinstance(m, Motion) else np.asarray(m)
    b = m_hat.frames if isinstance(m_hat, Motion) else np.asarray(m_hat)
    if a.shape != b.shape:
        raise ShapeError(f"motions must have identical shape, got {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def kl_loss(dist: LatentDistribution) -> float:
    """KL(N(mu, diag(exp(log_var))) || N(0, I)) in closed form; >= 0."""
    return float(0.5 * np.sum(np.exp(dist.log_var) + dist.mu**2 - 1.0 - dist.log_var))


def cvae_loss(m: Motion | np.ndarray, m_hat: Motion | np.ndarray, dist: LatentDistribution, w_kl: float) -> float:
    """Weighted training objective: reconstruction + w_kl * KL."""
    if w_kl < 0:
        raise InvalidArgumentError(f"w_kl must be non-negative, got {w_kl}")
    return reconstruction_loss(m, m_hat) + w_kl * kl_loss(dist)


def reconstruction_loss_batch(
    x: torch.Tensor, x_hat: torch.Tensor, pad_mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Per-sample mean-over-valid-frames squared error, shape (N,)."""
    if x.shape != x_hat.shape:
        raise ShapeError(f"batch shapes differ: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    sq = ((x - x_hat) ** 2).sum(dim=-1)
    if pad_mask is None:
        return sq.mean(dim=-1)
    valid = (~pad_mask).to(sq.dtype)
    return (sq * valid).sum(dim=-1) / valid.sum(dim=-1)


def kl_loss_batch(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """Per-sample KL to the standard normal prior, shape (N,)."""
    return 0.5 * (log_var.exp() + mu**2 - 1.0 - log_var).sum(dim=-1)


@dataclass
class CheckpointBundle:
    """Everything needed to resume or reuse a trained model."""

    model: SignCvae
    epoch: int = 0
    glosses: list[str] = field(default_factory=list)
    optimizer_state: dict | None = None
    train_config: dict | None = None
    torch_rng_state: torch.Tensor | None = None


def save_checkpoint(
    path: str | Path,
    model: SignCvae,
    *,
    epoch: int = 0,
    glosses: list[str] | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    train_config: dict | None = None,
) -> Path:
    """Write a versioned checkpoint archive atomically (temp + rename)."""
    path = Path(path)
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "layout": {
            "name": model.layout.name,
            "joints": list(model.layout.joints),
            "parent_index": list(model.layout.parent_index),
            "channels": model.layout.channels,
        },
        "fps": model.fps,
        "state_dict": model.state_dict(),
        "epoch": epoch,
        "glosses": list(glosses or []),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "train_config": train_config,
        "torch_rng_state": torch.get_rng_state(),
    }
    tmp = path.with_name(path.name + ".tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    """Load a checkpoint archive, rejecting unknown versions."""
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: cannot read checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise FormatError(f"{path}: not a signmotion checkpoint")
    if payload["version"] != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unknown checkpoint version {payload['version']!r}")
    layout = JointLayout(
        name=payload["layout"]["name"],
        joints=tuple(payload["layout"]["joints"]),
        parent_index=tuple(payload["layout"]["parent_index"]),
        channels=payload["layout"]["channels"],
    )
    model = SignCvae(ModelConfig(**payload["model_config"]), layout, fps=payload["fps"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return CheckpointBundle(
        model=model,
        epoch=payload["epoch"],
        glosses=payload["glosses"],
        optimizer_state=payload["optimizer_state"],
        train_config=payload["train_config"],
        torch_rng_state=payload["torch_rng_state"],
    )
