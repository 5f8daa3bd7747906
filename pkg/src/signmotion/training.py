"""Curriculum masked training: the mask schedule, masking op, and train loop.

The curriculum progressively raises the fraction of masked input frames as
epochs advance; the model must still reconstruct the complete sequence, so
the loss target is always the unmasked motion.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import DatasetManifest
from .embeddings import EmbeddingService
from .errors import ConfigError, InvalidArgumentError, StateError
from .model import (
    ModelConfig,
    SignCvae,
    kl_loss_batch,
    reconstruction_loss_batch,
    save_checkpoint,
)
from .motion import Motion, convert_channels, read_container

# floor(r * T) is evaluated with this slack so decimal ratios that are not
# exactly representable (0.3 * 10 = 2.999...96 in float64) floor as written.
_FLOOR_EPS = 1e-9


@dataclass
class TrainConfig:
    epochs: int = 5000
    batch_size: int = 16
    learning_rate: float = 1e-4
    w_kl: float = 1e-5
    seed: int = 0
    curriculum_enabled: bool = True
    checkpoint_every: int = 500
    mask_step: int = 500
    mask_increment: float = 0.1
    mask_cap: float = 0.6

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.mask_cap <= 1.0:
            raise ConfigError(f"mask_cap must be in [0, 1], got {self.mask_cap}")
        if self.mask_increment <= 0:
            raise ConfigError(f"mask_increment must be > 0, got {self.mask_increment}")
        if self.mask_step < 1:
            raise ConfigError(f"mask_step must be >= 1, got {self.mask_step}")
        if self.w_kl < 0:
            raise ConfigError(f"w_kl must be non-negative, got {self.w_kl}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")


def mask_ratio_schedule(epoch: int, step: int = 500, increment: float = 0.1, cap: float = 0.6) -> float:
    """Masking-ratio growth: min(increment * floor(epoch / step), cap)."""
    if epoch < 0:
        raise InvalidArgumentError(f"epoch must be non-negative, got {epoch}")
    return min(increment * (epoch // step), cap)


@dataclass
class MaskedMotion:
    """A motion plus the frame flags the model should replace by its mask token.

    The frames themselves are untouched: the reconstruction target remains
    the complete original sequence.
    """

    motion: Motion
    frame_mask: np.ndarray


@dataclass
class MaskPlan:
    """Per-epoch record of the ratio and each sample's masked frame set."""

    epoch: int
    ratio: float
    masked_indices: dict[str, np.ndarray] = field(default_factory=dict)


def apply_mask(motion: Motion, ratio: float, seed: int) -> tuple[MaskedMotion, np.ndarray]:
    """Pick floor(ratio * T) distinct frames to mask, uniformly via the seed.

    Returns the flagged motion and the sorted masked-index array.
    """
    indices = mask_indices(motion.frame_count, ratio, seed)
    mask = np.zeros(motion.frame_count, dtype=bool)
    mask[indices] = True
    return MaskedMotion(motion=motion, frame_mask=mask), indices


def mask_indices(t: int, ratio: float, seed: int) -> np.ndarray:
    """The sorted frame indices apply_mask would flag for a length-t clip."""
    if not 0.0 <= ratio <= 1.0:
        raise InvalidArgumentError(f"mask ratio must be in [0, 1], got {ratio}")
    n_masked = int(math.floor(ratio * t + _FLOOR_EPS))
    if n_masked == 0:
        return np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(t, size=n_masked, replace=False)).astype(np.int64)


@dataclass
class TrainResult:
    model: SignCvae
    checkpoint_paths: list[Path]
    log_path: Path
    rows: list[dict]


@dataclass
class _Sample:
    clip_id: str
    gloss: str
    frames: np.ndarray  # (T, pose_dim) float32, sixd channels
    cond: np.ndarray  # (d_emb,) float64


def load_train_samples(
    manifest: DatasetManifest,
    embeddings: EmbeddingService,
    split: str = "train",
) -> list[_Sample]:
    """Read, convert to sixd, and attach condition vectors; stable order.

    Raises ConfigError before any training if a gloss has no embedding or the
    requested split is empty.
    """
    records = manifest.split_records(split)
    if not records:
        raise ConfigError(f"manifest has no records in split {split!r}; run make_split first")
    cond_by_gloss: dict[str, np.ndarray] = {}
    for gloss in sorted({r.gloss for r in records}):
        try:
            cond_by_gloss[gloss] = embeddings.embed_text(gloss).vector
        except Exception as exc:
            raise ConfigError(f"no embedding available for gloss {gloss!r}: {exc}") from exc
    samples = []
    for rec in sorted(records, key=lambda r: r.clip_id):
        motion = convert_channels(read_container(rec.source_path), "sixd")
        samples.append(
            _Sample(clip_id=rec.clip_id, gloss=rec.gloss, frames=motion.frames, cond=cond_by_gloss[rec.gloss])
        )
    return samples


def train(
    manifest: DatasetManifest,
    model_config: ModelConfig,
    train_config: TrainConfig,
    embeddings: EmbeddingService,
    out_dir: str | Path,
    *,
    layout=None,
    fps: float = 30.0,
    log_name: str = "train_log.csv",
) -> TrainResult:
    """Run the full seeded training loop; returns the model and artifacts.

    Deterministic given (manifest, configs, seed): data order, masking, and
    latent noise all derive from the config seed, and torch runs single-
    threaded so reduction order is fixed.
    """
    from .motion import UPPER_BODY_52

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = layout if layout is not None else UPPER_BODY_52

    samples = load_train_samples(manifest, embeddings)
    max_t = max(s.frames.shape[0] for s in samples)
    if max_t > model_config.max_T:
        raise ConfigError(f"longest training clip has {max_t} frames, model max_T is {model_config.max_T}")

    torch.manual_seed(train_config.seed)
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        model = SignCvae(model_config, layout, fps=fps)
        model.train()
        optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
        glosses = sorted({s.gloss for s in samples})

        order_rng = np.random.default_rng([train_config.seed, 1])
        n = len(samples)
        rows: list[dict] = []
        checkpoints: list[Path] = []
        log_path = out_dir / log_name
        with open(log_path, "w", encoding="utf-8") as log:
            log.write("epoch,mask_ratio,rec_loss,kl_loss,total_loss\n")
            for epoch in range(train_config.epochs):
                ratio = (
                    mask_ratio_schedule(
                        epoch, train_config.mask_step, train_config.mask_increment, train_config.mask_cap
                    )
                    if train_config.curriculum_enabled
                    else 0.0
                )
                plan = _plan_masks(samples, epoch, ratio, train_config.seed)
                perm = order_rng.permutation(n)
                rec_sum = kl_sum = 0.0
                for b, start in enumerate(range(0, n, train_config.batch_size)):
                    batch = [samples[i] for i in perm[start : start + train_config.batch_size]]
                    rec, kl = _train_step(model, optimizer, batch, plan, train_config, epoch, b)
                    if not (math.isfinite(rec) and math.isfinite(kl)):
                        raise StateError(
                            f"non-finite loss at epoch {epoch}, batch {b}: rec={rec!r}, kl={kl!r}"
                        )
                    rec_sum += rec * len(batch)
                    kl_sum += kl * len(batch)
                rec_mean = rec_sum / n
                kl_mean = kl_sum / n
                total = rec_mean + train_config.w_kl * kl_mean
                rows.append(
                    {"epoch": epoch, "mask_ratio": ratio, "rec_loss": rec_mean, "kl_loss": kl_mean, "total_loss": total}
                )
                log.write(f"{epoch},{ratio!r},{rec_mean!r},{kl_mean!r},{total!r}\n")
                if (epoch + 1) % train_config.checkpoint_every == 0 and epoch + 1 < train_config.epochs:
                    ckpt = out_dir / f"checkpoint_ep{epoch + 1:06d}.pt"
                    save_checkpoint(
                        ckpt, model, epoch=epoch + 1, glosses=glosses,
                        optimizer=optimizer, train_config=asdict(train_config),
                    )
                    checkpoints.append(ckpt)
        final = out_dir / "checkpoint_final.pt"
        save_checkpoint(
            final, model, epoch=train_config.epochs, glosses=glosses,
            optimizer=optimizer, train_config=asdict(train_config),
        )
        checkpoints.append(final)
        model.eval()
        return TrainResult(model=model, checkpoint_paths=checkpoints, log_path=log_path, rows=rows)
    finally:
        torch.set_num_threads(n_threads)


def _plan_masks(samples: list[_Sample], epoch: int, ratio: float, seed: int) -> MaskPlan:
    plan = MaskPlan(epoch=epoch, ratio=ratio)
    for i, s in enumerate(samples):
        plan.masked_indices[s.clip_id] = mask_indices(s.frames.shape[0], ratio, _derive_seed(seed, 2, epoch, i))
    return plan


def _train_step(
    model: SignCvae,
    optimizer: torch.optim.Optimizer,
    batch: list[_Sample],
    plan: MaskPlan,
    cfg: TrainConfig,
    epoch: int,
    batch_index: int,
) -> tuple[float, float]:
    n = len(batch)
    t_max = max(s.frames.shape[0] for s in batch)
    frames = torch.zeros(n, t_max, batch[0].frames.shape[1])
    pad = torch.ones(n, t_max, dtype=torch.bool)
    fmask = torch.zeros(n, t_max, dtype=torch.bool)
    cond = torch.zeros(n, batch[0].cond.shape[0])
    for i, s in enumerate(batch):
        t = s.frames.shape[0]
        frames[i, :t] = torch.from_numpy(s.frames)
        pad[i, :t] = False
        idx = plan.masked_indices[s.clip_id]
        if len(idx):
            fmask[i, idx] = True
        cond[i] = torch.from_numpy(s.cond).float()

    optimizer.zero_grad()
    mu, log_var = model.encode_batch(frames, cond, pad_mask=pad, frame_mask=fmask)
    gen = torch.Generator().manual_seed(_derive_seed(cfg.seed, 3, epoch, batch_index))
    eps = torch.randn(mu.shape, generator=gen)
    z = mu + torch.exp(0.5 * log_var) * eps
    out = model.decode_batch(z, cond, t_max, pad_mask=pad)
    rec = reconstruction_loss_batch(frames, out, pad_mask=pad).mean()
    kl = kl_loss_batch(mu, log_var).mean()
    loss = rec + cfg.w_kl * kl
    loss.backward()
    optimizer.step()
    return float(rec.detach()), float(kl.detach())


def _derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from a tuple of integers."""
    digest = hashlib.sha256(",".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
