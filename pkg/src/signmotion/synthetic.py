"""Procedurally generated toy sign words for desk-scale experiments.

Each word is a family of smooth per-joint oscillations with word-specific
axes, frequencies, and amplitudes on the signing-relevant joints; samples
within a word vary by phase, amplitude scale, and additive noise. The
patterns are distinct enough for a classifier to separate while remaining
learnable by a small generative model on a CPU.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dataset import ClipRecord, DatasetManifest, save_manifest
from .motion import UPPER_BODY_52, JointLayout, Motion, write_container

TOY_WORDS = ("drink", "book", "go", "table", "help", "computer", "before", "who", "walk", "thin")

_ACTIVE_JOINTS = (
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_collar", "right_collar",
)


def toy_gloss_list(n_words: int) -> list[str]:
    words = list(TOY_WORDS[:n_words])
    words += [f"word_{i:02d}" for i in range(len(words), n_words)]
    return words


def make_toy_motion(
    word: str,
    sample_index: int,
    t: int = 30,
    seed: int = 0,
    layout: JointLayout = UPPER_BODY_52,
    fps: float = 30.0,
    noise: float = 0.01,
) -> Motion:
    """One sample of a toy word as an axis-angle motion."""
    word_rng = np.random.default_rng([seed, _digest(word)])
    sample_rng = np.random.default_rng([seed, _digest(word), sample_index])

    j = layout.joint_count
    axes = word_rng.normal(size=(j, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    freq = word_rng.integers(1, 4, size=j).astype(np.float64)
    phase = word_rng.uniform(0.0, 2.0 * np.pi, size=j)
    amp = word_rng.uniform(0.01, 0.05, size=j)
    active = [i for i, name in enumerate(layout.joints) if name in _ACTIVE_JOINTS]
    amp[active] = word_rng.uniform(0.35, 0.9, size=len(active))
    hands = [i for i, name in enumerate(layout.joints) if "index" in name or "thumb" in name or "middle" in name]
    amp[hands] = word_rng.uniform(0.15, 0.5, size=len(hands))

    scale = sample_rng.uniform(0.9, 1.1)
    dphase = sample_rng.uniform(-0.3, 0.3)
    times = np.arange(t)[:, None] / max(t, 1)
    angles = amp[None, :] * scale * np.sin(2.0 * np.pi * freq[None, :] * times + phase[None, :] + dphase)
    aa = angles[:, :, None] * axes[None, :, :]
    if noise > 0:
        aa = aa + sample_rng.normal(scale=noise, size=aa.shape)
    return Motion(layout=layout.with_channels("axis_angle"), frames=aa.reshape(t, j * 3), fps=fps, gloss=word)


def make_toy_motions(
    n_words: int = 5,
    samples_per_word: int = 8,
    t: int = 30,
    seed: int = 0,
    layout: JointLayout = UPPER_BODY_52,
) -> list[Motion]:
    words = toy_gloss_list(n_words)
    return [
        make_toy_motion(w, i, t=t, seed=seed, layout=layout)
        for w in words
        for i in range(samples_per_word)
    ]


def write_toy_dataset(
    out_dir: str | Path,
    n_words: int = 5,
    samples_per_word: int = 8,
    t: int = 30,
    seed: int = 0,
    noise_tail: int = 0,
) -> Path:
    """Write toy containers plus a manifest (and QC sidecar if noise_tail > 0).

    With ``noise_tail`` > 0 every clip gets that many trailing frames borrowed
    from the next word's pattern, and the QC sidecar marks [0, t) as the keep
    range, mimicking trailing-noise cleanup.
    """
    out_dir = Path(out_dir)
    clips_dir = out_dir / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)
    words = toy_gloss_list(n_words)
    records = []
    qc = {}
    for w_idx, word in enumerate(words):
        for i in range(samples_per_word):
            motion = make_toy_motion(word, i, t=t, seed=seed)
            if noise_tail > 0:
                other = words[(w_idx + 1) % len(words)]
                tail = make_toy_motion(other, i, t=noise_tail, seed=seed)
                motion = Motion(
                    layout=motion.layout,
                    frames=np.vstack([motion.frames, tail.frames]),
                    fps=motion.fps,
                    gloss=word,
                )
            clip_id = f"{word}_{i:03d}"
            path = write_container(motion, clips_dir / f"{clip_id}.smc")
            records.append(
                ClipRecord(
                    clip_id=clip_id,
                    gloss=word,
                    source_path=str(path),
                    frame_count=motion.frame_count,
                )
            )
            if noise_tail > 0:
                qc[clip_id] = {"keep_start": 0, "keep_end": t, "reason": "trailing_noise"}
    manifest_path = save_manifest(DatasetManifest(records=records), out_dir / "manifest.json")
    if qc:
        (out_dir / "qc.json").write_text(json.dumps(qc, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def _digest(word: str) -> int:
    return int.from_bytes(hashlib.sha256(word.encode("utf-8")).digest()[:8], "big")
