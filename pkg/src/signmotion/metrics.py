"""Distribution metrics over classifier features, and the full report grid.

The subset draws behind diversity and multimodality use an exhaustively
enumerable generator: the seed is mapped through an affine bijection onto a
pairing index (a permutation rank, or a base-n digit string when sampling
with replacement) and unranked. For a pool of size n with disjoint sampling,
seeds 0 .. n!-1 therefore visit every ordering exactly once, so averaging the
estimator over that sweep reproduces the exhaustive-pairing expectation to
floating-point precision. Any other seed is reduced modulo the outcome count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import TrainedClassifier, accuracy
from .errors import ConfigError, InsufficientDataError, InvalidArgumentError, ShapeError
from .motion import Motion

GROUPS = ("raw", "rec", "gen")
SPLITS = ("train", "test")

# 2**61 - 1 is prime, hence coprime to every n! with n < 2**61: for a fixed
# salt, seed -> pairing index is a bijection modulo the outcome count.
_MULTIPLIER = 2**61 - 1
_OFFSET = 0x9E3779B97F4A7C15
_SALT_STEP = 0xC2B2AE3D27D4EB4F


@dataclass
class EvalConfig:
    s_d: int = 200
    s_l: int = 20
    c: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.s_d < 2:
            raise ConfigError(f"s_d must be >= 2, got {self.s_d}")
        if self.s_l < 2:
            raise ConfigError(f"s_l must be >= 2, got {self.s_l}")


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square
    root computed through the symmetric product S1^(1/2) S2 S1^(1/2) and
    negative eigenvalues clipped at zero.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("feature sets must be 2-D (n_samples, dim)")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InsufficientDataError("need at least 2 feature vectors per set to fit a Gaussian")
    mu1, mu2 = a.mean(axis=0), b.mean(axis=0)
    cov1 = np.atleast_2d(np.cov(a, rowvar=False))
    cov2 = np.atleast_2d(np.cov(b, rowvar=False))
    return frechet_distance(mu1, cov1, mu2, cov2)


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray) -> float:
    """Closed-form squared Frechet distance between two Gaussians."""
    diff = np.asarray(mu1, dtype=np.float64) - np.asarray(mu2, dtype=np.float64)
    sq1 = _sqrtm_psd(np.asarray(cov1, dtype=np.float64))
    inner = sq1 @ np.asarray(cov2, dtype=np.float64) @ sq1
    eigs = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    trace_sqrt = float(np.sqrt(eigs).sum())
    value = float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def paired_distance_mean(a: np.ndarray, b: np.ndarray) -> float:
    """Mean L2 distance over row pairs; the common core of both estimators."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"paired subsets must have equal shape, got {a.shape} vs {b.shape}")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def diversity(features: np.ndarray, s_d: int, seed: int) -> float:
    """Mean distance between two seeded same-size feature subsets.

    Subsets are disjoint when the pool holds at least 2 * s_d vectors and
    drawn with replacement otherwise (flagged by :func:`needs_replacement`).
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise InsufficientDataError("feature set is empty")
    if s_d < 1:
        raise InvalidArgumentError(f"subset size must be >= 1, got {s_d}")
    a, b = _paired_subsets(feats, s_d, seed, salt=0)
    return paired_distance_mean(a, b)


def multimodality(features_by_word: dict[str, np.ndarray], c: int | None, s_l: int, seed: int) -> float:
    """Mean within-word distance over per-word subset pairs.

    Uses the first ``c`` words in lexicographic order (all words when c is
    None); each word's pairing draw is salted by its position so the draws
    are independent across words.
    """
    words = sorted(features_by_word)
    if not words:
        raise InsufficientDataError("no word feature sets supplied")
    if c is None:
        c = len(words)
    if c > len(words):
        raise InvalidArgumentError(f"C={c} exceeds the {len(words)} available words")
    if s_l < 1:
        raise InvalidArgumentError(f"subset size must be >= 1, got {s_l}")
    total = 0.0
    for ci, word in enumerate(words[:c]):
        feats = np.asarray(features_by_word[word], dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise InsufficientDataError(f"word {word!r} has no feature vectors")
        a, b = _paired_subsets(feats, s_l, seed, salt=ci + 1)
        total += float(np.sum(np.linalg.norm(a - b, axis=1)))
    return total / (c * s_l)


def needs_replacement(pool_size: int, subset_size: int) -> bool:
    """True when disjoint subset sampling is impossible for this pool."""
    return pool_size < 2 * subset_size


@dataclass
class CellMetrics:
    """One (group, split) row of the evaluation grid."""

    accuracy: float
    fid: float
    diversity: float
    multimodality: float
    diversity_gap: float
    multimodality_gap: float
    diversity_with_replacement: bool = False
    multimodality_with_replacement: bool = False


@dataclass
class EvalReport:
    """Accuracy / FID / diversity / multimodality per group x split."""

    config: EvalConfig
    cells: dict[str, CellMetrics] = field(default_factory=dict)

    def cell(self, group: str, split: str) -> CellMetrics:
        return self.cells[f"{group}_{split}"]

    def to_dict(self) -> dict:
        return {
            "config": {"s_d": self.config.s_d, "s_l": self.config.s_l, "c": self.config.c, "seed": self.config.seed},
            "cells": {k: vars(v).copy() for k, v in self.cells.items()},
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        report = cls(config=EvalConfig(**payload["config"]))
        report.cells = {k: CellMetrics(**v) for k, v in payload["cells"].items()}
        return report


def full_report(
    classifier: TrainedClassifier,
    groups: dict[tuple[str, str], list[Motion]],
    config: EvalConfig | None = None,
) -> EvalReport:
    """Score all six motion groups against the split-matched raw reference.

    FID for a split compares against that split's raw features; raw rows are
    zero by definition. Diversity and multimodality report the absolute gap
    to the raw row alongside each value.
    """
    config = config or EvalConfig()
    missing = [f"{g}_{s}" for g in GROUPS for s in SPLITS if (g, s) not in groups]
    if missing:
        raise ConfigError(f"missing motion groups: {missing}")

    report = EvalReport(config=config)
    for split in SPLITS:
        feats = {}
        values = {}
        for group in GROUPS:
            motions = groups[(group, split)]
            if not motions:
                raise ConfigError(f"group {group}_{split} is empty")
            labels = [m.gloss for m in motions]
            if any(l is None for l in labels):
                raise ConfigError(f"group {group}_{split} contains motions without a gloss")
            f = classifier.features(motions)
            by_word: dict[str, np.ndarray] = {}
            for label, row in zip(labels, f):
                by_word.setdefault(label, []).append(row)
            by_word = {w: np.asarray(rows) for w, rows in by_word.items()}
            feats[group] = f
            values[group] = {
                "accuracy": accuracy(classifier, motions, labels),
                "diversity": diversity(f, config.s_d, config.seed),
                "multimodality": multimodality(by_word, config.c, config.s_l, config.seed),
                "div_flag": needs_replacement(len(f), config.s_d),
                "multi_flag": any(needs_replacement(len(v), config.s_l) for v in by_word.values()),
            }
        raw = values["raw"]
        for group in GROUPS:
            v = values[group]
            report.cells[f"{group}_{split}"] = CellMetrics(
                accuracy=v["accuracy"],
                fid=0.0 if group == "raw" else fid(feats[group], feats["raw"]),
                diversity=v["diversity"],
                multimodality=v["multimodality"],
                diversity_gap=abs(v["diversity"] - raw["diversity"]),
                multimodality_gap=abs(v["multimodality"] - raw["multimodality"]),
                diversity_with_replacement=v["div_flag"],
                multimodality_with_replacement=v["multi_flag"],
            )
    return report


def _paired_subsets(feats: np.ndarray, size: int, seed: int, salt: int) -> tuple[np.ndarray, np.ndarray]:
    n = feats.shape[0]
    if needs_replacement(n, size):
        space = n ** (2 * size)
        index = _pairing_index(seed, salt, space)
        picks = np.empty(2 * size, dtype=np.int64)
        for i in range(2 * size):
            index, picks[i] = divmod(index, n)
        return feats[picks[:size]], feats[picks[size:]]
    perm = _pairing_permutation(n, seed, salt)
    return feats[perm[:size]], feats[perm[size : 2 * size]]


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, eigenvalues clipped at 0."""
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _pairing_index(seed: int, salt: int, space: int) -> int:
    return (_MULTIPLIER * seed + _OFFSET + _SALT_STEP * salt) % space


def _pairing_permutation(n: int, seed: int, salt: int) -> np.ndarray:
    """The documented seed -> permutation map (affine bijection + unranking)."""
    return _unrank_permutation(_pairing_index(seed, salt, math.factorial(n)), n)


def _unrank_permutation(index: int, n: int) -> np.ndarray:
    """Decode a Lehmer rank in [0, n!) into the permutation of that rank."""
    items = list(range(n))
    out = np.empty(n, dtype=np.int64)
    f = math.factorial(n - 1) if n > 1 else 1
    for i in range(n):
        d, index = divmod(index, f)
        out[i] = items.pop(d)
        remaining = n - 1 - i
        if remaining > 1:
            f //= remaining
    return out
