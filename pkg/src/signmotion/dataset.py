"""Dataset curation: trimming, balancing, and splitting word/motion clips.

The raw input is a manifest of clip records, each pointing at a motion
container produced by an upstream pose estimator, plus an optional sidecar of
manual quality-control annotations marking the frames worth keeping.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidAnnotationError, InvalidArgumentError
from .motion import JointLayout, Motion, read_container, write_container

QC_REASONS = ("trailing_noise", "leading_silence", "both", "none")

SPLITS = ("unassigned", "train", "test")


@dataclass(frozen=True)
class QCAnnotation:
    """Manual keep-range for one clip: frames [keep_start, keep_end)."""

    keep_start: int
    keep_end: int
    reason: str = "none"

    def __post_init__(self) -> None:
        if self.reason not in QC_REASONS:
            raise InvalidAnnotationError(f"unknown QC reason {self.reason!r}")
        if not 0 <= self.keep_start < self.keep_end:
            raise InvalidAnnotationError(
                f"keep range [{self.keep_start}, {self.keep_end}) is empty or negative"
            )


@dataclass
class ClipRecord:
    """One curated clip: a gloss label plus its container file."""

    clip_id: str
    gloss: str
    source_path: str
    frame_count: int
    qc: QCAnnotation | None = None
    split: str = "unassigned"

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise InvalidArgumentError(f"clip {self.clip_id!r}: frame_count must be >= 1")
        if self.split not in SPLITS:
            raise InvalidArgumentError(f"clip {self.clip_id!r}: unknown split {self.split!r}")


@dataclass
class DatasetManifest:
    """The full record set plus the split parameters it was built with."""

    records: list[ClipRecord] = field(default_factory=list)
    seed: int | None = None
    ratio: float | None = None

    def __post_init__(self) -> None:
        ids = [r.clip_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("clip_ids must be unique")

    @property
    def words(self) -> dict[str, int]:
        """Gloss -> sample count, derived from the records."""
        return dict(Counter(r.gloss for r in self.records))

    def by_word(self) -> dict[str, list[ClipRecord]]:
        out: dict[str, list[ClipRecord]] = {}
        for r in self.records:
            out.setdefault(r.gloss, []).append(r)
        return out

    def split_records(self, split: str) -> list[ClipRecord]:
        return [r for r in self.records if r.split == split]


def trim_clip(
    record: ClipRecord,
    qc: QCAnnotation,
    out_dir: str | Path,
    layout: JointLayout | None = None,
) -> ClipRecord:
    """Cut a clip to its QC keep-range, writing a new container.

    The original file is untouched; the trimmed payload is the bit-exact
    slice of the original frames. Returns the updated record.
    """
    if not qc.keep_end <= record.frame_count:
        raise InvalidAnnotationError(
            f"clip {record.clip_id!r}: keep range [{qc.keep_start}, {qc.keep_end}) "
            f"out of bounds for {record.frame_count} frames"
        )
    motion = read_container(record.source_path, layout=layout)
    if motion.frame_count != record.frame_count:
        raise FormatError(
            f"clip {record.clip_id!r}: record frame_count {record.frame_count} "
            f"disagrees with container T {motion.frame_count}"
        )
    trimmed = Motion(
        layout=motion.layout,
        frames=motion.frames[qc.keep_start : qc.keep_end],
        fps=motion.fps,
        gloss=motion.gloss,
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{record.clip_id}.smc"
    write_container(trimmed, out_path)
    return replace(
        record,
        source_path=str(out_path),
        frame_count=trimmed.frame_count,
        qc=qc,
    )


def filter_by_min_samples(words: dict[str, int], threshold: int) -> list[str]:
    """Words with at least ``threshold`` samples, in lexicographic order."""
    if any(c < 0 for c in words.values()):
        raise InvalidArgumentError("sample counts must be non-negative")
    return sorted(w for w, c in words.items() if c >= threshold)


def make_split(manifest: DatasetManifest, ratio: float, seed: int) -> DatasetManifest:
    """Assign every record to train or test, stratified per word.

    Each word's clips are shuffled with a seed derived from (seed, word) and
    the first ``max(floor(ratio * n), 1)`` go to train (a word with a single
    clip goes entirely to train, with a warning). The assignment is a pure
    function of (manifest, ratio, seed).
    """
    if not 0.0 < ratio < 1.0:
        raise InvalidArgumentError(f"ratio must be in (0, 1), got {ratio}")
    assigned: dict[str, str] = {}
    for word, recs in sorted(manifest.by_word().items()):
        ids = sorted(r.clip_id for r in recs)
        n = len(ids)
        if n == 1:
            warnings.warn(f"word {word!r} has a single record; assigning it to train")
            n_train = 1
        else:
            n_train = max(int(np.floor(ratio * n)), 1)
        rng = np.random.default_rng([seed, _word_digest(word)])
        perm = rng.permutation(n)
        for rank, idx in enumerate(perm):
            assigned[ids[idx]] = "train" if rank < n_train else "test"
    records = [replace(r, split=assigned[r.clip_id]) for r in manifest.records]
    return DatasetManifest(records=records, seed=seed, ratio=ratio)


def select_top_k_subset(manifest: DatasetManifest, k: int) -> DatasetManifest:
    """Keep only the k words with the most samples (ties: lexicographic)."""
    counts = manifest.words
    if k > len(counts):
        raise InvalidArgumentError(f"k={k} exceeds the {len(counts)} available words")
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    keep = set(ranked[:k])
    records = [replace(r) for r in manifest.records if r.gloss in keep]
    return DatasetManifest(records=records, seed=manifest.seed, ratio=manifest.ratio)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    payload = {
        "seed": manifest.seed,
        "ratio": manifest.ratio,
        "records": [
            {
                "clip_id": r.clip_id,
                "gloss": r.gloss,
                "source_path": r.source_path,
                "frame_count": r.frame_count,
                "qc": None
                if r.qc is None
                else {"keep_start": r.qc.keep_start, "keep_end": r.qc.keep_end, "reason": r.qc.reason},
                "split": r.split,
            }
            for r in manifest.records
        ],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed manifest JSON: {exc}") from exc
    if "records" not in payload:
        raise FormatError(f"{path}: manifest missing 'records'")
    records = []
    for item in payload["records"]:
        try:
            qc = item.get("qc")
            records.append(
                ClipRecord(
                    clip_id=item["clip_id"],
                    gloss=item["gloss"],
                    source_path=item["source_path"],
                    frame_count=item["frame_count"],
                    qc=None if qc is None else QCAnnotation(**qc),
                    split=item.get("split", "unassigned"),
                )
            )
        except KeyError as exc:
            raise FormatError(f"{path}: record missing field {exc}") from exc
    return DatasetManifest(records=records, seed=payload.get("seed"), ratio=payload.get("ratio"))


def load_qc_sidecar(path: str | Path) -> dict[str, QCAnnotation]:
    """QC sidecar JSON: clip_id -> {keep_start, keep_end, reason}."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed QC sidecar JSON: {exc}") from exc
    out = {}
    for clip_id, item in payload.items():
        try:
            out[clip_id] = QCAnnotation(
                keep_start=item["keep_start"], keep_end=item["keep_end"], reason=item.get("reason", "none")
            )
        except KeyError as exc:
            raise FormatError(f"{path}: QC entry {clip_id!r} missing field {exc}") from exc
    return out


def _word_digest(word: str) -> int:
    """Stable 64-bit digest so per-word shuffles are platform-independent."""
    return int.from_bytes(hashlib.sha256(word.encode("utf-8")).digest()[:8], "big")
