import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signmotion.dataset import (
    ClipRecord,
    DatasetManifest,
    QCAnnotation,
    filter_by_min_samples,
    load_manifest,
    load_qc_sidecar,
    make_split,
    save_manifest,
    select_top_k_subset,
    trim_clip,
)
from signmotion.errors import InvalidAnnotationError, InvalidArgumentError
from signmotion.motion import JointLayout, Motion, read_container, register_layout, write_container

LAYOUT = JointLayout(name="ds_tiny", joints=("root", "arm"), parent_index=(-1, 0))
register_layout(LAYOUT)


def write_clip(tmp_path, clip_id, gloss, t, seed=0):
    rng = np.random.default_rng(seed)
    m = Motion(layout=LAYOUT, frames=rng.normal(size=(t, 6)).astype(np.float32), fps=30.0, gloss=gloss)
    path = write_container(m, tmp_path / f"{clip_id}.smc")
    return ClipRecord(clip_id=clip_id, gloss=gloss, source_path=str(path), frame_count=t), m


def manifest_with_counts(counts: dict[str, int]) -> DatasetManifest:
    records = [
        ClipRecord(clip_id=f"{w}_{i}", gloss=w, source_path=f"{w}_{i}.smc", frame_count=10)
        for w, n in counts.items()
        for i in range(n)
    ]
    return DatasetManifest(records=records)


class TestQCAnnotation:
    def test_empty_range_rejected(self):
        with pytest.raises(InvalidAnnotationError):
            QCAnnotation(keep_start=10, keep_end=10)

    def test_negative_start_rejected(self):
        with pytest.raises(InvalidAnnotationError):
            QCAnnotation(keep_start=-1, keep_end=5)

    def test_unknown_reason_rejected(self):
        with pytest.raises(InvalidAnnotationError):
            QCAnnotation(keep_start=0, keep_end=5, reason="bad")


class TestTrimClip:
    def test_table_clip_48_to_21(self, tmp_path):
        record, original = write_clip(tmp_path, "table_000", "table", t=48, seed=3)
        qc = QCAnnotation(keep_start=0, keep_end=21, reason="trailing_noise")
        out = trim_clip(record, qc, tmp_path / "trimmed")
        assert out.frame_count == 21
        trimmed = read_container(out.source_path)
        assert np.array_equal(trimmed.frames, original.frames[0:21])
        # original untouched
        assert read_container(record.source_path).frame_count == 48

    def test_full_range_is_identity(self, tmp_path):
        record, original = write_clip(tmp_path, "go_000", "go", t=12)
        out = trim_clip(record, QCAnnotation(0, 12), tmp_path / "trimmed")
        assert np.array_equal(read_container(out.source_path).frames, original.frames)

    def test_interior_slice_bit_exact(self, tmp_path):
        record, original = write_clip(tmp_path, "who_000", "who", t=30, seed=9)
        out = trim_clip(record, QCAnnotation(5, 17, "both"), tmp_path / "trimmed")
        assert out.frame_count == 12
        assert np.array_equal(read_container(out.source_path).frames, original.frames[5:17])

    def test_out_of_bounds_rejected(self, tmp_path):
        record, _ = write_clip(tmp_path, "book_000", "book", t=10)
        with pytest.raises(InvalidAnnotationError):
            trim_clip(record, QCAnnotation(0, 11), tmp_path / "trimmed")


class TestFilterByMinSamples:
    def test_threshold_logic(self):
        words = {"drink": 25, "table": 19, "go": 17}
        assert filter_by_min_samples(words, 18) == ["drink", "table"]

    def test_zero_threshold_keeps_all(self):
        words = {"b": 0, "a": 3}
        assert filter_by_min_samples(words, 0) == ["a", "b"]

    def test_negative_count_rejected(self):
        with pytest.raises(InvalidArgumentError):
            filter_by_min_samples({"a": -1}, 0)

    @given(
        st.dictionaries(st.text(min_size=1, max_size=6), st.integers(0, 50), max_size=12),
        st.integers(0, 25),
        st.integers(0, 25),
    )
    @settings(max_examples=100)
    def test_monotone_in_threshold(self, words, t1, t2):
        t1, t2 = min(t1, t2), max(t1, t2)
        assert set(filter_by_min_samples(words, t1)) >= set(filter_by_min_samples(words, t2))


class TestMakeSplit:
    def test_twenty_records_split_16_4(self):
        manifest = manifest_with_counts({"drink": 20})
        out = make_split(manifest, 0.8, seed=0)
        assert len(out.split_records("train")) == 16
        assert len(out.split_records("test")) == 4

    def test_single_record_goes_to_train_with_warning(self):
        manifest = manifest_with_counts({"rare": 1, "drink": 4})
        with pytest.warns(UserWarning, match="rare"):
            out = make_split(manifest, 0.8, seed=0)
        rare = [r for r in out.records if r.gloss == "rare"]
        assert rare[0].split == "train"

    def test_deterministic(self):
        manifest = manifest_with_counts({"a": 7, "b": 12, "c": 20})
        a = make_split(manifest, 0.8, seed=5)
        b = make_split(manifest, 0.8, seed=5)
        assert [(r.clip_id, r.split) for r in a.records] == [(r.clip_id, r.split) for r in b.records]
        c = make_split(manifest, 0.8, seed=6)
        assert [(r.clip_id, r.split) for r in a.records] != [(r.clip_id, r.split) for r in c.records]

    def test_invalid_ratio(self):
        manifest = manifest_with_counts({"a": 4})
        for ratio in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(InvalidArgumentError):
                make_split(manifest, ratio, seed=0)

    @pytest.mark.parametrize("n", range(1, 51))
    def test_per_word_floor_rule_all_sizes(self, n):
        manifest = manifest_with_counts({"w": n})
        if n == 1:
            with pytest.warns(UserWarning):
                out = make_split(manifest, 0.8, seed=1)
        else:
            out = make_split(manifest, 0.8, seed=1)
        n_train = len(out.split_records("train"))
        n_test = len(out.split_records("test"))
        expected_train = n if n == 1 else max(int(np.floor(0.8 * n)), 1)
        assert n_train == expected_train
        assert n_train + n_test == n

    @given(
        st.dictionaries(st.sampled_from(["a", "b", "c", "d"]), st.integers(2, 30), min_size=1),
        st.floats(0.05, 0.95),
        st.integers(0, 1000),
    )
    @settings(max_examples=60)
    def test_split_counts_property(self, counts, ratio, seed):
        manifest = manifest_with_counts(counts)
        out = make_split(manifest, ratio, seed)
        for word, n in counts.items():
            train_w = [r for r in out.split_records("train") if r.gloss == word]
            test_w = [r for r in out.split_records("test") if r.gloss == word]
            assert len(train_w) == max(int(np.floor(ratio * n)), 1)
            assert len(train_w) + len(test_w) == n


class TestSelectTopK:
    def test_orders_by_count(self):
        manifest = manifest_with_counts({"a": 5, "b": 7, "c": 6})
        out = select_top_k_subset(manifest, 2)
        assert set(out.words) == {"b", "c"}

    def test_tie_breaks_lexicographic(self):
        manifest = manifest_with_counts({"zed": 5, "ant": 5, "mid": 9})
        out = select_top_k_subset(manifest, 2)
        assert set(out.words) == {"mid", "ant"}

    def test_full_selection_is_identity(self):
        manifest = manifest_with_counts({"a": 2, "b": 3})
        out = select_top_k_subset(manifest, 2)
        assert out.words == manifest.words

    def test_k_too_large(self):
        manifest = manifest_with_counts({"a": 2})
        with pytest.raises(InvalidArgumentError):
            select_top_k_subset(manifest, 2)


class TestManifestIO:
    def test_roundtrip(self, tmp_path):
        manifest = manifest_with_counts({"go": 3, "book": 2})
        manifest.records[0] = replace(manifest.records[0], qc=QCAnnotation(1, 8, "leading_silence"))
        manifest = make_split(manifest, 0.8, seed=2)
        path = save_manifest(manifest, tmp_path / "manifest.json")
        back = load_manifest(path)
        assert back.seed == 2 and back.ratio == 0.8
        assert [(r.clip_id, r.split) for r in back.records] == [(r.clip_id, r.split) for r in manifest.records]
        assert back.records[0].qc == manifest.records[0].qc

    def test_duplicate_clip_ids_rejected(self):
        rec = ClipRecord(clip_id="x", gloss="a", source_path="x.smc", frame_count=3)
        with pytest.raises(InvalidArgumentError):
            DatasetManifest(records=[rec, replace(rec)])

    def test_qc_sidecar(self, tmp_path):
        path = tmp_path / "qc.json"
        path.write_text(
            json.dumps({"clip_a": {"keep_start": 0, "keep_end": 21, "reason": "trailing_noise"}})
        )
        qc = load_qc_sidecar(path)
        assert qc["clip_a"] == QCAnnotation(0, 21, "trailing_noise")

    def test_words_map_consistent(self):
        manifest = manifest_with_counts({"a": 2, "b": 5})
        assert manifest.words == {"a": 2, "b": 5}
