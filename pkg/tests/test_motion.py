import numpy as np
import pytest

from signmotion.errors import FormatError, InvalidArgumentError, ShapeError
from signmotion.motion import (
    UPPER_BODY_52,
    JointLayout,
    Motion,
    convert_channels,
    fix_lower_body_rest,
    read_container,
    register_layout,
    resample,
    write_container,
)


@pytest.fixture
def tiny_layout():
    return JointLayout(name="tiny3", joints=("root", "a", "b"), parent_index=(-1, 0, 1))


def make_motion(layout, t=4, seed=0, gloss="drink"):
    rng = np.random.default_rng(seed)
    frames = rng.normal(scale=0.3, size=(t, layout.frame_size)).astype(np.float32)
    return Motion(layout=layout, frames=frames, fps=30.0, gloss=gloss)


class TestJointLayout:
    def test_upper_body_layout_sizes(self):
        assert UPPER_BODY_52.joint_count == 52
        assert UPPER_BODY_52.frame_size == 156
        assert UPPER_BODY_52.with_channels("sixd").frame_size == 312
        assert UPPER_BODY_52.with_channels("matrix").frame_size == 468

    def test_parents_precede_children(self):
        for i, p in enumerate(UPPER_BODY_52.parent_index):
            assert -1 <= p < i

    def test_hand_chains_attach_to_wrists(self):
        joints = UPPER_BODY_52.joints
        lw = joints.index("left_wrist")
        rw = joints.index("right_wrist")
        assert UPPER_BODY_52.parent_index[joints.index("left_index1")] == lw
        assert UPPER_BODY_52.parent_index[joints.index("right_thumb1")] == rw

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgumentError):
            JointLayout(name="x", joints=(), parent_index=())

    def test_rejects_duplicate_names(self):
        with pytest.raises(InvalidArgumentError):
            JointLayout(name="x", joints=("a", "a"), parent_index=(-1, 0))

    def test_rejects_forward_reference(self):
        with pytest.raises(InvalidArgumentError):
            JointLayout(name="x", joints=("a", "b"), parent_index=(1, -1))

    def test_rejects_self_parent(self):
        with pytest.raises(InvalidArgumentError):
            JointLayout(name="x", joints=("a", "b"), parent_index=(-1, 1))

    def test_rejects_unknown_channels(self):
        with pytest.raises(InvalidArgumentError):
            JointLayout(name="x", joints=("a",), parent_index=(-1,), channels="euler")


class TestMotion:
    def test_rejects_non_finite_frames(self, tiny_layout):
        frames = np.zeros((2, tiny_layout.frame_size))
        frames[1, 0] = np.nan
        with pytest.raises(InvalidArgumentError):
            Motion(layout=tiny_layout, frames=frames, fps=30.0)

    def test_rejects_wrong_width(self, tiny_layout):
        with pytest.raises(ShapeError):
            Motion(layout=tiny_layout, frames=np.zeros((2, 7)), fps=30.0)

    def test_rejects_empty(self, tiny_layout):
        with pytest.raises(InvalidArgumentError):
            Motion(layout=tiny_layout, frames=np.zeros((0, tiny_layout.frame_size)), fps=30.0)

    def test_rejects_bad_fps(self, tiny_layout):
        with pytest.raises(InvalidArgumentError):
            Motion(layout=tiny_layout, frames=np.zeros((2, tiny_layout.frame_size)), fps=0.0)

    def test_sixd_degenerate_first_vector_rejected(self, tiny_layout):
        layout = tiny_layout.with_channels("sixd")
        frames = np.tile(np.array([1, 0, 0, 0, 1, 0], dtype=np.float32), (2, 3))
        frames[0, 0:3] = 0.0
        with pytest.raises(InvalidArgumentError):
            Motion(layout=layout, frames=frames, fps=30.0)


class TestContainer:
    def test_roundtrip_is_bit_exact(self, tiny_layout, tmp_path):
        register_layout(tiny_layout)
        m = make_motion(tiny_layout, t=9, seed=4)
        path = write_container(m, tmp_path / "m.smc")
        back = read_container(path)
        assert np.array_equal(back.frames, m.frames)
        assert back.frames.dtype == np.float32
        assert (back.gloss, back.fps, back.layout.name) == (m.gloss, m.fps, m.layout.name)

    def test_header_key_order(self, tiny_layout, tmp_path):
        m = make_motion(tiny_layout)
        path = write_container(m, tmp_path / "m.smc")
        header = path.read_bytes().split(b"\n", 1)[0].decode()
        keys = list(__import__("json").loads(header))
        assert keys == ["format_version", "gloss", "fps", "T", "layout", "channels", "dtype"]

    def test_truncated_payload_names_field(self, tiny_layout, tmp_path):
        register_layout(tiny_layout)
        m = make_motion(tiny_layout, t=5)
        path = write_container(m, tmp_path / "m.smc")
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])  # one float32 short
        with pytest.raises(FormatError, match="payload length"):
            read_container(path)

    def test_unknown_version_rejected(self, tiny_layout, tmp_path):
        m = make_motion(tiny_layout)
        path = write_container(m, tmp_path / "m.smc")
        header, payload = path.read_bytes().split(b"\n", 1)
        header = header.replace(b'"format_version": "1"', b'"format_version": "2"')
        path.write_bytes(header + b"\n" + payload)
        with pytest.raises(FormatError, match="format_version"):
            read_container(path)

    def test_unknown_layout_rejected(self, tmp_path):
        layout = JointLayout(name="unregistered_xyz", joints=("a",), parent_index=(-1,))
        m = make_motion(layout, t=2)
        path = write_container(m, tmp_path / "m.smc")
        with pytest.raises(FormatError, match="layout"):
            read_container(path)
        assert read_container(path, layout=layout).frame_count == 2

    def test_trimmed_table_clip_shape_accepted(self, tmp_path):
        # 21 frames x 53 joints in axis-angle = a 159-value frame row.
        layout = JointLayout(
            name="body53",
            joints=tuple(f"j{i}" for i in range(53)),
            parent_index=(-1,) + tuple(range(52)),
        )
        m = make_motion(layout, t=21, gloss="table")
        path = write_container(m, tmp_path / "table.smc")
        back = read_container(path, layout=layout)
        assert back.frame_count == 21
        assert back.frames.shape == (21, 159)

    def test_missing_header_field(self, tiny_layout, tmp_path):
        register_layout(tiny_layout)
        m = make_motion(tiny_layout)
        path = write_container(m, tmp_path / "m.smc")
        header, payload = path.read_bytes().split(b"\n", 1)
        broken = header.replace(b'"fps": 30.0, ', b"")
        path.write_bytes(broken + b"\n" + payload)
        with pytest.raises(FormatError, match="fps"):
            read_container(path)


class TestConversions:
    def test_axis_angle_sixd_roundtrip(self, tiny_layout):
        m = make_motion(tiny_layout, t=6, seed=2)
        sixd = convert_channels(m, "sixd")
        assert sixd.frames.shape == (6, 18)
        back = convert_channels(sixd, "axis_angle")
        assert np.abs(back.frames - m.frames).max() < 1e-5

    def test_matrix_roundtrip(self, tiny_layout):
        m = make_motion(tiny_layout, t=3, seed=8)
        mat = convert_channels(m, "matrix")
        assert mat.frames.shape == (3, 27)
        back = convert_channels(mat, "sixd")
        direct = convert_channels(m, "sixd")
        assert np.abs(back.frames - direct.frames).max() < 1e-6

    def test_resample_lengths(self, tiny_layout):
        m = make_motion(tiny_layout, t=10, seed=1)
        up = resample(m, 25)
        down = resample(m, 4)
        assert up.frame_count == 25 and down.frame_count == 4
        np.testing.assert_allclose(up.frames[0], m.frames[0], atol=1e-6)
        np.testing.assert_allclose(up.frames[-1], m.frames[-1], atol=1e-6)

    def test_resample_identity(self, tiny_layout):
        m = make_motion(tiny_layout, t=10)
        same = resample(m, 10)
        assert np.array_equal(same.frames, m.frames)

    def test_fix_lower_body_rest(self):
        rng = np.random.default_rng(0)
        frames = rng.normal(scale=0.2, size=(4, UPPER_BODY_52.frame_size)).astype(np.float32)
        m = Motion(layout=UPPER_BODY_52, frames=frames, fps=30.0)
        fixed = fix_lower_body_rest(m)
        knee = UPPER_BODY_52.joints.index("left_knee")
        wrist = UPPER_BODY_52.joints.index("right_wrist")
        assert np.array_equal(fixed.frames[:, UPPER_BODY_52.joint_slice(knee)], np.zeros((4, 3)))
        assert np.array_equal(
            fixed.frames[:, UPPER_BODY_52.joint_slice(wrist)], m.frames[:, UPPER_BODY_52.joint_slice(wrist)]
        )
