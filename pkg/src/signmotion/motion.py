"""Motion containers: joint layouts, pose sequences, and their file format.

A :class:`Motion` is a time-ordered sequence of per-joint rotations under a
declared :class:`JointLayout`. The on-disk container is a single UTF-8 JSON
header line followed by a raw little-endian float payload; see
:func:`write_container`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rotations
from .errors import FormatError, InvalidArgumentError, ShapeError

CONTAINER_FORMAT_VERSION = "1"

CHANNEL_WIDTHS = {"axis_angle": 3, "sixd": 6, "matrix": 9}

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}

# Identity rotation in each channel form, used for rest-pose completion.
_REST_VALUES = {
    "axis_angle": np.zeros(3),
    "sixd": np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
    "matrix": np.eye(3).reshape(9),
}


@dataclass(frozen=True)
class JointLayout:
    """An ordered joint set with its kinematic tree and rotation channels.

    ``parent_index[i]`` is the index of joint i's parent, -1 for a root.
    Parents always precede children, so the tree is a forest by construction.
    """

    name: str
    joints: tuple[str, ...]
    parent_index: tuple[int, ...]
    channels: str = "axis_angle"

    def __post_init__(self) -> None:
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "parent_index", tuple(int(p) for p in self.parent_index))
        if not self.joints:
            raise InvalidArgumentError("joint layout must have at least one joint")
        if len(set(self.joints)) != len(self.joints):
            raise InvalidArgumentError("joint names must be unique")
        if len(self.parent_index) != len(self.joints):
            raise InvalidArgumentError("parent_index length must match joint count")
        for i, p in enumerate(self.parent_index):
            if not -1 <= p < i:
                raise InvalidArgumentError(
                    f"parent of joint {i} ({self.joints[i]!r}) must be -1 or a smaller index, got {p}"
                )
        if self.channels not in CHANNEL_WIDTHS:
            raise InvalidArgumentError(f"unknown channels {self.channels!r}")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def channel_width(self) -> int:
        return CHANNEL_WIDTHS[self.channels]

    @property
    def frame_size(self) -> int:
        return self.joint_count * self.channel_width

    def with_channels(self, channels: str) -> "JointLayout":
        if channels == self.channels:
            return self
        return replace(self, channels=channels)

    def joint_slice(self, index: int) -> slice:
        """Column range of one joint's values within a frame row."""
        w = self.channel_width
        return slice(index * w, (index + 1) * w)


@dataclass
class Motion:
    """A pose-parameter sequence: frames of shape (T, joints * channel width).

    Frames are stored as float32, matching the container payload dtype, so a
    write/read roundtrip is bit-exact.
    """

    layout: JointLayout
    frames: np.ndarray
    fps: float
    gloss: str | None = None

    def __post_init__(self) -> None:
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise ShapeError(f"frames must be 2-D (T, {self.layout.frame_size}), got shape {frames.shape}")
        if frames.shape[0] < 1:
            raise InvalidArgumentError("motion must have at least one frame")
        if frames.shape[1] != self.layout.frame_size:
            raise ShapeError(
                f"frame width {frames.shape[1]} does not match layout "
                f"{self.layout.name!r} ({self.layout.frame_size})"
            )
        if not np.isfinite(frames).all():
            raise InvalidArgumentError("frames must be finite")
        if not self.fps > 0:
            raise InvalidArgumentError(f"fps must be positive, got {self.fps}")
        if self.layout.channels == "sixd":
            first = frames.reshape(frames.shape[0], self.layout.joint_count, 6)[:, :, 0:3]
            if np.any(np.linalg.norm(first.astype(np.float64), axis=-1) <= 1e-8):
                raise InvalidArgumentError("sixd frames contain a degenerate first 3-vector")
        self.frames = frames

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    def joint_rotations(self) -> np.ndarray:
        """Frames reshaped to (T, joints, channel width)."""
        return self.frames.reshape(self.frame_count, self.layout.joint_count, self.layout.channel_width)


def convert_channels(motion: Motion, channels: str) -> Motion:
    """Re-express a motion's rotations in a different parameterization."""
    if channels not in CHANNEL_WIDTHS:
        raise InvalidArgumentError(f"unknown channels {channels!r}")
    if channels == motion.layout.channels:
        return motion

    per_joint = motion.joint_rotations().astype(np.float64)
    src = motion.layout.channels
    if src == "axis_angle":
        mats = rotations.axis_angle_to_matrix(per_joint)
    elif src == "sixd":
        mats = rotations.sixd_to_matrix(per_joint)
    else:
        mats = per_joint.reshape(per_joint.shape[0], per_joint.shape[1], 3, 3)

    if channels == "matrix":
        out = mats.reshape(mats.shape[0], mats.shape[1], 9)
    elif channels == "sixd":
        out = rotations.matrix_to_sixd(mats)
    else:
        out = rotations.matrix_to_axis_angle(mats)

    layout = motion.layout.with_channels(channels)
    return Motion(layout=layout, frames=out.reshape(out.shape[0], layout.frame_size), fps=motion.fps, gloss=motion.gloss)


def resample(motion: Motion, n_frames: int) -> Motion:
    """Uniformly resample a motion in time by linear interpolation."""
    if n_frames < 1:
        raise InvalidArgumentError("n_frames must be >= 1")
    t = motion.frame_count
    if n_frames == t:
        return Motion(layout=motion.layout, frames=motion.frames.copy(), fps=motion.fps, gloss=motion.gloss)
    if t == 1:
        frames = np.repeat(motion.frames, n_frames, axis=0)
    else:
        pos = np.linspace(0.0, t - 1.0, n_frames)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, t - 1)
        w = (pos - lo)[:, None].astype(np.float64)
        frames = (1.0 - w) * motion.frames[lo].astype(np.float64) + w * motion.frames[hi].astype(np.float64)
    fps = motion.fps * n_frames / t
    return Motion(layout=motion.layout, frames=frames, fps=fps, gloss=motion.gloss)


def fix_lower_body_rest(motion: Motion) -> Motion:
    """Pin the lower-body joints to the rest pose (identity rotation).

    The generator only learns signing-relevant movement; exported full-body
    animations get stable legs this way.
    """
    frames = motion.frames.copy()
    rest = _REST_VALUES[motion.layout.channels].astype(np.float32)
    for i, name in enumerate(motion.layout.joints):
        if name in LOWER_BODY_JOINTS:
            frames[:, motion.layout.joint_slice(i)] = rest
    return Motion(layout=motion.layout, frames=frames, fps=motion.fps, gloss=motion.gloss)


def write_container(motion: Motion, path: str | Path, dtype: str = "<f4") -> Path:
    """Write a motion container: one JSON header line + raw float payload.

    Header keys, in order: format_version, gloss, fps, T, layout, channels,
    dtype. The payload is the frame array in row-major order.
    """
    if dtype not in _DTYPES:
        raise InvalidArgumentError(f"unsupported payload dtype {dtype!r}")
    path = Path(path)
    header = {
        "format_version": CONTAINER_FORMAT_VERSION,
        "gloss": motion.gloss,
        "fps": motion.fps,
        "T": motion.frame_count,
        "layout": motion.layout.name,
        "channels": motion.layout.channels,
        "dtype": dtype,
    }
    payload = np.ascontiguousarray(motion.frames, dtype=_DTYPES[dtype]).tobytes()
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        f.write(payload)
    return path


def read_container(path: str | Path, layout: JointLayout | None = None) -> Motion:
    """Read a motion container written by :func:`write_container`.

    The layout is resolved from the registry by header name unless one is
    passed explicitly. Every header/payload inconsistency raises a
    :class:`FormatError` naming the offending field.
    """
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from exc

    missing = [k for k in ("format_version", "gloss", "fps", "T", "layout", "channels", "dtype") if k not in header]
    if missing:
        raise FormatError(f"{path}: header missing fields {missing}")
    if header["format_version"] != CONTAINER_FORMAT_VERSION:
        raise FormatError(f"{path}: unknown format_version {header['format_version']!r}")
    if header["dtype"] not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype {header['dtype']!r}")
    if header["channels"] not in CHANNEL_WIDTHS:
        raise FormatError(f"{path}: unknown channels {header['channels']!r}")

    if layout is None:
        layout = LAYOUT_REGISTRY.get(header["layout"])
        if layout is None:
            raise FormatError(f"{path}: unknown layout {header['layout']!r}; pass one explicitly")
    elif layout.name != header["layout"]:
        raise FormatError(f"{path}: layout field {header['layout']!r} does not match {layout.name!r}")
    layout = layout.with_channels(header["channels"])

    t = header["T"]
    if not isinstance(t, int) or t < 1:
        raise FormatError(f"{path}: T field must be a positive integer, got {t!r}")
    dt = _DTYPES[header["dtype"]]
    expected = t * layout.frame_size * dt.itemsize
    payload = raw[nl + 1 :]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload length mismatch: header implies {expected} bytes, found {len(payload)}"
        )
    frames = np.frombuffer(payload, dtype=dt).reshape(t, layout.frame_size)
    return Motion(layout=layout, frames=frames.astype(np.float32), fps=float(header["fps"]), gloss=header["gloss"])


def _smplx_upper_layout() -> JointLayout:
    body = [
        ("pelvis", -1),
        ("left_hip", 0),
        ("right_hip", 0),
        ("spine1", 0),
        ("left_knee", 1),
        ("right_knee", 2),
        ("spine2", 3),
        ("left_ankle", 4),
        ("right_ankle", 5),
        ("spine3", 6),
        ("left_foot", 7),
        ("right_foot", 8),
        ("neck", 9),
        ("left_collar", 9),
        ("right_collar", 9),
        ("head", 12),
        ("left_shoulder", 13),
        ("right_shoulder", 14),
        ("left_elbow", 16),
        ("right_elbow", 17),
        ("left_wrist", 18),
        ("right_wrist", 19),
    ]
    joints = [name for name, _ in body]
    parents = [p for _, p in body]
    fingers = ["index", "middle", "pinky", "ring", "thumb"]
    for side, wrist in (("left", 20), ("right", 21)):
        for finger in fingers:
            base = len(joints)
            joints += [f"{side}_{finger}{k}" for k in (1, 2, 3)]
            parents += [wrist, base, base + 1]
    return JointLayout(name="upper_body_52", joints=tuple(joints), parent_index=tuple(parents))


#: Global orient + 21 SMPL-X body joints + 2x15 hand joints; jaw and eyes are
#: excluded (non-manual articulation is out of scope).
UPPER_BODY_52 = _smplx_upper_layout()

LOWER_BODY_JOINTS = frozenset(
    {"left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle", "left_foot", "right_foot"}
)

LAYOUT_REGISTRY: dict[str, JointLayout] = {UPPER_BODY_52.name: UPPER_BODY_52}


def register_layout(layout: JointLayout) -> None:
    """Make a layout resolvable by name when reading containers."""
    LAYOUT_REGISTRY[layout.name] = layout
