"""Rotation representation conversions.

Three parameterizations are used throughout the toolkit:

* axis-angle: 3-vector whose direction is the rotation axis and whose norm
  is the angle in radians (the native SMPL-X pose parameter form),
* matrix: 3x3 proper rotation matrix acting on column vectors,
* sixd: the continuity-friendly 6-vector made of the first two matrix
  columns, recovered via Gram-Schmidt.

Every function accepts a single rotation or an arbitrarily batched array;
the rotation lives in the trailing dimensions and leading dimensions are
preserved. Computation is float64 regardless of input dtype.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

__all__ = [
    "axis_angle_to_matrix",
    "matrix_to_axis_angle",
    "matrix_to_sixd",
    "sixd_to_matrix",
]


def axis_angle_to_matrix(v: np.ndarray) -> np.ndarray:
    """Convert axis-angle vectors (..., 3) to rotation matrices (..., 3, 3).

    Uses the Rodrigues formula ``R = cos(t) I + sin(t) [k]_x + (1-cos(t)) k k^T``
    with ``t = |v|`` and ``k = v/|v|``. The zero vector maps to the identity.

    Raises:
        InvalidArgumentError: non-finite input, wrong trailing dimension, or a
            vector so large its norm overflows float64.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (3,):
        raise InvalidArgumentError(f"axis-angle input must end in dimension 3, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise InvalidArgumentError("axis-angle input must be finite")

    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    if not np.isfinite(theta).all():
        raise InvalidArgumentError("axis-angle norm overflows float64")
    # Guard the zero rotation: sin and (1-cos) both vanish, so the axis value
    # is irrelevant there.
    safe = np.where(theta > 0.0, theta, 1.0)
    k = v / safe

    s = np.sin(theta)[..., None]
    c = np.cos(theta)[..., None]
    eye = np.broadcast_to(np.eye(3), v.shape[:-1] + (3, 3))
    kx = _cross_matrix(k)
    outer = k[..., :, None] * k[..., None, :]
    return c * eye + s * kx + (1.0 - c) * outer


def matrix_to_axis_angle(matrix: np.ndarray) -> np.ndarray:
    """Convert rotation matrices (..., 3, 3) to axis-angle vectors (..., 3).

    Goes through a quaternion extracted with Shepperd's branch selection,
    which stays stable near both the identity and half-turn rotations.
    """
    q = _matrix_to_quaternion(np.asarray(matrix, dtype=np.float64))
    w = q[..., 0]
    xyz = q[..., 1:]
    n = np.linalg.norm(xyz, axis=-1)
    angle = 2.0 * np.arctan2(n, w)
    safe = np.where(n > 0.0, n, 1.0)
    return xyz / safe[..., None] * angle[..., None]


def matrix_to_sixd(matrix: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Return the first two columns of each rotation matrix, concatenated.

    Raises:
        InvalidArgumentError: the input is not orthonormal within ``atol`` or
            is a reflection (negative determinant).
    """
    r = np.asarray(matrix, dtype=np.float64)
    if r.shape[-2:] != (3, 3):
        raise InvalidArgumentError(f"rotation matrix input must end in (3, 3), got shape {r.shape}")
    gram = np.einsum("...ji,...jk->...ik", r, r)
    err = np.abs(gram - np.eye(3)).max()
    if not err <= atol:
        raise InvalidArgumentError(f"matrix is not orthonormal within {atol} (error {err:.3e})")
    if np.any(np.linalg.det(r) <= 0.0):
        raise InvalidArgumentError("matrix is a reflection, not a proper rotation")
    return np.concatenate([r[..., :, 0], r[..., :, 1]], axis=-1)


def sixd_to_matrix(sixd: np.ndarray) -> np.ndarray:
    """Reconstruct rotation matrices (..., 3, 3) from 6-vectors (..., 6).

    Gram-Schmidt: the first 3-vector is normalized into column b1, the second
    is orthogonalized against b1 into b2, and b3 = b1 x b2. The result is
    invariant to positive scaling of either input 3-vector.

    Raises:
        DegenerateInputError: first vector has norm <= 1e-8, or the second is
            parallel to the first within 1e-8 after normalization.
    """
    s = np.asarray(sixd, dtype=np.float64)
    if s.shape[-1:] != (6,):
        raise InvalidArgumentError(f"sixd input must end in dimension 6, got shape {s.shape}")

    a1 = s[..., 0:3]
    a2 = s[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 <= 1e-8):
        raise DegenerateInputError("first 6D vector has near-zero norm")
    b1 = a1 / n1

    proj = np.sum(b1 * a2, axis=-1, keepdims=True)
    u2 = a2 - proj * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 <= 1e-8):
        raise DegenerateInputError("second 6D vector is parallel to the first")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def _cross_matrix(k: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of (..., 3) vectors."""
    zeros = np.zeros_like(k[..., 0])
    rows = [
        np.stack([zeros, -k[..., 2], k[..., 1]], axis=-1),
        np.stack([k[..., 2], zeros, -k[..., 0]], axis=-1),
        np.stack([-k[..., 1], k[..., 0], zeros], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def _matrix_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) to unit quaternions (..., 4), w first."""
    if r.shape[-2:] != (3, 3):
        raise InvalidArgumentError(f"rotation matrix input must end in (3, 3), got shape {r.shape}")
    m00, m01, m02 = r[..., 0, 0], r[..., 0, 1], r[..., 0, 2]
    m10, m11, m12 = r[..., 1, 0], r[..., 1, 1], r[..., 1, 2]
    m20, m21, m22 = r[..., 2, 0], r[..., 2, 1], r[..., 2, 2]

    # Four candidate extractions; each is stable where its pivot is largest.
    q_w = np.stack([1.0 + m00 + m11 + m22, m21 - m12, m02 - m20, m10 - m01], axis=-1)
    q_x = np.stack([m21 - m12, 1.0 + m00 - m11 - m22, m01 + m10, m02 + m20], axis=-1)
    q_y = np.stack([m02 - m20, m01 + m10, 1.0 - m00 + m11 - m22, m12 + m21], axis=-1)
    q_z = np.stack([m10 - m01, m02 + m20, m12 + m21, 1.0 - m00 - m11 + m22], axis=-1)

    candidates = np.stack([q_w, q_x, q_y, q_z], axis=-2)
    pivots = np.stack(
        [1.0 + m00 + m11 + m22, 1.0 + m00 - m11 - m22, 1.0 - m00 + m11 - m22, 1.0 - m00 - m11 + m22],
        axis=-1,
    )
    best = np.argmax(pivots, axis=-1)
    q = np.take_along_axis(candidates, best[..., None, None].repeat(4, axis=-1), axis=-2)[..., 0, :]
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    # Canonicalize to w >= 0 so the axis-angle magnitude stays in [0, pi].
    return np.where(q[..., :1] < 0.0, -q, q)
