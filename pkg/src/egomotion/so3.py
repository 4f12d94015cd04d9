"""Rotation helpers on SO(3).

Quaternions are scalar-first ``(w, x, y, z)``. Matrices map body vectors into
the world frame (world <- body).
"""

import math

import numpy as np

_EPS = 1e-10


def hat(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def exp(w):
    """Rodrigues map from a rotation vector to a rotation matrix."""
    x, y, z = float(w[0]), float(w[1]), float(w[2])
    th2 = x * x + y * y + z * z
    if th2 < _EPS * _EPS:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = math.sqrt(th2)
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th2
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array(
        [
            [1.0 - b * (yy + zz), b * xy - a * z, b * xz + a * y],
            [b * xy + a * z, 1.0 - b * (xx + zz), b * yz - a * x],
            [b * xz - a * y, b * yz + a * x, 1.0 - b * (xx + yy)],
        ]
    )


def log(R):
    """Inverse of :func:`exp`, valid on the whole group including angle pi."""
    cos_th = min(1.0, max(-1.0, 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)))
    th = math.acos(cos_th)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-6:
        return 0.5 * (1.0 + th * th / 6.0) * v
    if math.pi - th > 1e-6:
        return th / (2.0 * math.sin(th)) * v
    # near pi: recover the axis from the symmetric part
    B = 0.5 * (R + R.T) - np.eye(3) * cos_th
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / math.sqrt(max(B[k, k], 1e-300))
    if axis @ v < 0:
        axis = -axis
    return th * axis / np.linalg.norm(axis)


def exp_batch(w):
    """Vectorized :func:`exp` over an ``(n, 3)`` array."""
    w = np.asarray(w, dtype=float)
    th2 = np.einsum("ij,ij->i", w, w)
    th = np.sqrt(th2)
    small = th2 < 1e-12
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / np.where(small, 1.0, th2))
    x, y, z = w[:, 0], w[:, 1], w[:, 2]
    R = np.empty((len(w), 3, 3))
    R[:, 0, 0] = 1.0 - b * (y * y + z * z)
    R[:, 0, 1] = b * x * y - a * z
    R[:, 0, 2] = b * x * z + a * y
    R[:, 1, 0] = b * x * y + a * z
    R[:, 1, 1] = 1.0 - b * (x * x + z * z)
    R[:, 1, 2] = b * y * z - a * x
    R[:, 2, 0] = b * x * z - a * y
    R[:, 2, 1] = b * y * z + a * x
    R[:, 2, 2] = 1.0 - b * (x * x + y * y)
    return R


def log_batch(R):
    """Vectorized :func:`log`; falls back to the scalar path near angle pi."""
    R = np.asarray(R, dtype=float)
    tr = np.clip(0.5 * (np.trace(R, axis1=1, axis2=2) - 1.0), -1.0, 1.0)
    th = np.arccos(tr)
    v = np.stack([R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]], axis=1)
    small = th < 1e-6
    s = np.sin(np.where(small, 1.0, th))
    f = np.where(small, 0.5 * (1.0 + th * th / 6.0), th / (2.0 * s))
    out = f[:, None] * v
    for i in np.flatnonzero(math.pi - th <= 1e-6):
        out[i] = log(R[i])
    return out


def angle(R):
    """Rotation angle in [0, pi] from the trace."""
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


def orthonormalize(R):
    """Nearest rotation matrix (polar decomposition through SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def quat_to_matrix(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R):
    """Scalar-first unit quaternion with w >= 0 (Shepperd's method)."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
