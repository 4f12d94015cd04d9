"""Continuous-time pose trajectories from discrete pose samples.

Positions use a uniform cubic B-spline on R^3. Rotations use the cumulative
cubic B-spline on SO(3): the pose at time ``t`` in segment ``i`` is

    R(t) = R_i * Exp(b1(u) d1) * Exp(b2(u) d2) * Exp(b3(u) d3)

with ``d_j = Log(R_{i+j-1}^T R_{i+j})`` and cumulative basis weights ``b_j``.
Both splines share the same knot grid, which starts at the first sample time;
control point ``k`` is centred at ``t0 + (k - 1) * knot_dt``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import LinAlgError, cholesky_banded, cho_solve_banded

from . import so3

__all__ = [
    "PoseSample",
    "SplineTrajectory",
    "TrajectoryError",
    "fit_spline",
    "eval_pose",
    "eval_derivatives",
    "poses_from_arrays",
]

DEFAULT_KNOT_DT = 0.1
ROTATION_PASSES = 5

# rows: powers of u, columns: basis functions B0..B3 (times 6)
_BASIS = np.array(
    [
        [1.0, 4.0, 1.0, 0.0],
        [-3.0, 0.0, 3.0, 0.0],
        [3.0, -6.0, 3.0, 0.0],
        [-1.0, 3.0, -3.0, 1.0],
    ]
) / 6.0
# cumulative weights b_j = sum_{l >= j} B_l
_CUMULATIVE = np.cumsum(_BASIS[:, ::-1], axis=1)[:, ::-1]


class TrajectoryError(ValueError):
    """Invalid samples, degenerate fit or out-of-interval evaluation."""


@dataclass(frozen=True)
class PoseSample:
    t: float
    p: np.ndarray
    q: np.ndarray  # scalar-first, world <- body

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(4))

    @property
    def R(self):
        return so3.quat_to_matrix(self.q)


def poses_from_arrays(t, p, R):
    """Build :class:`PoseSample` objects from times, positions and matrices."""
    return [PoseSample(float(ti), pi, so3.matrix_to_quat(Ri)) for ti, pi, Ri in zip(t, p, R)]


def _powers(u):
    return np.stack([np.ones_like(u), u, u * u, u * u * u], axis=-1)


def _dpowers(u):
    return np.stack([np.zeros_like(u), np.ones_like(u), 2.0 * u, 3.0 * u * u], axis=-1)


def _ddpowers(u):
    return np.stack([np.zeros_like(u), np.zeros_like(u), 2.0 * np.ones_like(u), 6.0 * u], axis=-1)


@dataclass(frozen=True)
class SplineTrajectory:
    position_ctrl: np.ndarray  # (n, 3)
    rotation_ctrl: np.ndarray  # (n, 3, 3)
    knot_dt: float
    t0: float
    t1: float
    residual: float = 0.0
    rotation_residual: float = 0.0
    _increments: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._increments is None:
            R = self.rotation_ctrl
            inc = so3.log_batch(np.einsum("nji,njk->nik", R[:-1], R[1:]))
            object.__setattr__(self, "_increments", inc)

    @property
    def n_segments(self):
        return len(self.position_ctrl) - 3

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        # small tolerance absorbs rounding in the last sample time
        tol = 1e-9 * max(1.0, abs(self.t1))
        if np.any(t < self.t0 - tol) or np.any(t > self.t1 + tol) or not np.all(np.isfinite(t)):
            raise TrajectoryError(
                f"evaluation time outside [{self.t0}, {self.t1}]: {t.min()}..{t.max()}"
            )
        s = (t - self.t0) / self.knot_dt
        i = np.clip(np.floor(s).astype(int), 0, self.n_segments - 1)
        return i, s - i

    # -- batch evaluation -------------------------------------------------

    def positions(self, t):
        i, u = self._locate(t)
        idx = i[:, None] + np.arange(4)
        w = _powers(u) @ _BASIS
        return np.einsum("nj,njk->nk", w, self.position_ctrl[idx])

    def velocities(self, t):
        i, u = self._locate(t)
        idx = i[:, None] + np.arange(4)
        w = _dpowers(u) @ _BASIS / self.knot_dt
        return np.einsum("nj,njk->nk", w, self.position_ctrl[idx])

    def accelerations(self, t):
        i, u = self._locate(t)
        idx = i[:, None] + np.arange(4)
        w = _ddpowers(u) @ _BASIS / self.knot_dt**2
        return np.einsum("nj,njk->nk", w, self.position_ctrl[idx])

    def rotations(self, t):
        i, u = self._locate(t)
        R, _ = _cumulative_rotation(
            self.rotation_ctrl[i], self._increments[i[:, None] + np.arange(3)], u, self.knot_dt
        )
        return R

    def angular_velocities(self, t):
        """Body-frame angular velocity, the vee of R^T dR/dt."""
        i, u = self._locate(t)
        _, w = _cumulative_rotation(
            self.rotation_ctrl[i],
            self._increments[i[:, None] + np.arange(3)],
            u,
            self.knot_dt,
            with_rate=True,
        )
        return w

    # -- single-time convenience -------------------------------------------

    def eval_position(self, t):
        return self.positions(t)[0]

    def eval_velocity(self, t):
        return self.velocities(t)[0]

    def eval_acceleration(self, t):
        return self.accelerations(t)[0]

    def eval_rotation(self, t):
        return self.rotations(t)[0]

    def eval_pose(self, t):
        return self.eval_position(t), self.eval_rotation(t)

    def eval_derivatives(self, t):
        return self.eval_velocity(t), self.eval_acceleration(t), self.angular_velocities(t)[0]


def eval_pose(spline, t):
    """Position (m) and world <- body rotation matrix at time ``t``."""
    return spline.eval_pose(t)


def eval_derivatives(spline, t):
    """Velocity, acceleration (world frame) and body angular velocity at ``t``."""
    return spline.eval_derivatives(t)


def _cumulative_rotation(R_base, inc, u, dt, with_rate=False):
    """Evaluate the cumulative rotation spline for per-sample local data.

    ``R_base`` is (n, 3, 3), ``inc`` (n, 3, 3) holds the three increments of
    each sample's segment, ``u`` the in-segment fraction.
    """
    b = _powers(u) @ _CUMULATIVE
    R = R_base.copy()
    omega = np.zeros((len(u), 3)) if with_rate else None
    db = _dpowers(u) @ _CUMULATIVE / dt if with_rate else None
    for j in range(1, 4):
        A = so3.exp_batch(b[:, j, None] * inc[:, j - 1])
        R = R @ A
        if with_rate:
            # omega_j = A_j^T omega_{j-1} + db_j d_j
            omega = np.einsum("nji,nj->ni", A, omega) + db[:, j, None] * inc[:, j - 1]
    return R, omega


def _check_samples(samples, knot_dt):
    if knot_dt <= 0 or not np.isfinite(knot_dt):
        raise TrajectoryError(f"knot_dt must be positive, got {knot_dt}")
    if len(samples) < 8:
        raise TrajectoryError(f"need at least 8 pose samples, got {len(samples)}")
    t = np.array([s.t for s in samples], dtype=float)
    if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise TrajectoryError("pose timestamps must be finite and strictly increasing")
    q = np.array([s.q for s in samples], dtype=float)
    norms = np.linalg.norm(q, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise TrajectoryError("pose quaternions must have unit norm")
    q /= norms[:, None]
    # hemisphere continuity
    for k in range(1, len(q)):
        if q[k] @ q[k - 1] < 0:
            q[k] = -q[k]
    p = np.array([s.p for s in samples], dtype=float)
    return t, p, q


def _basis_matrix(t, t0, dt, m):
    s = (t - t0) / dt
    i = np.clip(np.floor(s).astype(int), 0, m - 1)
    w = _powers(s - i) @ _BASIS
    rows = np.repeat(np.arange(len(t)), 4)
    cols = (i[:, None] + np.arange(4)).ravel()
    return sp.csr_matrix((w.ravel(), (rows, cols)), shape=(len(t), m + 3)), i, s - i


def _interpolate_rotations(t, R, tau):
    """Geodesic interpolation of sample rotations, extrapolating at the ends."""
    k = np.clip(np.searchsorted(t, tau, side="right") - 1, 0, len(t) - 2)
    alpha = (tau - t[k]) / (t[k + 1] - t[k])
    rel = so3.log_batch(np.einsum("nji,njk->nik", R[k], R[k + 1]))
    return R[k] @ so3.exp_batch(alpha[:, None] * rel)


def fit_spline(samples, knot_dt=DEFAULT_KNOT_DT):
    """Fit position and rotation splines to pose samples.

    Positions are solved in closed form by linear least squares on the B-spline
    basis. Rotations start from geodesic interpolation of the samples at the
    control-point centres and are refined by a fixed number of Gauss-Newton
    passes on right-multiplicative control perturbations.

    Raises :class:`TrajectoryError` for fewer than 8 samples, non-increasing
    timestamps or a singular (degenerate) sampling of the knot grid.
    """
    t, p, q = _check_samples(samples, float(knot_dt))
    t0, t1 = float(t[0]), float(t[-1])
    m = max(1, int(np.ceil((t1 - t0) / knot_dt - 1e-9)))
    n = m + 3
    A, seg, u = _basis_matrix(t, t0, knot_dt, m)

    # banded normal equations, bandwidth 3
    ab = np.zeros((4, n))
    AtA_sp = (A.T @ A).tocsr()
    for off in range(4):
        diag = AtA_sp.diagonal(off)
        ab[off, : n - off] = diag
    try:
        cb = cholesky_banded(ab, lower=True)
    except LinAlgError as exc:
        raise TrajectoryError("singular normal equations: degenerate pose sampling") from exc
    if np.min(cb[0]) ** 2 < 1e-12 * np.max(ab[0]):
        raise TrajectoryError("singular normal equations: degenerate pose sampling")
    pos_ctrl = cho_solve_banded((cb, True), A.T @ p)
    pos_res = float(np.max(np.linalg.norm(A @ pos_ctrl - p, axis=1)))

    R_meas = np.array([so3.quat_to_matrix(qi) for qi in q])
    tau = t0 + (np.arange(n) - 1.0) * knot_dt
    R_ctrl = _interpolate_rotations(t, R_meas, tau)
    for _ in range(ROTATION_PASSES):
        R_ctrl = _gauss_newton_pass(R_ctrl, R_meas, seg, u, knot_dt)
    R_ctrl = np.array([so3.orthonormalize(R) for R in R_ctrl])

    spline = SplineTrajectory(pos_ctrl, R_ctrl, float(knot_dt), t0, t1, pos_res)
    rot_err = so3.log_batch(np.einsum("nji,njk->nik", spline.rotations(t), R_meas))
    return SplineTrajectory(
        pos_ctrl,
        R_ctrl,
        float(knot_dt),
        t0,
        t1,
        pos_res,
        float(np.max(np.linalg.norm(rot_err, axis=1))),
        spline._increments,
    )


def _local_rotation(R_local, u, dt):
    inc = so3.log_batch(
        np.einsum("nji,njk->nik", R_local[:, :-1].reshape(-1, 3, 3), R_local[:, 1:].reshape(-1, 3, 3))
    ).reshape(len(u), 3, 3)
    R, _ = _cumulative_rotation(R_local[:, 0], inc, u, dt)
    return R


def _gauss_newton_pass(R_ctrl, R_meas, seg, u, dt, eps=1e-6, damping=1e-9):
    n = len(R_ctrl)
    idx = seg[:, None] + np.arange(4)
    R_local = R_ctrl[idx]
    res = so3.log_batch(np.einsum("nji,njk->nik", _local_rotation(R_local, u, dt), R_meas))
    J = np.empty((len(u), 3, 12))
    for j in range(4):
        for a in range(3):
            e = np.zeros(3)
            e[a] = eps
            plus, minus = R_local.copy(), R_local.copy()
            plus[:, j] = R_local[:, j] @ so3.exp(e)
            minus[:, j] = R_local[:, j] @ so3.exp(-e)
            rp = so3.log_batch(np.einsum("nji,njk->nik", _local_rotation(plus, u, dt), R_meas))
            rm = so3.log_batch(np.einsum("nji,njk->nik", _local_rotation(minus, u, dt), R_meas))
            J[:, :, 3 * j + a] = (rp - rm) / (2.0 * eps)
    cols = (3 * idx[:, :, None] + np.arange(3)).reshape(len(u), 12)
    JtJ = np.einsum("nai,naj->nij", J, J)
    Jtr = np.einsum("nai,na->ni", J, res)
    rows_h = np.broadcast_to(cols[:, :, None], JtJ.shape).ravel()
    cols_h = np.broadcast_to(cols[:, None, :], JtJ.shape).ravel()
    H = sp.csc_matrix((JtJ.ravel(), (rows_h, cols_h)), shape=(3 * n, 3 * n))
    g = np.bincount(cols.ravel(), weights=Jtr.ravel(), minlength=3 * n)
    H = H + damping * sp.identity(3 * n, format="csc")
    delta = -spla.spsolve(H, g).reshape(n, 3)
    return np.einsum("nij,njk->nik", R_ctrl, so3.exp_batch(delta))
