"""Strapdown integration of IMU samples into rotation, velocity and position.

The state is integrated continuously over a whole sequence; relative motion
between two instants is the difference of two snapshots. Orientation comes
from gyro propagation only, which is all the motion gate needs.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import so3
from .imu_synth import GRAVITY

__all__ = [
    "NavState",
    "IntegrationError",
    "MAX_GAP",
    "integrate_step",
    "integrate",
    "interpolate_to",
    "relative_motion",
    "rotation_angle",
]

MAX_GAP = 0.1  # s; larger steps mean dropped IMU data


class IntegrationError(ValueError):
    pass


@dataclass(frozen=True)
class NavState:
    """World-frame navigation state at time ``t``.

    ``gyro`` and ``accel`` remember the last integrated sample so the next
    step can use the midpoint of the two readings. They are ``None`` for a
    fresh state, in which case the first step uses the incoming sample alone.
    """

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray
    t: float
    gyro: np.ndarray = None
    accel: np.ndarray = None

    @classmethod
    def initial(cls, t, R=None, v=None, p=None):
        return cls(
            np.eye(3) if R is None else np.asarray(R, dtype=float),
            np.zeros(3) if v is None else np.asarray(v, dtype=float),
            np.zeros(3) if p is None else np.asarray(p, dtype=float),
            float(t),
        )


def _renormalize(R):
    # one Newton step towards the polar factor; cheap and enough at 200 Hz
    return 1.5 * R - 0.5 * R @ R.T @ R


def _advance(state, t, gyro, accel, gravity):
    dt = t - state.t
    if dt == 0 and state.gyro is None:
        # a fresh state absorbs the reading taken at its own timestamp
        return NavState(state.R, state.v, state.p, t, gyro, accel)
    if not dt > 0:
        raise IntegrationError(f"non-monotone IMU time: {t} after {state.t}")
    if dt > MAX_GAP:
        raise IntegrationError(f"IMU gap of {dt:.4f} s at t={state.t:.4f} exceeds {MAX_GAP} s")
    g0 = gyro if state.gyro is None else state.gyro
    a0 = accel if state.accel is None else state.accel
    R1 = _renormalize(state.R @ so3.exp(0.5 * (g0 + gyro) * dt))
    a_world = 0.5 * (state.R @ a0 + R1 @ accel) + gravity
    v1 = state.v + a_world * dt
    p1 = state.p + state.v * dt + 0.5 * a_world * dt * dt
    return NavState(R1, v1, p1, t, gyro, accel)


def integrate_step(state, sample, gravity=GRAVITY):
    """Advance ``state`` to ``sample.t`` with the midpoint rule."""
    return _advance(
        state,
        float(sample.t),
        np.asarray(sample.gyro, dtype=float),
        np.asarray(sample.accel, dtype=float),
        np.asarray(gravity, dtype=float),
    )


def integrate(state, imu, start=0, stop=None, gravity=GRAVITY):
    """Fold :func:`integrate_step` over ``imu[start:stop]``."""
    gravity = np.asarray(gravity, dtype=float)
    stop = len(imu) if stop is None else stop
    t, gyro, accel = imu.t, imu.gyro, imu.accel
    for k in range(start, stop):
        state = _advance(state, float(t[k]), gyro[k], accel[k], gravity)
    return state


def interpolate_to(state, imu, k, t, gravity=GRAVITY):
    """State at ``t`` between ``state.t`` and the time of sample ``k``.

    The reading at ``t`` is the linear interpolation of the boundary samples;
    the returned state is a snapshot and must not be integrated further.
    """
    if t == state.t:
        return state
    t_prev = state.t
    w = (t - t_prev) / (imu.t[k] - t_prev)
    g0 = imu.gyro[k] if state.gyro is None else state.gyro
    a0 = imu.accel[k] if state.accel is None else state.accel
    gyro = g0 + w * (imu.gyro[k] - g0)
    accel = a0 + w * (imu.accel[k] - a0)
    return _advance(state, float(t), gyro, accel, np.asarray(gravity, dtype=float))


def relative_motion(state_at_kf, state_now):
    """Displacement norm (m) and relative rotation ``R_kf^T R_now``."""
    if state_now.t < state_at_kf.t:
        raise IntegrationError("current state precedes the reference state")
    d = float(np.linalg.norm(state_now.p - state_at_kf.p))
    return d, state_at_kf.R.T @ state_now.R


def rotation_angle(dR, tol=1e-6):
    """Angle in [0, pi] of a rotation matrix, via the clamped trace formula."""
    dR = np.asarray(dR, dtype=float)
    if dR.shape != (3, 3) or np.max(np.abs(dR @ dR.T - np.eye(3))) > tol:
        raise IntegrationError("rotation_angle needs an orthonormal 3x3 matrix")
    c = 0.5 * (dR[0, 0] + dR[1, 1] + dR[2, 2] - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))
