"""Body-frame IMU streams from continuous-time trajectories.

Ideal readings are the specific force ``R^T (a - g)`` and the body angular
velocity of the rotation spline. :func:`apply_noise` adds white noise and a
Brownian bias to both sensors, parameterized by continuous-time densities.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng

__all__ = [
    "GRAVITY",
    "ImuSample",
    "ImuSequence",
    "NoiseModel",
    "WorldFrame",
    "ImuError",
    "synthesize_ideal",
    "apply_noise",
    "DEFAULT_RATE",
]

GRAVITY = np.array([0.0, 0.0, -9.81])
DEFAULT_RATE = 200.0


class ImuError(ValueError):
    pass


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True)
class NoiseModel:
    """Consumer-grade MEMS densities; units are per sqrt(Hz)."""

    sigma_a: float = 2.0e-2  # m/s^2/sqrt(Hz)
    sigma_g: float = 1.5e-3  # rad/s/sqrt(Hz)
    sigma_ba: float = 3.0e-3  # m/s^3/sqrt(Hz)
    sigma_bg: float = 2.0e-5  # rad/s^2/sqrt(Hz)
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_a", "sigma_g", "sigma_ba", "sigma_bg"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ImuError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def zero(cls, seed=0):
        return cls(0.0, 0.0, 0.0, 0.0, seed)


@dataclass(frozen=True)
class WorldFrame:
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    R0: np.ndarray = None  # initial world <- body rotation; None means "take it from the trajectory"
    allow_nonstandard_gravity: bool = False

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=float).reshape(3)
        object.__setattr__(self, "gravity", g)
        if not self.allow_nonstandard_gravity and not 9.7 <= np.linalg.norm(g) <= 9.9:
            raise ImuError(f"|gravity| = {np.linalg.norm(g):.4f} outside [9.7, 9.9]")


@dataclass(frozen=True)
class ImuSequence:
    """Uniform-rate 6-axis samples stored as arrays.

    ``bias_accel`` and ``bias_gyro`` hold the simulated bias trajectories when
    the sequence came out of :func:`apply_noise`; they are metadata and are
    not written to the CSV format.
    """

    t: np.ndarray  # (n,)
    gyro: np.ndarray  # (n, 3) rad/s
    accel: np.ndarray  # (n, 3) m/s^2
    rate: float
    noise: NoiseModel = None
    bias_accel: np.ndarray = None
    bias_gyro: np.ndarray = None

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return ImuSample(float(self.t[k]), self.gyro[k], self.accel[k])

    def __iter__(self):
        for k in range(len(self.t)):
            yield self[k]

    @property
    def dt(self):
        return 1.0 / self.rate

    def check_uniform(self, rtol=1e-6):
        if len(self.t) < 2:
            return
        d = np.diff(self.t)
        if np.any(np.abs(d - self.dt) > rtol * max(1.0, float(np.max(np.abs(self.t))))):
            raise ImuError("IMU timestamps are not uniformly spaced at 1/rate")


def synthesize_ideal(spline, frame=None, rate=DEFAULT_RATE):
    """Noise-free IMU readings sampled at ``t0 + k / rate`` on the spline."""
    frame = frame or WorldFrame()
    if not np.isfinite(rate) or rate <= 0:
        raise ImuError(f"rate must be positive, got {rate}")
    span = spline.t1 - spline.t0
    if span < 2.0 / rate:
        raise ImuError("trajectory interval shorter than two IMU periods")
    n = int(np.floor(span * rate + 1e-9)) + 1
    t = spline.t0 + np.arange(n) / rate
    R = spline.rotations(t)
    a = spline.accelerations(t)
    accel = np.einsum("nji,nj->ni", R, a - frame.gravity)
    gyro = spline.angular_velocities(t)
    return ImuSequence(t, gyro, accel, float(rate))


def _white(seed, name, n, sigma, rate):
    return rng.stream(seed, "imu", name).standard_normal((n, 3)) * (sigma * np.sqrt(rate))


def _walk(seed, name, n, sigma, rate):
    # b_0 = 0; b_{k+1} = b_k + sigma * sqrt(dt) * eta
    steps = rng.stream(seed, "imu", name).standard_normal((n - 1, 3)) * (sigma / np.sqrt(rate))
    return np.vstack([np.zeros((1, 3)), np.cumsum(steps, axis=0)])


def apply_noise(seq, model):
    """Add white noise and random-walk biases; deterministic given ``model.seed``.

    White noise has per-sample std ``sigma * sqrt(rate)``; bias increments
    have std ``sigma_b / sqrt(rate)``. Each of the four processes draws from
    its own named substream.
    """
    seq.check_uniform()
    n, rate, seed = len(seq), seq.rate, model.seed
    ba = bg = np.zeros((n, 3))
    accel, gyro = seq.accel, seq.gyro
    # zero densities leave the input untouched (no -0.0 + 0.0 sign flips)
    if model.sigma_ba > 0:
        ba = _walk(seed, "accel-bias", n, model.sigma_ba, rate)
        accel = accel + ba
    if model.sigma_bg > 0:
        bg = _walk(seed, "gyro-bias", n, model.sigma_bg, rate)
        gyro = gyro + bg
    if model.sigma_a > 0:
        accel = accel + _white(seed, "accel-noise", n, model.sigma_a, rate)
    if model.sigma_g > 0:
        gyro = gyro + _white(seed, "gyro-noise", n, model.sigma_g, rate)
    return replace(seq, gyro=gyro, accel=accel, noise=model, bias_accel=ba, bias_gyro=bg)
