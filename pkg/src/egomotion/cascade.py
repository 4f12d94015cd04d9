"""Three-stage cascaded keyframe filter.

Every candidate frame is compared against the most recently selected
keyframe, cheapest test first:

1. motion gate: IMU displacement and rotation angle since the keyframe;
2. parallax gate: mean pixel displacement of tracked points;
3. token gate: cosine distance of appearance tokens.

A frame is discarded by the first gate it fails. Tokens are requested only
for frames that reach stage 3, plus the first frame.
"""

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from . import preintegration as pre
from .imu_synth import GRAVITY

__all__ = [
    "Frame",
    "CascadeConfig",
    "StageStats",
    "KeyframeRecord",
    "CascadeError",
    "run_cascade",
    "cosine_distance",
    "uniform_keyframes",
    "sensitivity_sweep",
    "THRESHOLDS",
]

THRESHOLDS = ("tau_d", "tau_theta", "tau_p", "tau_v")


class CascadeError(ValueError):
    pass


class Frame(NamedTuple):
    index: int
    t: float


@dataclass(frozen=True)
class CascadeConfig:
    tau_d: float = 0.2  # m
    tau_theta: float = math.radians(15.0)  # rad
    tau_p: float = 15.0  # px
    tau_v: float = 0.4  # cosine distance
    min_tracked: int = 8
    rate_video: float = 30.0
    gravity: tuple = tuple(GRAVITY)

    def __post_init__(self):
        for name in THRESHOLDS:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise CascadeError(f"{name} must be > 0, got {v}")
        if not self.tau_v < 2:
            raise CascadeError("tau_v must lie in (0, 2)")
        if self.min_tracked < 0 or self.rate_video <= 0:
            raise CascadeError("min_tracked must be >= 0 and rate_video > 0")

    def scaled(self, name, factor):
        return replace(self, **{name: getattr(self, name) * factor})


@dataclass
class StageStats:
    n_frames: int = 0
    n_pass_stage1: int = 0
    n_pass_stage2: int = 0
    n_keyframes: int = 0
    n_token_extractions: int = 0
    wall_time: dict = field(default_factory=lambda: {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0})

    def to_dict(self):
        return asdict(self)

    @property
    def stage1_retention(self):
        return self.n_pass_stage1 / self.n_frames if self.n_frames else 0.0

    @property
    def extraction_fraction(self):
        return self.n_token_extractions / self.n_frames if self.n_frames else 0.0


@dataclass(frozen=True)
class KeyframeRecord:
    frame_index: int
    t: float
    visual_token: np.ndarray
    imu_segment: tuple  # half-open [start, stop) into the IMU sequence


def cosine_distance(a, b):
    """``1 - cos(a, b)`` in [0, 2]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise CascadeError("cosine distance of a zero-norm vector")
    return float(min(2.0, max(0.0, 1.0 - (a @ b) / (na * nb))))


def _as_frames(frames):
    out = []
    for k, f in enumerate(frames):
        if isinstance(f, Frame):
            out.append(f)
        elif np.ndim(f) == 0:
            out.append(Frame(k, float(f)))
        else:
            out.append(Frame(int(f[0]), float(f[1])))
    return out


class _ImuCursor:
    """Streams the nav state forward to frame timestamps."""

    def __init__(self, imu, state, gravity):
        self.imu, self.state, self.gravity, self.k = imu, state, gravity, 0
        # skip samples already absorbed by the initial state
        while self.k < len(imu) and imu.t[self.k] < state.t:
            self.k += 1

    def advance(self, t):
        imu = self.imu
        # a frame within one IMU period after the last sample is still covered
        period = 1.0 / imu.rate
        if t < imu.t[0] or t > imu.t[-1] + period:
            raise CascadeError(f"IMU stream [{imu.t[0]}, {imu.t[-1]}] does not cover frame time {t}")
        while self.k < len(imu) and imu.t[self.k] <= t:
            self.state = pre._advance(self.state, float(imu.t[self.k]), imu.gyro[self.k],
                                      imu.accel[self.k], self.gravity)
            self.k += 1
        if self.state.t < t:
            if self.k >= len(imu):
                # hold the last reading over the final partial period
                return pre._advance(self.state, float(t), self.state.gyro, self.state.accel, self.gravity)
            return pre.interpolate_to(self.state, imu, self.k, t, self.gravity)
        return self.state


def run_cascade(frames, imu, cfg, parallax_provider, token_provider, initial_state=None):
    """Select keyframes from ``frames`` with the three-stage cascade.

    ``parallax_provider(ref, cand)`` returns ``(mean_px, n_tracked)`` for two
    :class:`Frame` objects and ``token_provider(frame)`` an appearance vector.
    ``initial_state`` seeds the strapdown integration (rotation, velocity and
    position at the first IMU sample); identity at rest by default.

    Returns ``(records, stats)``.
    """
    frames = _as_frames(frames)
    if not frames:
        raise CascadeError("empty frame stream")
    if any(b.t <= a.t for a, b in zip(frames, frames[1:])):
        raise CascadeError("frame timestamps must be strictly increasing")
    if len(imu) == 0:
        raise CascadeError("empty IMU stream")
    gravity = np.asarray(cfg.gravity, dtype=float)
    state = initial_state or pre.NavState.initial(float(imu.t[0]))
    cursor = _ImuCursor(imu, state, gravity)
    stats = StageStats(n_frames=len(frames))
    clock = time.perf_counter

    def extract(frame):
        stats.n_token_extractions += 1
        return np.asarray(token_provider(frame), dtype=float)

    tic = clock()
    try:
        ref_state = cursor.advance(frames[0].t)
    except pre.IntegrationError as exc:
        raise CascadeError(str(exc)) from exc
    stats.wall_time["stage1"] += clock() - tic
    tic = clock()
    ref_frame, ref_token = frames[0], extract(frames[0])
    stats.wall_time["stage3"] += clock() - tic
    records = [KeyframeRecord(ref_frame.index, ref_frame.t, ref_token, (0, cursor.k))]
    seg_start = cursor.k

    for frame in frames[1:]:
        tic = clock()
        try:
            now = cursor.advance(frame.t)
        except pre.IntegrationError as exc:
            raise CascadeError(str(exc)) from exc
        d, dR = pre.relative_motion(ref_state, now)
        theta = pre.rotation_angle(dR)
        stats.wall_time["stage1"] += clock() - tic
        if d < cfg.tau_d and theta < cfg.tau_theta:
            continue
        stats.n_pass_stage1 += 1

        tic = clock()
        parallax, n_tracked = parallax_provider(ref_frame, frame)
        stats.wall_time["stage2"] += clock() - tic
        # lost tracking counts as a large view change
        if n_tracked >= cfg.min_tracked and parallax < cfg.tau_p:
            continue
        stats.n_pass_stage2 += 1

        tic = clock()
        token = extract(frame)
        if np.linalg.norm(token) == 0 or np.linalg.norm(ref_token) == 0:
            dist = 1.0
        else:
            dist = cosine_distance(token, ref_token)
        stats.wall_time["stage3"] += clock() - tic
        if dist < cfg.tau_v:
            continue

        records.append(KeyframeRecord(frame.index, frame.t, token, (seg_start, cursor.k)))
        seg_start = cursor.k
        ref_frame, ref_state, ref_token = frame, now, token

    stats.n_keyframes = len(records)
    return records, stats


def uniform_keyframes(n_frames, n_select):
    """Frame indices of uniform sampling, evenly spread including both ends."""
    if n_select <= 0 or n_frames <= 0:
        raise CascadeError("uniform sampling needs positive counts")
    n_select = min(n_select, n_frames)
    return np.unique(np.round(np.linspace(0, n_frames - 1, n_select)).astype(int))


def sensitivity_sweep(base_cfg, deltas, scenarios: "dict[str, Callable]"):
    """Perturb each threshold by each relative delta and rerun every scenario.

    ``scenarios`` maps a name to ``run(cfg) -> (records, stats)``. The report
    lists, per scenario and perturbation, the keyframe count, its relative
    change against the unperturbed run and the stage statistics.
    """
    if not scenarios:
        raise CascadeError("sensitivity sweep needs at least one scenario")
    report = {"base": {}, "runs": [], "deltas": [float(d) for d in deltas]}
    base_kf = {}
    for name, run in scenarios.items():
        records, stats = run(base_cfg)
        base_kf[name] = [r.frame_index for r in records]
        report["base"][name] = {"keyframes": base_kf[name], "stats": _stats_summary(stats)}
    changes = []
    for param in THRESHOLDS:
        for delta in deltas:
            cfg = base_cfg.scaled(param, 1.0 + delta)
            for name, run in scenarios.items():
                records, stats = run(cfg)
                kf = [r.frame_index for r in records]
                n0 = len(base_kf[name])
                change = (len(kf) - n0) / n0
                changes.append(abs(change))
                report["runs"].append(
                    {
                        "scenario": name,
                        "threshold": param,
                        "delta": float(delta),
                        "value": float(getattr(cfg, param)),
                        "n_keyframes": len(kf),
                        "keyframe_change": change,
                        "identical_keyframes": kf == base_kf[name],
                        "stats": _stats_summary(stats),
                    }
                )
    report["median_abs_keyframe_change"] = float(np.median(changes)) if changes else 0.0
    report["max_abs_keyframe_change"] = float(np.max(changes)) if changes else 0.0
    return report


def _stats_summary(stats):
    d = {k: v for k, v in stats.to_dict().items() if k != "wall_time"}
    d["stage1_retention"] = stats.stage1_retention
    d["extraction_fraction"] = stats.extraction_fraction
    return d
