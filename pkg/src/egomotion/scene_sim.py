"""Synthetic indoor scenes: landmarks on room surfaces, scan trajectories,
pinhole observations and deterministic appearance tokens.

Camera frame: x right, y down, z along the optical axis. Poses are
world <- camera, so the body frame of the IMU coincides with the camera.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng, so3
from .trajectory import PoseSample

__all__ = [
    "Intrinsics",
    "SceneModel",
    "FrameObservation",
    "SceneError",
    "generate_scene",
    "generate_scan_trajectory",
    "observe",
    "average_parallax",
    "visual_token",
    "look_rotation",
    "STYLES",
    "FRAME_RATE",
]

FRAME_RATE = 30.0
STYLES = ("orbit", "sweep", "walkthrough")
MIN_DEPTH, MAX_DEPTH = 0.3, 8.0
MAX_SPEED = 0.6  # m/s
TOKEN_PIXEL_SIGMA = 56.0  # px
TOKEN_DEPTH_SIGMA = 0.05  # log depth
MAX_TURN_RATE = math.radians(40.0)  # per yaw/pitch axis; combined stays below 60 deg/s
# min-jerk profiles peak at 1.875x their mean rate
_MINJERK_PEAK = 1.875


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float = 600.0
    fy: float = 600.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise SceneError("focal lengths must be positive")


@dataclass(frozen=True)
class SceneModel:
    ids: np.ndarray  # (n,) int
    landmarks: np.ndarray  # (n, 3) m
    normals: np.ndarray  # (n, 3) inward surface normals
    room_bounds: tuple  # (lo, hi) corners
    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    seed: int = 0
    max_features: int = 200
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.ids)

    def strength(self):
        """Per-landmark tracking priority; strongest points are kept first."""
        if "strength" not in self._cache:
            self._cache["strength"] = rng.stream(self.seed, "scene", "strength").random(len(self))
        return self._cache["strength"]

    def token_directions(self, dim):
        key = ("dirs", dim)
        if key not in self._cache:
            g = rng.stream(self.seed, "scene", "token-directions", dim)
            d = g.standard_normal((len(self), dim))
            self._cache[key] = d / np.linalg.norm(d, axis=1, keepdims=True)
        return self._cache[key]

    def to_json(self):
        K = self.intrinsics
        return {
            "seed": int(self.seed),
            "max_features": int(self.max_features),
            "room_bounds": [list(map(float, self.room_bounds[0])), list(map(float, self.room_bounds[1]))],
            "intrinsics": {
                "fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy, "width": K.width, "height": K.height,
            },
            "landmarks": [
                {"id": int(i), "p": [float(c) for c in x], "n": [float(c) for c in nrm]}
                for i, x, nrm in zip(self.ids, self.landmarks, self.normals)
            ],
        }

    @classmethod
    def from_json(cls, obj):
        lms = obj["landmarks"]
        ids = np.array([lm["id"] for lm in lms], dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise SceneError("landmark ids must be unique")
        lo, hi = (np.array(b, dtype=float) for b in obj["room_bounds"])
        return cls(
            ids,
            np.array([lm["p"] for lm in lms], dtype=float).reshape(-1, 3),
            np.array([lm["n"] for lm in lms], dtype=float).reshape(-1, 3),
            (lo, hi),
            Intrinsics(**obj["intrinsics"]),
            int(obj.get("seed", 0)),
            int(obj.get("max_features", 200)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class FrameObservation:
    frame_index: int
    t: float
    ids: np.ndarray  # sorted landmark ids
    uv: np.ndarray  # (k, 2) pixels, rows aligned with ids

    @property
    def pixels(self):
        return {int(i): (float(u), float(v)) for i, (u, v) in zip(self.ids, self.uv)}


def generate_scene(seed, n_landmarks=1500, room=((0.0, 0.0, 0.0), (6.0, 5.0, 3.0)),
                   intrinsics=None, max_features=200):
    """Landmarks spread uniformly by area over the six faces of ``room``."""
    if n_landmarks < 50:
        raise SceneError("need at least 50 landmarks")
    lo, hi = (np.asarray(c, dtype=float) for c in room)
    ext = hi - lo
    if lo.shape != (3,) or np.any(~np.isfinite(ext)) or np.any(ext <= 0):
        raise SceneError(f"degenerate room box {room}")
    g = rng.stream(seed, "scene", "landmarks")
    # faces: (axis fixed, at lo or hi)
    faces = [(a, side) for a in range(3) for side in (0, 1)]
    areas = np.array([np.prod(np.delete(ext, a)) for a, _ in faces])
    face = g.choice(len(faces), size=n_landmarks, p=areas / areas.sum())
    pts = lo + g.random((n_landmarks, 3)) * ext
    normals = np.zeros((n_landmarks, 3))
    for f, (a, side) in enumerate(faces):
        sel = face == f
        pts[sel, a] = hi[a] if side else lo[a]
        normals[sel, a] = -1.0 if side else 1.0
    return SceneModel(
        np.arange(n_landmarks, dtype=np.int64), pts, normals, (lo, hi),
        intrinsics or Intrinsics(), int(seed), int(max_features),
    )


def look_rotation(yaw, pitch):
    """World <- camera rotation looking along heading ``yaw`` tilted up by ``pitch``."""
    cp = math.cos(pitch)
    fwd = np.array([cp * math.cos(yaw), cp * math.sin(yaw), math.sin(pitch)])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    down = np.cross(fwd, right)
    return np.column_stack([right, down, fwd])


# -- scan trajectories -----------------------------------------------------


def _minjerk(tau):
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)


class _Script:
    """Piecewise min-jerk motion between keyposes ``(pos, yaw, pitch)``."""

    def __init__(self, pos, yaw, pitch):
        self.knots = [(0.0, np.asarray(pos, dtype=float), float(yaw), float(pitch))]

    @property
    def end(self):
        return self.knots[-1]

    def hold(self, duration):
        t, p, y, pt = self.end
        self.knots.append((t + duration, p, y, pt))

    def move(self, pos, yaw, pitch, v_peak, w_peak=MAX_TURN_RATE):
        t, p, y, pt = self.end
        pos = np.asarray(pos, dtype=float)
        dur = max(
            0.5,
            _MINJERK_PEAK * np.linalg.norm(pos - p) / v_peak,
            _MINJERK_PEAK * abs(yaw - y) / w_peak,
            _MINJERK_PEAK * abs(pitch - pt) / w_peak,
        )
        self.knots.append((t + dur, pos, float(yaw), float(pitch)))

    def sample(self, times):
        kt = np.array([k[0] for k in self.knots])
        seg = np.clip(np.searchsorted(kt, times, side="right") - 1, 0, len(kt) - 2)
        out_p, out_R = [], []
        for t, i in zip(times, seg):
            t0, p0, y0, q0 = self.knots[i]
            t1, p1, y1, q1 = self.knots[i + 1]
            s = _minjerk(min(1.0, max(0.0, (t - t0) / (t1 - t0))))
            out_p.append(p0 + s * (p1 - p0))
            out_R.append(look_rotation(y0 + s * (y1 - y0), q0 + s * (q1 - q0)))
        return np.array(out_p), np.array(out_R)


def _interior(lo, hi, margin):
    lo2, hi2 = lo + margin, hi - margin
    lo2[2], hi2[2] = max(lo[2] + 1.1, lo2[2]), min(hi[2] - 1.0, hi2[2])
    return lo2, np.maximum(hi2, lo2 + 1e-3)


def _near_angle(target, current):
    """``target`` shifted by a multiple of 2 pi to be closest to ``current``."""
    return current + (target - current + math.pi) % (2 * math.pi) - math.pi


def _script_orbit(g, lo, hi, duration):
    c = 0.5 * (lo + hi)
    r = max(0.6, 0.5 * min(hi[0] - lo[0], hi[1] - lo[1]) - 1.3)
    phi = g.uniform(0, 2 * math.pi)
    h = g.uniform(1.3, 1.6)
    sc = _Script([c[0] + r * math.cos(phi), c[1] + r * math.sin(phi), h], phi, 0.0)
    sc.hold(g.uniform(0.5, 1.5))
    direction = 1.0 if g.random() < 0.5 else -1.0
    while sc.end[0] < duration:
        phi += direction * math.radians(g.uniform(15, 35))
        h = float(np.clip(h + g.normal(0, 0.08), 1.2, 1.7))
        yaw = _near_angle(phi + math.radians(g.uniform(-25, 25)), sc.end[2])
        sc.move([c[0] + r * math.cos(phi), c[1] + r * math.sin(phi), h], yaw,
                math.radians(g.uniform(-12, 8)), g.uniform(0.2, 0.45), math.radians(g.uniform(15, 30)))
        if g.random() < 0.6:
            sc.hold(g.uniform(0.5, 2.5))
    return sc


def _script_sweep(g, lo, hi, duration):
    ilo, ihi = _interior(lo, hi, 1.0)
    pos = g.uniform(ilo, ihi)
    yaw = g.uniform(0, 2 * math.pi)
    sc = _Script(pos, yaw, 0.0)
    sc.hold(g.uniform(0.5, 1.5))
    while sc.end[0] < duration:
        # pan back and forth at one station
        for _ in range(int(g.integers(2, 4))):
            yaw = sc.end[2] + math.radians(g.uniform(30, 70)) * (1 if g.random() < 0.5 else -1)
            sc.move(sc.end[1], yaw, math.radians(g.uniform(-10, 6)), 0.3, math.radians(g.uniform(12, 25)))
            if g.random() < 0.5:
                sc.hold(g.uniform(0.5, 2.0))
        step = g.normal(size=2)
        step = step / np.linalg.norm(step) * g.uniform(0.5, 1.5)
        nxt = np.clip(sc.end[1] + np.array([step[0], step[1], g.normal(0, 0.05)]), ilo, ihi)
        sc.move(nxt, sc.end[2], 0.0, g.uniform(0.2, 0.4))
        sc.hold(g.uniform(0.5, 1.5))
    return sc


def _script_walkthrough(g, lo, hi, duration):
    ilo, ihi = _interior(lo, hi, 0.8)
    pos = g.uniform(ilo, ihi)
    pos[2] = g.uniform(1.3, 1.6)
    sc = _Script(pos, g.uniform(0, 2 * math.pi), 0.0)
    sc.hold(g.uniform(0.5, 1.5))
    while sc.end[0] < duration:
        cur = sc.end[1]
        # prefer waypoints roughly ahead so turns stay moderate
        for attempt in range(40):
            nxt = g.uniform(ilo, ihi)
            nxt[2] = float(np.clip(cur[2] + g.normal(0, 0.1), max(ilo[2], 1.2), min(ihi[2], 1.7)))
            step = (nxt - cur)[:2]
            turn = abs(_near_angle(math.atan2(step[1], step[0]), sc.end[2]) - sc.end[2])
            if 1.2 <= np.linalg.norm(step) <= 3.5 and (turn <= math.radians(100) or attempt >= 30):
                break
        heading = math.atan2(nxt[1] - cur[1], nxt[0] - cur[0])
        yaw = _near_angle(heading + math.radians(g.uniform(-10, 10)), sc.end[2])
        pitch = math.radians(g.uniform(-8, 4))
        # turn towards the next waypoint, then walk there looking ahead
        sc.move(cur, yaw, pitch, 0.3, math.radians(g.uniform(30, 40)))
        sc.move(nxt, yaw, pitch, g.uniform(0.3, 0.5))
        u = g.random()
        if u < 0.3:
            sc.hold(g.uniform(0.5, 1.5))
        elif u < 0.4:
            # look around in place
            sc.move(sc.end[1], sc.end[2] + math.radians(g.uniform(-40, 40)), sc.end[3], 0.3,
                    math.radians(g.uniform(15, 30)))
    return sc


_SCRIPTS = {"orbit": _script_orbit, "sweep": _script_sweep, "walkthrough": _script_walkthrough}


def generate_scan_trajectory(seed, style="walkthrough", duration=33.0, room=None):
    """Smooth handheld-like scan through ``room`` sampled at 30 poses/s.

    Motion is a chain of minimum-jerk moves and pauses between keyposes, so
    position and orientation are C2 and start and end at rest.
    """
    if style not in _SCRIPTS:
        raise SceneError(f"unknown trajectory style {style!r}; expected one of {STYLES}")
    if not 10.0 <= duration <= 120.0:
        raise SceneError("duration must lie in [10, 120] s")
    if room is None:
        room = ((0.0, 0.0, 0.0), (6.0, 5.0, 3.0))
    elif isinstance(room, SceneModel):
        room = room.room_bounds
    lo, hi = (np.asarray(c, dtype=float) for c in room)
    g = rng.stream(seed, "trajectory", style)
    script = _SCRIPTS[style](g, lo, hi, duration)
    t = np.arange(int(round(duration * FRAME_RATE))) / FRAME_RATE
    p, R = script.sample(t)
    return [PoseSample(float(ti), pi, so3.matrix_to_quat(Ri)) for ti, pi, Ri in zip(t, p, R)]


# -- observation -----------------------------------------------------------


def _pose_arrays(pose):
    if isinstance(pose, PoseSample):
        return pose.p, pose.R, pose.t
    p, R = pose[0], pose[1]
    t = pose[2] if len(pose) > 2 else 0.0
    return np.asarray(p, dtype=float), np.asarray(R, dtype=float), float(t)


def _project(scene, p, R):
    K = scene.intrinsics
    xc = (scene.landmarks - p) @ R  # rows: R^T (X - p)
    z = xc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * xc[:, 0] / z + K.cx
        v = K.fy * xc[:, 1] / z + K.cy
    ok = (z >= MIN_DEPTH) & (z <= MAX_DEPTH) & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    return ok, u, v, z, xc


def observe(scene, pose, frame_index=0):
    """Pinhole projection of landmarks in range, capped at ``max_features``.

    When more than ``max_features`` landmarks are visible the strongest ones
    (a fixed per-landmark priority) are kept, so the same physical point keeps
    being tracked from frame to frame.
    """
    p, R, t = _pose_arrays(pose)
    ok, u, v, _, _ = _project(scene, p, R)
    idx = np.flatnonzero(ok)
    if len(idx) > scene.max_features:
        keep = np.argsort(-scene.strength()[idx], kind="stable")[: scene.max_features]
        idx = np.sort(idx[keep])
    ids = scene.ids[idx]
    order = np.argsort(ids, kind="stable")
    idx = idx[order]
    return FrameObservation(int(frame_index), float(t), scene.ids[idx], np.column_stack([u[idx], v[idx]]))


def average_parallax(obs_kf, obs_cand):
    """Mean pixel displacement over shared landmark ids and the shared count.

    With no shared landmarks the mean is ``nan`` and the count is 0.
    """
    common, a, b = np.intersect1d(obs_kf.ids, obs_cand.ids, assume_unique=True, return_indices=True)
    if len(common) == 0:
        return math.nan, 0
    disp = np.linalg.norm(obs_cand.uv[b] - obs_kf.uv[a], axis=1)
    return float(disp.mean()), int(len(common))


def _taper(x, lo, hi, width):
    """Smooth 0 -> 1 -> 0 window on [lo, hi] with ramps of ``width``."""
    a = np.clip((x - lo) / width, 0.0, 1.0)
    b = np.clip((hi - x) / width, 0.0, 1.0)
    return a * a * (3 - 2 * a) * b * b * (3 - 2 * b)


def _fourier_features(scene, dim):
    key = ("rff", dim)
    if key not in scene._cache:
        g = rng.stream(scene.seed, "scene", "token-fourier", dim)
        scene._cache[key] = (g.standard_normal((dim, 3)), g.uniform(0.0, 2.0 * math.pi, dim))
    return scene._cache[key]


def visual_token(scene, pose, dim=256, pixel_sigma=TOKEN_PIXEL_SIGMA, depth_sigma=TOKEN_DEPTH_SIGMA):
    """Deterministic unit-norm appearance embedding of a view.

    Each visible landmark contributes its hashed direction, weighted by
    foreshortening, inverse depth and a smooth image-border/depth window, and
    modulated channel-wise by random Fourier features of where it appears
    (pixel position and log depth). Two views of the same landmark therefore
    correlate through a Gaussian kernel of width ``pixel_sigma`` pixels and
    ``depth_sigma`` in log depth, and views of different landmarks are close
    to orthogonal. Returns the zero vector when nothing is visible.
    """
    if dim < 16:
        raise SceneError("token dimension must be >= 16")
    p, R, _ = _pose_arrays(pose)
    K = scene.intrinsics
    _, u, v, z, xc = _project(scene, p, R)
    with np.errstate(invalid="ignore", divide="ignore"):
        ray = -(xc / np.linalg.norm(xc, axis=1, keepdims=True)) @ R.T
        cos_view = np.clip(np.einsum("ij,ij->i", ray, scene.normals), 0.0, 1.0)
        w = (
            cos_view
            / np.where(z > 0, z, 1.0)
            * (z > 0)
            * _taper(u, 0.0, K.width, 0.1 * K.width)
            * _taper(v, 0.0, K.height, 0.1 * K.height)
            * _taper(z, MIN_DEPTH, MAX_DEPTH, 0.2)
        )
    w = np.nan_to_num(w)
    idx = np.flatnonzero(w > 0)
    if len(idx) == 0:
        return np.zeros(dim)
    feats = w[idx, None] * scene.token_directions(dim)[idx]
    omega, phase = _fourier_features(scene, dim)
    x = np.column_stack([u[idx] / pixel_sigma, v[idx] / pixel_sigma, np.log(z[idx]) / depth_sigma])
    vec = np.einsum("nd,nd->d", feats, np.cos(x @ omega.T + phase))
    n = np.linalg.norm(vec)
    return vec / n if n > 0 else np.zeros(dim)
