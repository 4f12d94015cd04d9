"""Scenario suites: scene + scan + IMU bundles, and the experiments run on them."""

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from . import cascade as cas
from . import imu_synth, preintegration, rng, scene_sim
from .trajectory import DEFAULT_KNOT_DT, fit_spline

__all__ = [
    "Scenario",
    "PreparedScenario",
    "SceneProviders",
    "load_suite",
    "bundled_suite_path",
    "bundled_data_path",
    "prepare",
    "bench",
    "stage1_drift",
]


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    style: str = "walkthrough"
    duration: float = 33.3
    n_landmarks: int = 1500
    noise: str = "default"  # "default" | "zero"
    room: tuple = ((0.0, 0.0, 0.0), (6.0, 5.0, 3.0))


def bundled_data_path(*parts):
    return resources.files("egomotion").joinpath("data", *parts)


def bundled_suite_path():
    return bundled_data_path("suite.json")


def load_suite(path=None):
    """Read a suite manifest: ``{"scenarios": [{name, seed, style, ...}, ...]}``."""
    src = bundled_suite_path() if path is None else path
    with open(src) as fh:
        obj = json.load(fh)
    scenarios = []
    for entry in obj["scenarios"]:
        entry = dict(entry)
        if "room" in entry:
            entry["room"] = tuple(tuple(map(float, c)) for c in entry["room"])
        scenarios.append(Scenario(**entry))
    if not scenarios:
        raise ValueError("empty scenario suite")
    return scenarios


class SceneProviders:
    """Parallax and token providers backed by ground-truth scene geometry.

    Observations are memoized per frame index; tokens are not, so every
    token request costs a full embedding.
    """

    def __init__(self, scene, poses, token_dim=256):
        self.scene, self.poses, self.token_dim = scene, poses, token_dim
        self._obs = {}

    def observation(self, frame):
        obs = self._obs.get(frame.index)
        if obs is None:
            obs = self._obs[frame.index] = scene_sim.observe(self.scene, self.poses[frame.index], frame.index)
        return obs

    def parallax(self, ref, cand):
        return scene_sim.average_parallax(self.observation(ref), self.observation(cand))

    def token(self, frame):
        return scene_sim.visual_token(self.scene, self.poses[frame.index], self.token_dim)


@dataclass
class PreparedScenario:
    scenario: Scenario
    scene: object
    poses: list
    spline: object
    imu: object
    initial_state: object
    providers: SceneProviders = field(repr=False)

    @property
    def frames(self):
        return [cas.Frame(k, p.t) for k, p in enumerate(self.poses)]

    def run(self, cfg):
        return cas.run_cascade(
            self.frames, self.imu, cfg, self.providers.parallax, self.providers.token, self.initial_state
        )


def noise_model(kind, seed):
    if kind == "zero":
        return imu_synth.NoiseModel.zero(seed)
    if kind == "default":
        return imu_synth.NoiseModel(seed=seed)
    if isinstance(kind, imu_synth.NoiseModel):
        return kind
    raise ValueError(f"unknown noise model {kind!r}")


def initial_state(spline, frame=None):
    """Strapdown seed at the spline start: pose from the trajectory, velocity too."""
    R0 = spline.eval_rotation(spline.t0) if frame is None or frame.R0 is None else frame.R0
    return preintegration.NavState.initial(
        spline.t0, R0, spline.eval_velocity(spline.t0), spline.eval_position(spline.t0)
    )


def prepare(scenario, knot_dt=DEFAULT_KNOT_DT, rate=imu_synth.DEFAULT_RATE, token_dim=256):
    scene = scene_sim.generate_scene(scenario.seed, scenario.n_landmarks, scenario.room)
    poses = scene_sim.generate_scan_trajectory(scenario.seed, scenario.style, scenario.duration, scenario.room)
    spline = fit_spline(poses, knot_dt)
    ideal = imu_synth.synthesize_ideal(spline, imu_synth.WorldFrame(), rate)
    imu = imu_synth.apply_noise(ideal, noise_model(scenario.noise, scenario.seed))
    return PreparedScenario(
        scenario, scene, poses, spline, imu, initial_state(spline), SceneProviders(scene, poses, token_dim)
    )


def bench(prepared, cfg, uniform=(32,)):
    """Frame and extraction counts for the cascade versus uniform sampling."""
    rows = []
    for prep in prepared:
        records, stats = prep.run(cfg)
        row = {
            "scenario": prep.scenario.name,
            "n_frames": stats.n_frames,
            "cascade": {
                "n_keyframes": stats.n_keyframes,
                "n_pass_stage1": stats.n_pass_stage1,
                "n_pass_stage2": stats.n_pass_stage2,
                "n_token_extractions": stats.n_token_extractions,
                "stage1_retention": stats.stage1_retention,
                "extraction_fraction": stats.extraction_fraction,
                "wall_time": stats.wall_time,
                "keyframes": [r.frame_index for r in records],
            },
            "uniform": {},
        }
        for n in uniform:
            idx = cas.uniform_keyframes(stats.n_frames, n)
            row["uniform"][str(n)] = {"n_keyframes": int(len(idx)), "n_token_extractions": int(len(idx))}
        rows.append(row)
    return rows


def stage1_drift(n_seeds=100, horizon=1.0, seed=0, noise=None, style="walkthrough"):
    """Displacement error of noisy strapdown integration over ``horizon`` seconds.

    For each seed a scan is synthesized, a random start time is drawn and the
    noisy IMU is integrated from the true state; the error is the distance
    between integrated and true displacement at the horizon.
    """
    errors = []
    for s in range(n_seeds):
        sub = seed * 100003 + s
        poses = scene_sim.generate_scan_trajectory(sub, style, 12.0)
        spline = fit_spline(poses)
        ideal = imu_synth.synthesize_ideal(spline)
        model = noise if noise is not None else imu_synth.NoiseModel()
        imu = imu_synth.apply_noise(ideal, imu_synth.NoiseModel(**{**asdict(model), "seed": sub}))
        n_h = int(round(horizon * imu.rate))
        k0 = int(rng.stream(sub, "drift", "start").integers(0, len(imu) - n_h - 1))
        t0 = float(imu.t[k0])
        state = preintegration.NavState.initial(
            t0, spline.eval_rotation(t0), spline.eval_velocity(t0), spline.eval_position(t0)
        )
        state = preintegration.integrate(state, imu, k0, k0 + n_h + 1)
        true_disp = spline.eval_position(state.t) - spline.eval_position(t0)
        errors.append(float(np.linalg.norm((state.p - spline.eval_position(t0)) - true_disp)))
    errors = np.array(errors)
    return {
        "horizon_s": horizon,
        "n_seeds": n_seeds,
        "median_displacement_error_m": float(np.median(errors)),
        "p90_displacement_error_m": float(np.percentile(errors, 90)),
        "max_displacement_error_m": float(errors.max()),
    }


def default_suite(n=20, duration=33.3, style="walkthrough"):
    return [Scenario(f"{style}-{k:02d}", 1000 + k, style, duration) for k in range(n)]
