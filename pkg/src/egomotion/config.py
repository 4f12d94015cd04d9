"""Run configuration: a sectioned ``key = value`` file.

Every key has a default, unknown sections and keys are rejected, and the
config hash is the SHA-256 of the canonical JSON form so that files which
differ only in layout, comments or number spelling hash identically.
"""

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

from .cascade import CascadeConfig
from .fusion import FusionDims
from .imu_synth import DEFAULT_RATE, NoiseModel

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "config_hash", "SCHEMA"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSettings:
    seed: int = 0
    style: str = "walkthrough"
    duration: float = 33.3
    n_landmarks: int = 1500
    room: tuple = (0.0, 0.0, 0.0, 6.0, 5.0, 3.0)


@dataclass(frozen=True)
class ImuSettings:
    rate: float = DEFAULT_RATE
    knot_dt: float = 0.1


@dataclass(frozen=True)
class OutputSettings:
    out_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    dims: FusionDims = field(default_factory=FusionDims)
    scene: SceneSettings = field(default_factory=SceneSettings)
    imu: ImuSettings = field(default_factory=ImuSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def to_dict(self):
        d = {
            "run": {"seed": self.seed},
            "cascade": _cascade_to_file(self.cascade),
            "noise": {k: v for k, v in asdict(self.noise).items() if k != "seed"},
            "fusion": asdict(self.dims),
            "scene": asdict(self.scene),
            "imu": asdict(self.imu),
            "output": asdict(self.output),
        }
        d["scene"]["room"] = list(d["scene"]["room"])
        return d

    def with_seed(self, seed):
        return replace(self, seed=int(seed), noise=replace(self.noise, seed=int(seed)))


def _cascade_to_file(cfg):
    return {
        "tau_d": cfg.tau_d,
        "tau_theta_deg": math.degrees(cfg.tau_theta),
        "tau_p": cfg.tau_p,
        "tau_v": cfg.tau_v,
        "min_tracked": cfg.min_tracked,
        "rate_video": cfg.rate_video,
    }


# section -> key -> (type, description); the documented schema of the file
SCHEMA = {
    "run": {"seed": (int, "top-level seed; every random stream derives from it")},
    "cascade": {
        "tau_d": (float, "stage-1 displacement threshold, m"),
        "tau_theta_deg": (float, "stage-1 rotation threshold, degrees"),
        "tau_p": (float, "stage-2 mean parallax threshold, px"),
        "tau_v": (float, "stage-3 cosine distance threshold"),
        "min_tracked": (int, "fewer shared landmarks than this counts as lost tracking"),
        "rate_video": (float, "frame rate, Hz"),
    },
    "noise": {
        "sigma_a": (float, "accelerometer white noise density, m/s^2/sqrt(Hz)"),
        "sigma_g": (float, "gyroscope white noise density, rad/s/sqrt(Hz)"),
        "sigma_ba": (float, "accelerometer bias random walk, m/s^3/sqrt(Hz)"),
        "sigma_bg": (float, "gyroscope bias random walk, rad/s^2/sqrt(Hz)"),
    },
    "fusion": {
        "d_model": (int, "token width"),
        "n_heads": (int, "attention heads"),
        "d_ff": (int, "feed-forward hidden width"),
        "gru_hidden": (int, "GRU hidden size per direction"),
        "gru_layers": (int, "stacked GRU layers"),
        "tokens_per_frame": (int, "visual tokens per keyframe"),
        "max_segment_len": (int, "IMU samples per segment before stride subsampling"),
    },
    "scene": {
        "seed": (int, "scene and trajectory seed"),
        "style": (str, "orbit | sweep | walkthrough"),
        "duration": (float, "scan length, s"),
        "n_landmarks": (int, "landmarks on the room surfaces"),
        "room": (tuple, "xmin, ymin, zmin, xmax, ymax, zmax in m"),
    },
    "imu": {
        "rate": (float, "IMU sample rate, Hz"),
        "knot_dt": (float, "spline knot spacing, s"),
    },
    "output": {"out_dir": (str, "directory for outputs")},
}


def _convert(section, key, raw):
    kind = SCHEMA[section][key][0]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
        if kind is tuple:
            vals = tuple(float(x) for x in raw.replace(",", " ").split())
            if len(vals) != 6:
                raise ValueError
            return vals
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def parse_config(text, source="<string>"):
    """Parse config text into a :class:`RunConfig`; missing keys take defaults."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[(section, key)] = _convert(section, key, raw)
    return _build(values)


def _build(values):
    def pick(section, cls, rename=None):
        kw = {}
        names = {f.name for f in fields(cls)}
        for (sec, key), v in values.items():
            if sec == section:
                name = (rename or {}).get(key, key)
                if name in names:
                    kw[name] = v
        return kw

    try:
        seed = values.get(("run", "seed"), 0)
        casc = pick("cascade", CascadeConfig)
        if ("cascade", "tau_theta_deg") in values:
            casc["tau_theta"] = math.radians(values[("cascade", "tau_theta_deg")])
        return RunConfig(
            seed=seed,
            cascade=CascadeConfig(**casc),
            noise=NoiseModel(**pick("noise", NoiseModel), seed=seed),
            dims=FusionDims(**pick("fusion", FusionDims)),
            scene=SceneSettings(**pick("scene", SceneSettings)),
            imu=ImuSettings(**pick("imu", ImuSettings)),
            output=OutputSettings(**pick("output", OutputSettings)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None):
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def config_hash(cfg):
    """SHA-256 of the canonical JSON of the effective configuration."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()
