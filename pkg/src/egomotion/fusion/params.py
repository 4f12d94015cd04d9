"""Dimensions, parameter containers, initialization and serialization."""

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .. import rng

__all__ = [
    "FusionError",
    "FusionDims",
    "FusionParams",
    "TokenMatrix",
    "IMU_FEATURES",
    "param_shapes",
    "init_params",
    "zero_params",
    "save_params",
    "load_params",
]

IMU_FEATURES = 6  # gyro xyz, accel xyz
_MANIFEST_FORMAT = "egomotion-fusion-params"


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionDims:
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = None  # 4 * d_model when omitted
    gru_hidden: int = 32
    gru_layers: int = 2
    tokens_per_frame: int = 1
    max_segment_len: int = 512

    def __post_init__(self):
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise FusionError(f"{f.name} must be a positive integer, got {v!r}")
        if self.d_model % self.n_heads:
            raise FusionError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.head_dim % 2:
            raise FusionError(f"head width {self.head_dim} must be even for rotary pairs")

    @property
    def head_dim(self):
        return self.d_model // self.n_heads

    def to_dict(self):
        return asdict(self)


def _gru_names(dims):
    for layer in range(dims.gru_layers):
        for direction in ("fwd", "bwd"):
            yield layer, direction, f"gru.{layer}.{direction}"


def param_shapes(dims):
    """Ordered ``{name: shape}`` for every learnable tensor."""
    d, h, ff = dims.d_model, dims.gru_hidden, dims.d_ff
    shapes = {}
    for layer, _, prefix in _gru_names(dims):
        n_in = IMU_FEATURES if layer == 0 else 2 * h
        shapes[f"{prefix}.w_input"] = (n_in, 3 * h)
        shapes[f"{prefix}.w_hidden"] = (h, 3 * h)
        shapes[f"{prefix}.bias"] = (3 * h,)
    shapes["gru.out.weight"] = (2 * h, d)
    shapes["gru.out.bias"] = (d,)
    shapes["start_token"] = (d,)
    blocks = {
        "cross1.vision": ("query", "key", "value"),
        "cross1.motion": ("query", "key", "value"),
        "cross2": ("query", "key", "value"),
    }
    for block, projs in blocks.items():
        for proj in projs:
            shapes[f"{block}.{proj}"] = (d, d)
    for block in ("cross1.vision", "cross1.motion", "cross2"):
        shapes[f"{block}.ffn.w1"] = (d, ff)
        shapes[f"{block}.ffn.b1"] = (ff,)
        shapes[f"{block}.ffn.w2"] = (ff, d)
        shapes[f"{block}.ffn.b2"] = (d,)
    return shapes


class FusionParams:
    """Named float64 tensors with a fixed order; dict-like access.

    Attention naming: in the first layer ``cross1.vision.query`` projects
    visual queries while ``cross1.vision.key``/``value`` project the visual
    tokens that the motion queries attend to; ``cross1.motion.*`` mirrors it.
    """

    def __init__(self, dims, tensors):
        self.dims = dims
        shapes = param_shapes(dims)
        missing = set(shapes) - set(tensors)
        extra = set(tensors) - set(shapes)
        if missing or extra:
            raise FusionError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        self._t = {}
        for name, shape in shapes.items():
            arr = np.array(tensors[name], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise FusionError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise FusionError(f"{name} has non-finite entries")
            self._t[name] = arr

    def __getitem__(self, name):
        return self._t[name]

    def __iter__(self):
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    def items(self):
        return self._t.items()

    def names(self):
        return list(self._t)

    def copy(self):
        return FusionParams(self.dims, {k: v.copy() for k, v in self._t.items()})

    def replace(self, **tensors):
        t = dict(self._t)
        t.update(tensors)
        return FusionParams(self.dims, t)

    @property
    def size(self):
        return sum(v.size for v in self._t.values())


@dataclass(frozen=True)
class TokenMatrix:
    """Token rows with one integer position per row."""

    data: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        pos = np.asarray(self.positions)
        if data.ndim != 2 or pos.shape != (data.shape[0],):
            raise FusionError(f"token matrix {data.shape} with positions {pos.shape}")
        if not np.issubdtype(pos.dtype, np.integer):
            if not np.all(pos == np.round(pos)):
                raise FusionError("positions must be integers")
            pos = pos.astype(np.int64)
        if np.any(np.diff(pos) < 0):
            raise FusionError("positions must be nondecreasing")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.data.shape[0]

    def shifted(self, offset):
        return TokenMatrix(self.data, self.positions + int(offset))

    @classmethod
    def for_frames(cls, data, n_frames, tokens_per_frame=1, first=1):
        """Visual tokens laid out frame by frame, all tokens of a frame sharing its index."""
        pos = np.repeat(np.arange(first, first + n_frames), tokens_per_frame)
        return cls(data, pos)


def _xavier(g, shape):
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return g.uniform(-limit, limit, shape)


def _orthogonal(g, n):
    q, r = np.linalg.qr(g.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(dims, seed=0):
    """Xavier projections, orthogonal recurrent blocks, zero biases, small start token."""
    tensors = {}
    for name, shape in param_shapes(dims).items():
        g = rng.stream(seed, "fusion-init", name)
        if name.endswith("w_hidden"):
            h = shape[0]
            tensors[name] = np.hstack([_orthogonal(g, h) for _ in range(3)])
        elif name == "start_token":
            tensors[name] = 0.02 * g.standard_normal(shape)
        elif len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = _xavier(g, shape)
    return FusionParams(dims, tensors)


def zero_params(dims):
    return FusionParams(dims, {k: np.zeros(s) for k, s in param_shapes(dims).items()})


def _paths(path):
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".bin")


def save_params(params, path):
    """Write ``<path>.bin`` (row-major little-endian float64) and ``<path>.json``."""
    manifest_path, blob_path = _paths(path)
    entries, offset = [], 0
    with open(blob_path, "wb") as fh:
        for name, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest = {
        "format": _MANIFEST_FORMAT,
        "version": 1,
        "dtype": "float64",
        "byte_order": "little",
        "dims": params.dims.to_dict(),
        "blob": blob_path.name,
        "tensors": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest_path, blob_path


def load_params(path):
    manifest_path, _ = _paths(path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != _MANIFEST_FORMAT:
        raise FusionError(f"{manifest_path} is not a fusion parameter manifest")
    dims = FusionDims(**manifest["dims"])
    blob = np.fromfile(manifest_path.with_name(manifest["blob"]), dtype="<f8")
    tensors = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + n > blob.size:
            raise FusionError(f"parameter blob too short for {e['name']}")
        tensors[e["name"]] = blob[e["offset"] : e["offset"] + n].reshape(e["shape"])
    return FusionParams(dims, tensors)
