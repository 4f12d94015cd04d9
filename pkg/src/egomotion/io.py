"""CSV and JSON file formats.

Poses: ``t,px,py,pz,qw,qx,qy,qz``. IMU: ``t,wx,wy,wz,ax,ay,az``.
Keyframes: ``frame_index,t``. Floats are written with 17 significant digits
so files round-trip exactly and are byte-identical across runs.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .imu_synth import ImuSequence
from .trajectory import PoseSample

__all__ = [
    "FormatError",
    "POSE_HEADER",
    "IMU_HEADER",
    "KEYFRAME_HEADER",
    "read_poses",
    "write_poses",
    "read_imu",
    "write_imu",
    "read_keyframes",
    "write_keyframes",
    "write_json",
]

POSE_HEADER = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz")
IMU_HEADER = ("t", "wx", "wy", "wz", "ax", "ay", "az")
KEYFRAME_HEADER = ("frame_index", "t")


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based, counting the header."""

    def __init__(self, path, line, message):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


def _fmt(x):
    return format(float(x), ".17g")


def _read_table(path, header):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise FormatError(path, 1, "empty file")
        if tuple(c.strip() for c in first) != header:
            raise FormatError(path, 1, f"expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise FormatError(path, line, f"non-numeric field in {row}") from None
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(path, line, "non-finite value")
            rows.append((line, vals))
    if not rows:
        raise FormatError(path, 2, "no data rows")
    return rows


def _write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path


def read_poses(path):
    """Pose samples with normalized quaternions; rows must be time-ordered."""
    out, prev = [], -math.inf
    for line, (t, px, py, pz, qw, qx, qy, qz) in _read_table(path, POSE_HEADER):
        q = np.array([qw, qx, qy, qz])
        n = np.linalg.norm(q)
        if n < 1e-9:
            raise FormatError(path, line, "zero quaternion")
        if t <= prev:
            raise FormatError(path, line, f"timestamp {t} does not increase")
        prev = t
        out.append(PoseSample(t, (px, py, pz), q / n))
    return out


def write_poses(path, samples):
    rows = ([_fmt(s.t), *map(_fmt, s.p), *map(_fmt, s.q)] for s in samples)
    return _write_table(path, POSE_HEADER, rows)


def read_imu(path, rate=None):
    """IMU sequence; the rate is inferred from the median time step unless given."""
    rows = _read_table(path, IMU_HEADER)
    data = np.array([v for _, v in rows])
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if len(bad):
        raise FormatError(path, rows[bad[0] + 1][0], "timestamps must strictly increase")
    if rate is None:
        if len(t) < 2:
            raise FormatError(path, rows[0][0], "cannot infer a rate from one sample")
        rate = 1.0 / float(np.median(np.diff(t)))
        # snap to the nearest integer rate when the file was written from one
        if abs(rate - round(rate)) < 1e-6 * rate:
            rate = float(round(rate))
    return ImuSequence(t, data[:, 1:4].copy(), data[:, 4:7].copy(), float(rate))


def write_imu(path, seq):
    rows = ([_fmt(t), *map(_fmt, w), *map(_fmt, a)] for t, w, a in zip(seq.t, seq.gyro, seq.accel))
    return _write_table(path, IMU_HEADER, rows)


def read_keyframes(path):
    rows = _read_table(path, KEYFRAME_HEADER)
    return [(int(v[0]), v[1]) for _, v in rows]


def write_keyframes(path, records):
    rows = ([str(r.frame_index), _fmt(r.t)] for r in records)
    return _write_table(path, KEYFRAME_HEADER, rows)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n")
    return path
