"""Named, counter-based random substreams.

Every consumer of randomness asks for a stream by ``(seed, name)``. The pair is
hashed into a 128-bit Philox key, so streams are independent of each other and
of the order in which they are requested: adding a new stream never shifts the
draws of an existing one.
"""

import hashlib

import numpy as np

__all__ = ["stream", "stream_key"]


def stream_key(seed, *names):
    """128-bit Philox key for ``seed`` and a path of stream names."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for name in names:
        h.update(b"\x00")
        h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little")


def stream(seed, *names):
    """Return a fresh :class:`numpy.random.Generator` for the named substream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *names)))
