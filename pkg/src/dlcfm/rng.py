"""Named, counter-based random streams.

Every consumer of randomness asks for ``stream(seed, label, index)``. The
generator is a Philox instance keyed by a SeedSequence built from the global
seed, a stable hash of the label and the index, so streams are independent of
each other and of the order in which they are requested.
"""

import zlib

import numpy as np


def _label_key(label):
    return zlib.crc32(label.encode("utf-8"))


def stream(seed, label, index=0):
    """Return a fresh ``np.random.Generator`` for ``(seed, label, index)``."""
    if seed < 0 or index < 0:
        raise ValueError(f"seed and index must be non-negative, got {seed}, {index}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_label_key(label), int(index)))
    return np.random.Generator(np.random.Philox(ss))
