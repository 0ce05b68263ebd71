"""Named, seeded random streams.

Each stream is a Philox counter-based generator keyed by ``(seed, name)``, so
noise synthesis, patch sampling and weight initialisation never share state
and reproduce identically across platforms.
"""

import zlib

import numpy as np


def stream(seed, name):
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(key,))))
