"""Seed derivation shared by every stochastic routine.

Each independent stream is addressed by ``(seed, *key)``; the key is folded
into a :class:`numpy.random.SeedSequence` spawn key, so results never depend
on the order in which streams are requested.
"""
import zlib

import numpy as np

RNG_NAME = "PCG64"
RNG_VERSION = f"numpy-{np.__version__}"


def _key_part(part):
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("negative stream keys are not allowed")
        return int(part)
    if isinstance(part, bytes):
        return zlib.crc32(part)
    return zlib.crc32(str(part).encode("utf8"))


def derive_rng(seed, *key):
    """Return an independent ``Generator`` for stream ``key`` under ``seed``."""
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot derive keyed streams from a Generator")
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
