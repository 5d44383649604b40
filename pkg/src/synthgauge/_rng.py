"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed plus
a tuple of integer/string tags, so independent consumers never share state and
results do not depend on call order.
"""
import zlib

import numpy as np


def _tag(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def rng_for(seed, *keys):
    seq = np.random.SeedSequence([int(seed), *(_tag(k) for k in keys)])
    return np.random.Generator(np.random.Philox(seq))
