"""One u64 seed, split per purpose."""

import zlib

import numpy as np

PURPOSES = ("corpus", "init", "shuffle", "synth", "trials", "holdout", "eval")


def rng_for(seed, purpose):
    """Independent generator for ``purpose`` derived from ``seed``.

    Streams are keyed by (seed, crc32(purpose)) through a Philox counter-based
    bit generator, so adding a new purpose never shifts existing streams.
    """
    key = np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(purpose.encode())])
    return np.random.Generator(np.random.Philox(key))
