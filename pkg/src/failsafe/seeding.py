"""Named deterministic random streams.

Every stochastic choice in the pipeline draws from a stream keyed by
(purpose, task, seed, ...) so that independent parts of a run can never
steal draws from each other. Same key, same platform, same numbers.
"""

import zlib

import numpy as np


def _key_word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) % (2**32)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_stream(*parts) -> np.random.Generator:
    """Return a fresh Generator for the stream named by `parts`.

    Parts may be strings or integers, e.g. seed_stream("scene", "pick_cube", 7).
    """
    if not parts:
        raise ValueError("seed_stream needs at least one part")
    words = [_key_word(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(words))
