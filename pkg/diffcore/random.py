"""
Counter-based seeded random streams.

A stream is derived from (global seed, purpose tag, indices) so that the
numbers a sample sees do not depend on evaluation order or worker count.
"""
import zlib

import numpy as np

from .exceptions import ParameterError


def stream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """
    Return an independent Philox generator for one use site.

    Args:
        seed: Global run seed (non-negative)
        tag: Purpose tag, e.g. 'shuffle', 'dropout', 'ooc'
        indices: Extra non-negative keys (epoch, sample index, ...)
    """
    keys = [int(seed), *(int(i) for i in indices)]
    if any(k < 0 for k in keys):
        raise ParameterError(f"seed and stream indices must be non-negative, got {keys}")
    entropy = [keys[0], zlib.crc32(tag.encode('utf-8')), *keys[1:]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
