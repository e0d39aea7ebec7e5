"""Named random substreams derived from a single 64-bit master seed.

Every stage that consumes randomness (attractor sampling, surface sampling,
camera placement, fitting) pulls its own generator via a stable stream name,
so stages can be re-run independently and still reproduce byte-identical
output for a given master seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return int(seed)


def stream_seed(master_seed: int, name: str) -> int:
    """Derive the 64-bit seed of the named substream."""
    check_seed(master_seed)
    digest = hashlib.sha256(f"bonsaigen:{name}".encode("utf-8")).digest()
    name_key = int.from_bytes(digest[:8], "little")
    # Mix through SeedSequence so nearby master seeds decorrelate.
    ss = np.random.SeedSequence([int(master_seed), name_key])
    return int(ss.generate_state(1, np.uint64)[0])


def substream(master_seed: int, name: str) -> np.random.Generator:
    """PCG64 generator for the named substream of a master seed."""
    return np.random.default_rng(stream_seed(master_seed, name))
