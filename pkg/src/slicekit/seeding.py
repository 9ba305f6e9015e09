"""Named deterministic random streams.

Every stochastic stage in the package draws from a stream derived from one
master seed plus a tuple of stage names. Streams are backed by the Philox
counter-based bit generator, so independently derived streams never overlap
and generation order does not depend on scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _name_entropy(name: object) -> int:
    digest = hashlib.blake2b(repr(name).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(master_seed: int, *names: object) -> np.random.SeedSequence:
    """SeedSequence keyed by the master seed and a tuple of stage names."""
    entropy = [int(master_seed) & _MASK64] + [_name_entropy(n) for n in names]
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, *names: object) -> np.random.Generator:
    """Generator over an independent Philox stream for the named stage."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, *names)))


def derive_seed(master_seed: int, *names: object) -> int:
    """Collapse a named stream into a plain 63-bit integer seed."""
    state = seed_sequence(master_seed, *names).generate_state(1, np.uint64)[0]
    return int(state) >> 1
