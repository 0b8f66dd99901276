"""Deterministic random-stream derivation.

Every stochastic component draws from a counter-based Philox generator whose
seed sequence is derived from a 64-bit master seed plus a tuple of tags naming
the purpose of the stream. String tags are hashed with CRC32 so derivation is
stable across processes and runs (unlike the builtin ``hash``).

Streams in use:

=================  =======================================
purpose            tags
=================  =======================================
universe sampling  ("universe",)
ground truth       ("truth", replication)
design matrix      ("design", replication, T)
noise vector       ("noise", replication, T)
cone sampling      ("re_certificate",)
=================  =======================================
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_sequence(master_seed: int, *tags) -> np.random.SeedSequence:
    """Build a SeedSequence from a master seed and purpose tags."""
    entropy = [int(master_seed) & _MASK64]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(zlib.crc32(tag.encode("utf-8")))
        else:
            entropy.append(int(tag) & _MASK64)
    return np.random.SeedSequence(entropy)


def derive_seed(master_seed: int, *tags) -> int:
    """Derive a child 64-bit integer seed for configs that carry plain seeds."""
    return int(seed_sequence(master_seed, *tags).generate_state(1, np.uint64)[0])


def generator(seed: int, *tags) -> np.random.Generator:
    """Philox generator for the stream named by ``tags`` under ``seed``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *tags)))
