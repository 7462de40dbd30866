"""Deterministic RNG stream derivation.

Every random decision in a simulation draws from a stream derived from the
master seed plus a (purpose, *indices) tuple, so results never depend on
thread scheduling or call order between nodes.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed_sequence(master_seed: int, purpose: str, *indices: int) -> np.random.SeedSequence:
    """Stable seed sequence for (master_seed, purpose, *indices).

    The purpose string is mixed in via CRC32 (stable across processes and
    platforms, unlike the builtin ``hash``).
    """
    entropy = [master_seed & _MASK64, zlib.crc32(purpose.encode("utf-8"))]
    entropy.extend(int(i) & _MASK64 for i in indices)
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """PCG64 generator on the derived stream."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(master_seed, purpose, *indices)))


def derive_seed(master_seed: int, purpose: str, *indices: int) -> int:
    """Collapse a derived stream to a single u64, for APIs that take a seed."""
    return int(derive_seed_sequence(master_seed, purpose, *indices).generate_state(1, np.uint64)[0])
