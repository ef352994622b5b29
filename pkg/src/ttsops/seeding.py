"""Portable seed derivation.

All randomness goes through ``numpy.random.Generator(PCG64(seed))``. Seeds for
sub-streams are derived from a 64-bit BLAKE2b digest of the key parts, so a
stream depends only on its key, never on call order or ``PYTHONHASHSEED``.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stable_hash(*parts) -> int:
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def derive_seed(seed: int, *parts) -> int:
    return stable_hash(int(seed) & MASK64, *parts)


def variant_seed(seed: int, variant: str) -> int:
    """Per-variant loop seed: ``seed XOR stable_hash(variant)``."""
    return (int(seed) & MASK64) ^ stable_hash(variant)


def rng_for(seed: int, *parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *parts)))
