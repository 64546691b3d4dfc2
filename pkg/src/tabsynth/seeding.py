"""Deterministic RNG derivation from one master seed.

Every subsystem derives its stream as ``rng(seed, label, *indices)`` where the
label is hashed with SHA-256. Identical (seed, label, indices) always yield
the identical stream, independent of call order, batch size, or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, label: str, *indices: int) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    for idx in indices:
        key = (key * 6364136223846793005 + idx + 1442695040888963407) % (1 << 64)
    return key


def rng(seed: int, label: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_key(seed, label, *indices))
