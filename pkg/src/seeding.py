# src/seeding.py
"""
Order-independent seed derivation.

Every random stream (client training, server noise, data partitioning, shadow
sampling) gets its own seed computed from the experiment seed and a role key,
so rerunning a single round or a single client reproduces its draws no matter
what ran before it.
"""

from __future__ import annotations
import hashlib
from typing import Union

import numpy as np

SeedKey = Union[int, str]


def derive_seed(base_seed: int, *keys: SeedKey) -> int:
    """Hash (base_seed, *keys) into a non-negative 63-bit integer."""
    payload = "|".join([str(int(base_seed))] + [repr(k) for k in keys])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(base_seed: int, *keys: SeedKey) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, *keys))
