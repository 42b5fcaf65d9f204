"""Deterministic seed expansion.

Sub-seeds come from a hash of the top-level seed and a key path, so a work
unit gets the same stream whether it runs serially or in a pool.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    h = hashlib.sha256(str(int(seed)).encode())
    for k in keys:
        h.update(b"\x00" + str(k).encode())
    return int.from_bytes(h.digest()[:8], "little") & (2**63 - 1)


def rng_for(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
