"""Seed derivation: every random stream is keyed by (global seed, names...).

Child seeds are sha256-derived so that adding a consumer never shifts the
streams of existing ones.
"""

import hashlib

import numpy as np


def child_seed(global_seed: int, *names: str) -> int:
    """Derive a deterministic 63-bit seed for a named sub-stream."""
    key = f"{global_seed}/" + "/".join(names)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def generator(global_seed: int, *names: str) -> np.random.Generator:
    """NumPy generator for the named sub-stream."""
    return np.random.Generator(np.random.PCG64(child_seed(global_seed, *names)))
