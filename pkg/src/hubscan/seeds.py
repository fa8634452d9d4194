"""Deterministic seed derivation.

One master 64-bit seed per run; every stochastic component derives its own
stream from a hash of (master, component labels), so adding workers or
reordering component execution never perturbs another component's draws.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *labels) -> int:
    """Stable 64-bit child seed for a named component."""
    key = f"{master}/" + "/".join(str(x) for x in labels)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
