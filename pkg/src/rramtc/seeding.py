"""Deterministic seed derivation for parallel Monte Carlo runs.

Child seeds are derived from a master seed and a sequence of stage tags or
indices through a SplitMix64 finalizer.  The derivation rule is pure integer
arithmetic (constants below), so any runtime that reproduces it draws the
same child seeds; trial results are then independent of worker count and
execution order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# SplitMix64 constants (Steele, Lea & Flood).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# FNV-1a 64-bit, used to fold string stage tags into the mix.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """One SplitMix64 step: advance by the golden gamma and finalize."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fold(part: int | str) -> int:
    if isinstance(part, str):
        h = _FNV_OFFSET
        for byte in part.encode("utf-8"):
            h = ((h ^ byte) * _FNV_PRIME) & _MASK64
        return h
    return int(part) & _MASK64


def derive_seed(master_seed: int, *parts: int | str) -> int:
    """Mix a master seed with stage tags / indices into a 64-bit child seed.

    ``parts`` may be integers (trial or concentration indices) or strings
    (stage tags such as ``"ensemble"``).  The same inputs always yield the
    same child seed.
    """
    z = splitmix64(int(master_seed) & _MASK64)
    for part in parts:
        z = splitmix64(z ^ splitmix64(_fold(part)))
    return z


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
