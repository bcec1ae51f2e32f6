"""Splittable deterministic randomness.

Every random draw in the project flows from a single 64-bit seed through
named children, so two runs with the same seed replay the same streams
regardless of call interleaving across modules. Child derivation hashes
the parent state with the label (blake2b), which is stable across
platforms and Python versions; the underlying bit generator is PCG64.
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """A named node in a deterministic seed tree."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & 0xFFFFFFFFFFFFFFFF

    def child(self, label: str) -> "Rng":
        h = hashlib.blake2b(f"{self.state}/{label}".encode(), digest_size=8)
        return Rng(int.from_bytes(h.digest(), "big"))

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator seeded from this node's state."""
        return np.random.default_rng(self.state)

    def __repr__(self) -> str:
        return f"Rng(0x{self.state:016x})"
