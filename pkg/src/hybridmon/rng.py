"""Named, seeded random streams.

A run seed fans out into independent per-subsystem streams ("plant",
"paths", "noise", "attacker", ...).  Each stream is keyed by its name, so
adding a subsystem never shifts the draws of another one.
"""

from __future__ import annotations

import hashlib
import random

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *names: object) -> int:
    """Hash ``seed`` and a name path into a 64-bit child seed."""
    h = hashlib.sha256(str(int(seed) & MASK64).encode())
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "big")


def stream(seed: int, *names: object) -> random.Random:
    return random.Random(derive_seed(seed, *names))


class Streams:
    """Lazily created named streams for one run."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._streams: dict[tuple, random.Random] = {}

    def get(self, *names: object) -> random.Random:
        key = tuple(str(n) for n in names)
        rng = self._streams.get(key)
        if rng is None:
            rng = self._streams[key] = stream(self.seed, *key)
        return rng

    def seed_for(self, *names: object) -> int:
        return derive_seed(self.seed, *names)
