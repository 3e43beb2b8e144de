"""Injectable randomness.

Seeded streams make whole protocol runs byte-reproducible, which is what the
spy-transparency comparison relies on. A seeded ``Rng`` is a simulation tool,
not a CSPRNG; unseeded instances draw from the OS.
"""
from __future__ import annotations

import hashlib
import random
import secrets


class Rng:
    def __init__(self, seed: int | bytes | None = None):
        self.seed = seed
        if seed is None:
            self._random = None
        else:
            if isinstance(seed, int):
                seed = seed.to_bytes(max(8, (seed.bit_length() + 7) // 8), "big", signed=seed < 0)
            self._random = random.Random(hashlib.sha256(b"ddssec-rng" + seed).digest())

    @property
    def deterministic(self) -> bool:
        return self._random is not None

    def bytes(self, n: int) -> bytes:
        if self._random is None:
            return secrets.token_bytes(n)
        return self._random.randbytes(n)

    def randbelow(self, n: int) -> int:
        if self._random is None:
            return secrets.randbelow(n)
        return self._random.randrange(n)

    def child(self, label: str) -> "Rng":
        """Independent sub-stream; consumption in one child never shifts another."""
        if self._random is None:
            return Rng(None)
        return Rng(self._random_seed_bytes() + label.encode())

    def _random_seed_bytes(self) -> bytes:
        seed = self.seed
        if isinstance(seed, int):
            seed = str(seed).encode()
        return hashlib.sha256(b"child" + seed).digest()


def os_rng() -> Rng:
    return Rng(None)
