"""Seeded deterministic byte stream (AES-256-CTR keystream over a hashed seed)."""
from __future__ import annotations

import hashlib

from Crypto.Cipher import AES


class Drbg:
    def __init__(self, seed, label: str = ""):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "little", signed=seed < 0)
        key = hashlib.sha256(b"tracesmith-drbg\0" + label.encode() + b"\0" + bytes(seed)).digest()
        self._ks = AES.new(key, AES.MODE_CTR, nonce=b"", initial_value=0)

    def read(self, n: int) -> bytes:
        return self._ks.encrypt(bytes(n))

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow needs n > 0")
        if n == 1:
            return 0
        nbits = (n - 1).bit_length()
        nbytes = (nbits + 7) // 8
        mask = (1 << nbits) - 1
        while True:
            v = int.from_bytes(self.read(nbytes), "little") & mask
            if v < n:
                return v
