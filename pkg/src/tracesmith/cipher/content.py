"""Which byte ranges of a file get encrypted."""
from __future__ import annotations

import struct
from dataclasses import dataclass

METHOD_IDS = {"full": 0, "first_n": 1, "last_n": 2, "segments": 3}
METHOD_NAMES = {v: k for k, v in METHOD_IDS.items()}


@dataclass(frozen=True)
class ContentMethod:
    kind: str = "full"
    n: int = 0     # first_n / last_n
    k: int = 0     # segments: bytes encrypted per step
    l: int = 0     # segments: bytes skipped per step

    def __post_init__(self):
        if self.kind not in METHOD_IDS:
            raise ValueError(f"unknown content method {self.kind!r}")
        if self.kind in ("first_n", "last_n") and self.n < 1:
            raise ValueError("first_n/last_n need n >= 1")
        if self.kind == "segments" and (self.k < 1 or self.l < 0):
            raise ValueError("segments need k >= 1 and l >= 0")

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def first(cls, n: int):
        return cls("first_n", n=n)

    @classmethod
    def last(cls, n: int):
        return cls("last_n", n=n)

    @classmethod
    def segments(cls, k: int, l: int):
        return cls("segments", k=k, l=l)

    def params(self) -> tuple[int, int]:
        if self.kind == "segments":
            return self.k, self.l
        return self.n, 0

    def pack(self) -> bytes:
        return struct.pack("<BQQ", METHOD_IDS[self.kind], *self.params())

    @classmethod
    def unpack(cls, raw: bytes) -> "ContentMethod":
        mid, a, b = struct.unpack("<BQQ", raw)
        kind = METHOD_NAMES.get(mid)
        if kind is None:
            raise ValueError(f"unknown content method id {mid}")
        if kind == "segments":
            return cls(kind, k=a, l=b)
        if kind == "full":
            return cls(kind)
        return cls(kind, n=a)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("first_n", "last_n"):
            d["n"] = self.n
        elif self.kind == "segments":
            d.update(k=self.k, l=self.l)
        return d

    @classmethod
    def from_dict(cls, d) -> "ContentMethod":
        if isinstance(d, ContentMethod):
            return d
        if isinstance(d, str):
            return cls(d)
        return cls(d.get("kind", "full"), n=int(d.get("n", 0)), k=int(d.get("k", 0)),
                   l=int(d.get("l", 0)))

    def __str__(self):
        if self.kind == "segments":
            return f"segments(k={self.k},l={self.l})"
        if self.kind == "full":
            return "full"
        return f"{self.kind}({self.n})"


PACKED_LEN = struct.calcsize("<BQQ")


def apply_content_method(file_len: int, method: ContentMethod) -> list[tuple[int, int]]:
    """Half-open [start, end) ranges to encrypt, ascending and disjoint."""
    if file_len < 0:
        raise ValueError("negative file length")
    if file_len == 0:
        return []
    if method.kind == "full":
        return [(0, file_len)]
    if method.kind == "first_n":
        return [(0, min(method.n, file_len))]
    if method.kind == "last_n":
        return [(max(0, file_len - method.n), file_len)]
    out, pos = [], 0
    while pos < file_len:
        out.append((pos, min(pos + method.k, file_len)))
        pos += method.k + method.l
    return out
