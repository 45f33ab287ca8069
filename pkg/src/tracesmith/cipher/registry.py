"""Cipher catalogue and the capability registry that gates optional modes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

AES_MODES = ("CBC", "ECB", "GCM", "CTR", "CFB", "OFB", "CCM", "EAX", "OCB", "CTS", "XTS")
AES_KEY_BITS = (128, 192, 256)
STREAM = ("SALSA20", "CHACHA20")
MANDATORY_MODES = ("CBC", "ECB", "CTR", "GCM", "XTS")
OPTIONAL_MODES = ("CFB", "OFB", "CCM", "EAX", "OCB", "CTS")
AEAD_MODES = ("GCM", "CCM", "EAX", "OCB")
NONCE_LEN = 12
TAG_LEN = 16
BLOCK = 16


class CipherError(Exception):
    pass


class UnavailableCipher(CipherError):
    pass


class KeySizeError(CipherError):
    pass


@dataclass(frozen=True)
class CipherSpec:
    name: str
    family: str          # AES, SALSA20, CHACHA20, SHUFFLE
    mode: str | None
    key_bits: int
    id_byte: int

    @property
    def key_len(self) -> int:
        n = self.key_bits // 8
        return 2 * n if self.mode == "XTS" else n

    @property
    def aead(self) -> bool:
        return self.mode in AEAD_MODES

    @property
    def mandatory(self) -> bool:
        return self.family != "AES" or self.mode in MANDATORY_MODES

    def range_len(self, n: int) -> int:
        """Encrypted length of an n-byte range, framing included."""
        m = self.mode
        if self.family != "AES" or m in ("CTR", "XTS"):
            return n
        if m == "ECB":
            return (n // BLOCK + 1) * BLOCK
        if m == "CBC":
            return BLOCK + (n // BLOCK + 1) * BLOCK
        if m == "CTS":
            return BLOCK + max(n, BLOCK)
        if m in ("CFB", "OFB"):
            return BLOCK + n
        return NONCE_LEN + n + TAG_LEN


def _catalogue() -> dict[str, CipherSpec]:
    specs, idx = {}, 1
    for bits in AES_KEY_BITS:
        for mode in AES_MODES:
            name = f"AES-{bits}-{mode}"
            specs[name] = CipherSpec(name, "AES", mode, bits, idx)
            idx += 1
    for fam in (*STREAM, "SHUFFLE"):
        specs[fam] = CipherSpec(fam, fam, None, 256, idx)
        idx += 1
    return specs


CATALOGUE = _catalogue()
BY_ID = {s.id_byte: s for s in CATALOGUE.values()}
ALL_CIPHERS = tuple(CATALOGUE)
MANDATORY_CIPHERS = tuple(n for n, s in CATALOGUE.items() if s.mandatory)


def canonical_name(name: str) -> str:
    """Accept AES-256-CBC, AES-CBC-256, aes_cbc_256 ... and return AES-256-CBC."""
    raw = name.strip().upper().replace("_", "-")
    if raw in CATALOGUE:
        return raw
    parts = raw.split("-")
    if len(parts) == 3 and parts[0] == "AES":
        bits = next((p for p in parts[1:] if p.isdigit()), None)
        mode = next((p for p in parts[1:] if not p.isdigit()), None)
        cand = f"AES-{bits}-{mode}"
        if cand in CATALOGUE:
            return cand
    raise UnavailableCipher(f"unknown cipher {name!r}")


class CipherRegistry:
    """Which ciphers a build may use.

    The mandatory core is always present; optional AES modes are enabled
    explicitly. Asking for a disabled one is an error, never a substitution.
    """

    def __init__(self, optional_modes: Iterable[str] = OPTIONAL_MODES):
        modes = {m.upper() for m in optional_modes}
        unknown = modes - set(OPTIONAL_MODES)
        if unknown:
            raise ValueError(f"not optional modes: {sorted(unknown)}")
        self.optional_modes = frozenset(modes)

    def available(self) -> tuple[str, ...]:
        return tuple(n for n, s in CATALOGUE.items()
                     if s.mandatory or s.mode in self.optional_modes)

    def get(self, name: str) -> CipherSpec:
        spec = CATALOGUE[canonical_name(name)]
        if not spec.mandatory and spec.mode not in self.optional_modes:
            raise UnavailableCipher(f"{spec.name} is not registered in this build")
        return spec


DEFAULT_REGISTRY = CipherRegistry()
CORE_REGISTRY = CipherRegistry(())


def get_cipher(name: str, registry: CipherRegistry | None = None) -> CipherSpec:
    return (registry or DEFAULT_REGISTRY).get(name)
