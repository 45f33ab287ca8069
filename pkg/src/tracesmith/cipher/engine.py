"""Self-describing encrypted file images and the size model.

Image layout (little-endian):

    "TSMX" | version u8 | cipher id u8 | content method (id u8, a u64, b u64)
    | original length u64 | range count u32 | (offset u64, length u64) per range
    | body

The body walks the original file in order: skipped bytes are copied verbatim,
each encrypted range is replaced by its frame (IV or nonce, transformed bytes,
tag). Keyed material that does not appear in a frame (CTR/stream nonces, XTS
tweak base, SHUFFLE permutation) derives from the escrowed per-file nonce and
the range index.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from Crypto.Cipher import AES, ChaCha20, Salsa20
from Crypto.Util.Padding import pad, unpad

from .content import PACKED_LEN, ContentMethod, apply_content_method
from .drbg import Drbg
from .modes import cts_decrypt, cts_encrypt, xts_decrypt, xts_encrypt
from .registry import (BLOCK, NONCE_LEN, TAG_LEN, BY_ID, CipherError, CipherRegistry,
                       CipherSpec, KeySizeError, get_cipher)

MAGIC = b"TSMX"
VERSION = 1
SHUFFLE_SEGMENT = 4096
FILE_NONCE_LEN = 16
_FIXED = struct.Struct("<4sBB")
_TAIL = struct.Struct("<QI")
_RANGE = struct.Struct("<QQ")


class IntegrityError(CipherError):
    pass


class AuthenticationError(IntegrityError):
    pass


class DigestMismatch(IntegrityError):
    pass


class CorruptImage(IntegrityError):
    pass


@dataclass(frozen=True)
class FileKey:
    key: bytes
    nonce: bytes

    def pack(self) -> bytes:
        return self.key + self.nonce

    @classmethod
    def unpack(cls, raw: bytes) -> "FileKey":
        return cls(raw[:-FILE_NONCE_LEN], raw[-FILE_NONCE_LEN:])


def new_file_key(spec: CipherSpec, drbg: Drbg) -> FileKey:
    return FileKey(drbg.read(spec.key_len), drbg.read(FILE_NONCE_LEN))


def header_len(nranges: int) -> int:
    return _FIXED.size + PACKED_LEN + _TAIL.size + _RANGE.size * nranges


def size_model(cipher_id: str, method: ContentMethod, original_len: int,
               registry: CipherRegistry | None = None) -> int:
    spec = get_cipher(cipher_id, registry)
    ranges = apply_content_method(original_len, method)
    enc = sum(e - s for s, e in ranges)
    return header_len(len(ranges)) + (original_len - enc) + sum(spec.range_len(e - s) for s, e in ranges)


def _derive(fk: FileKey, idx: int, label: bytes, n: int) -> bytes:
    return hashlib.sha256(label + fk.nonce + idx.to_bytes(8, "little")).digest()[:n]


def _fisher_yates(m: int, fk: FileKey, idx: int) -> list[int]:
    drbg = Drbg(fk.key + fk.nonce + idx.to_bytes(8, "little"), "shuffle")
    perm = list(range(m))
    for i in range(m - 1, 0, -1):
        j = drbg.randbelow(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _shuffle(data: bytes, fk: FileKey, idx: int, inverse: bool) -> bytes:
    m = len(data) // SHUFFLE_SEGMENT
    if m < 2:
        return bytes(data)
    perm = _fisher_yates(m, fk, idx)
    segs = np.frombuffer(data, np.uint8, count=m * SHUFFLE_SEGMENT).reshape(m, SHUFFLE_SEGMENT)
    if inverse:
        out = np.empty_like(segs)
        out[perm] = segs
    else:
        out = segs[perm]
    return out.tobytes() + bytes(data[m * SHUFFLE_SEGMENT:])


def _aad(start: int, end: int) -> bytes:
    return _RANGE.pack(start, end - start)


def _encrypt_range(spec: CipherSpec, fk: FileKey, idx: int, start: int, data: bytes) -> bytes:
    fam, m = spec.family, spec.mode
    if fam == "SHUFFLE":
        return _shuffle(data, fk, idx, inverse=False)
    if fam == "CHACHA20":
        return ChaCha20.new(key=fk.key, nonce=_derive(fk, idx, b"chacha", 12)).encrypt(data)
    if fam == "SALSA20":
        return Salsa20.new(key=fk.key, nonce=_derive(fk, idx, b"salsa", 8)).encrypt(data)
    if m == "CTR":
        return AES.new(fk.key, AES.MODE_CTR, nonce=_derive(fk, idx, b"ctr", 8)).encrypt(data)
    if m == "XTS":
        return xts_encrypt(fk.key, idx.to_bytes(16, "little"), data)
    if m == "ECB":
        return AES.new(fk.key, AES.MODE_ECB).encrypt(pad(data, BLOCK))
    if m in ("CBC", "CTS", "CFB", "OFB"):
        iv = _derive(fk, idx, b"iv", BLOCK)
        if m == "CBC":
            return iv + AES.new(fk.key, AES.MODE_CBC, iv=iv).encrypt(pad(data, BLOCK))
        if m == "CTS":
            return iv + cts_encrypt(fk.key, iv, data)
        if m == "CFB":
            return iv + AES.new(fk.key, AES.MODE_CFB, iv=iv, segment_size=128).encrypt(data)
        return iv + AES.new(fk.key, AES.MODE_OFB, iv=iv).encrypt(data)
    nonce = _derive(fk, idx, b"aead", NONCE_LEN)
    mode = {"GCM": AES.MODE_GCM, "CCM": AES.MODE_CCM, "EAX": AES.MODE_EAX, "OCB": AES.MODE_OCB}[m]
    kw = {"mac_len": TAG_LEN}
    if m == "CCM":
        kw["msg_len"] = len(data)
        kw["assoc_len"] = 16
    c = AES.new(fk.key, mode, nonce=nonce, **kw)
    c.update(_aad(start, start + len(data)))
    ct, tag = c.encrypt_and_digest(data)
    return nonce + ct + tag


def _decrypt_range(spec: CipherSpec, fk: FileKey, idx: int, start: int, n: int, frame: bytes) -> bytes:
    fam, m = spec.family, spec.mode
    if fam == "SHUFFLE":
        return _shuffle(frame, fk, idx, inverse=True)
    if fam == "CHACHA20":
        return ChaCha20.new(key=fk.key, nonce=_derive(fk, idx, b"chacha", 12)).decrypt(frame)
    if fam == "SALSA20":
        return Salsa20.new(key=fk.key, nonce=_derive(fk, idx, b"salsa", 8)).decrypt(frame)
    if m == "CTR":
        return AES.new(fk.key, AES.MODE_CTR, nonce=_derive(fk, idx, b"ctr", 8)).decrypt(frame)
    if m == "XTS":
        return xts_decrypt(fk.key, idx.to_bytes(16, "little"), frame)
    try:
        if m == "ECB":
            return unpad(AES.new(fk.key, AES.MODE_ECB).decrypt(frame), BLOCK)
        if m in ("CBC", "CTS", "CFB", "OFB"):
            iv, body = frame[:BLOCK], frame[BLOCK:]
            if m == "CBC":
                return unpad(AES.new(fk.key, AES.MODE_CBC, iv=iv).decrypt(body), BLOCK)
            if m == "CTS":
                return cts_decrypt(fk.key, iv, body, n)
            if m == "CFB":
                return AES.new(fk.key, AES.MODE_CFB, iv=iv, segment_size=128).decrypt(body)
            return AES.new(fk.key, AES.MODE_OFB, iv=iv).decrypt(body)
    except ValueError as exc:
        raise DigestMismatch(f"range {idx}: {exc}") from None
    nonce, ct, tag = frame[:NONCE_LEN], frame[NONCE_LEN:-TAG_LEN], frame[-TAG_LEN:]
    mode = {"GCM": AES.MODE_GCM, "CCM": AES.MODE_CCM, "EAX": AES.MODE_EAX, "OCB": AES.MODE_OCB}[m]
    kw = {"mac_len": TAG_LEN}
    if m == "CCM":
        kw["msg_len"] = len(ct)
        kw["assoc_len"] = 16
    c = AES.new(fk.key, mode, nonce=nonce, **kw)
    c.update(_aad(start, start + n))
    try:
        return c.decrypt_and_verify(ct, tag)
    except ValueError:
        raise AuthenticationError(f"range {idx}: authentication tag mismatch") from None


@dataclass(frozen=True)
class ImageHeader:
    cipher: CipherSpec
    method: ContentMethod
    original_len: int
    ranges: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return header_len(len(self.ranges))


@dataclass(frozen=True)
class EncryptedImage:
    image: bytes
    header: ImageHeader

    @property
    def encrypted_bytes(self) -> int:
        return sum(e - s for s, e in self.header.ranges)


def _check_key(spec: CipherSpec, fk: FileKey) -> None:
    if len(fk.key) != spec.key_len:
        raise KeySizeError(f"{spec.name} needs a {spec.key_len}-byte key, got {len(fk.key)}")
    if len(fk.nonce) != FILE_NONCE_LEN:
        raise KeySizeError(f"file nonce must be {FILE_NONCE_LEN} bytes")


def pack_header(h: ImageHeader) -> bytes:
    out = bytearray(_FIXED.pack(MAGIC, VERSION, h.cipher.id_byte))
    out += h.method.pack()
    out += _TAIL.pack(h.original_len, len(h.ranges))
    for s, e in h.ranges:
        out += _RANGE.pack(s, e - s)
    return bytes(out)


def parse_header(image: bytes) -> ImageHeader:
    if len(image) < header_len(0):
        raise CorruptImage("image shorter than its header")
    magic, version, cid = _FIXED.unpack_from(image, 0)
    if magic != MAGIC:
        raise CorruptImage("bad magic")
    if version != VERSION:
        raise CorruptImage(f"unsupported image version {version}")
    spec = BY_ID.get(cid)
    if spec is None:
        raise CorruptImage(f"unknown cipher id {cid}")
    pos = _FIXED.size
    try:
        method = ContentMethod.unpack(image[pos:pos + PACKED_LEN])
    except ValueError as exc:
        raise CorruptImage(str(exc)) from None
    pos += PACKED_LEN
    original_len, count = _TAIL.unpack_from(image, pos)
    pos += _TAIL.size
    if len(image) < pos + count * _RANGE.size:
        raise CorruptImage("truncated range table")
    ranges = []
    for i in range(count):
        s, n = _RANGE.unpack_from(image, pos + i * _RANGE.size)
        ranges.append((s, s + n))
    return ImageHeader(spec, method, original_len, tuple(ranges))


def encrypt_ranges(plaintext: bytes, ranges, cipher_id: str, file_key: FileKey,
                   method: ContentMethod, registry: CipherRegistry | None = None) -> EncryptedImage:
    spec = get_cipher(cipher_id, registry)
    _check_key(spec, file_key)
    ranges = tuple((int(s), int(e)) for s, e in ranges)
    header = ImageHeader(spec, method, len(plaintext), ranges)
    parts = [pack_header(header)]
    view = memoryview(plaintext)
    pos = 0
    for idx, (s, e) in enumerate(ranges):
        if s < pos or e <= s or e > len(plaintext):
            raise ValueError("ranges must be ascending, disjoint and non-empty")
        parts.append(view[pos:s])
        parts.append(_encrypt_range(spec, file_key, idx, s, bytes(view[s:e])))
        pos = e
    parts.append(view[pos:])
    return EncryptedImage(b"".join(parts), header)


def encrypt_file(plaintext: bytes, cipher_id: str, method: ContentMethod, file_key: FileKey,
                 registry: CipherRegistry | None = None) -> EncryptedImage:
    return encrypt_ranges(plaintext, apply_content_method(len(plaintext), method), cipher_id,
                          file_key, method, registry)


def decrypt_image(image: bytes, file_key: FileKey, expected_digest: Optional[str] = None) -> bytes:
    """Invert `encrypt_ranges`; raise IntegrityError on any tampering we can see."""
    h = parse_header(image)
    _check_key(h.cipher, file_key)
    view = memoryview(image)
    out, src, pos = [], h.length, 0
    for idx, (s, e) in enumerate(h.ranges):
        if s < pos:
            raise CorruptImage("range table out of order")
        out.append(view[src:src + (s - pos)])
        src += s - pos
        flen = h.cipher.range_len(e - s)
        frame = bytes(view[src:src + flen])
        if len(frame) != flen:
            raise CorruptImage("image truncated inside a range")
        plain = _decrypt_range(h.cipher, file_key, idx, s, e - s, frame)
        if len(plain) != e - s:
            raise DigestMismatch(f"range {idx} decrypted to the wrong length")
        out.append(plain)
        src += flen
        pos = e
    out.append(view[src:])
    data = b"".join(out)
    if len(data) != h.original_len:
        raise DigestMismatch(f"restored {len(data)} bytes, expected {h.original_len}")
    if expected_digest is not None and hashlib.sha256(data).hexdigest() != expected_digest:
        raise DigestMismatch("restored bytes do not match the original digest")
    return data
