"""Escrow file: JSON Lines, a header object then one entry per encrypted file."""
from __future__ import annotations

import base64
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from Crypto.PublicKey.RSA import RsaKey

from .content import ContentMethod
from .engine import DigestMismatch, FileKey, decrypt_image, parse_header
from .keys import KeyHierarchy, export_public, import_key, oaep_unwrap, oaep_wrap

ESCROW_VERSION = 1


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _unb64(s: str) -> bytes:
    return base64.b64decode(s.encode("ascii"), validate=True)


@dataclass(frozen=True)
class EscrowEntry:
    relative_path: str
    cipher_id: str
    content_method: ContentMethod
    wrapped_key: bytes
    original_len: int
    original_digest: str
    encrypted_path: str

    def to_json(self) -> str:
        return json.dumps({"path": self.relative_path, "cipher": self.cipher_id,
                           "method": self.content_method.to_dict(),
                           "wrapped_key": _b64(self.wrapped_key), "len": self.original_len,
                           "sha256": self.original_digest, "encrypted_path": self.encrypted_path},
                          sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "EscrowEntry":
        return cls(d["path"], d["cipher"], ContentMethod.from_dict(d["method"]),
                   _unb64(d["wrapped_key"]), int(d["len"]), d["sha256"], d["encrypted_path"])


@dataclass(frozen=True)
class EscrowHeader:
    campaign_public: bytes
    campaign_private_wrapped: bytes
    custom_extension: str = ""

    def to_json(self) -> str:
        return json.dumps({"type": "header", "version": ESCROW_VERSION,
                           "campaign_public": _b64(self.campaign_public),
                           "campaign_private_wrapped": _b64(self.campaign_private_wrapped),
                           "custom_extension": self.custom_extension}, sort_keys=True)


def wrap_file_key(campaign_public: RsaKey, fk: FileKey, oaep_seed: bytes) -> bytes:
    return oaep_wrap(campaign_public, fk.pack(), oaep_seed)


def unwrap_file_key(campaign_private: RsaKey, wrapped: bytes) -> FileKey:
    return FileKey.unpack(oaep_unwrap(campaign_private, wrapped))


class EscrowWriter:
    """Append-only escrow log. Each append is flushed before it returns.

    The header line is written lazily, on the first append or `open()`.
    """

    def __init__(self, path: Union[str, Path], keys: KeyHierarchy, custom_extension: str = "",
                 fsync: bool = False):
        self.path = Path(path)
        self.header = EscrowHeader(export_public(keys.campaign_public),
                                   keys.campaign_private_wrapped, custom_extension)
        self.fsync = fsync
        self._fh = None
        self._lock = threading.Lock()
        self.count = 0

    def open(self) -> bytes:
        """Create the file and write the header; returns the bytes written."""
        with self._lock:
            return self._open()

    def _open(self) -> bytes:
        if self._fh is not None:
            return b""
        self._fh = open(self.path, "w")
        return self._write(self.header.to_json() + "\n")

    def _write(self, line: str) -> bytes:
        self._fh.write(line)
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        return line.encode()

    def append(self, entry: EscrowEntry) -> bytes:
        with self._lock:
            head = self._open()
            out = self._write(entry.to_json() + "\n")
            self.count += 1
            return head + out

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EscrowFormatError(ValueError):
    pass


def read_escrow(path) -> tuple[EscrowHeader, list[EscrowEntry]]:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise EscrowFormatError(f"{path}: escrow file is empty")
    try:
        h = json.loads(lines[0])
        if h.get("type") != "header":
            raise EscrowFormatError(f"{path}:1: first line is not an escrow header")
        header = EscrowHeader(_unb64(h["campaign_public"]), _unb64(h["campaign_private_wrapped"]),
                              h.get("custom_extension", ""))
    except (ValueError, KeyError) as exc:
        raise EscrowFormatError(f"{path}:1: bad header ({exc})") from None
    entries = []
    for lineno, line in enumerate(lines[1:], 2):
        try:
            entries.append(EscrowEntry.from_json(json.loads(line)))
        except (ValueError, KeyError) as exc:
            raise EscrowFormatError(f"{path}:{lineno}: bad entry ({exc})") from None
    return header, entries


def decrypt_file(image: bytes, entry: EscrowEntry, keys: Union[KeyHierarchy, RsaKey]) -> bytes:
    """Restore one file from its image and escrow entry.

    `keys` is either a hierarchy holding the server private key, or an
    already-unwrapped campaign private key.
    """
    campaign_private = keys.unwrap_campaign() if isinstance(keys, KeyHierarchy) else keys
    h = parse_header(image)
    if h.cipher.name != entry.cipher_id or h.method != entry.content_method \
            or h.original_len != entry.original_len:
        raise DigestMismatch("image header does not match its escrow entry")
    fk = unwrap_file_key(campaign_private, entry.wrapped_key)
    return decrypt_image(image, fk, entry.original_digest)


def campaign_private_from_escrow(header: EscrowHeader, server_private: RsaKey) -> RsaKey:
    from .keys import unwrap_private_key
    return unwrap_private_key(server_private, header.campaign_private_wrapped)


__all__ = ["EscrowEntry", "EscrowHeader", "EscrowWriter", "EscrowFormatError", "read_escrow",
           "decrypt_file", "wrap_file_key", "unwrap_file_key", "campaign_private_from_escrow",
           "import_key"]
