"""Restore a corpus from its escrow log and the server private key."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..cipher import (CipherError, EscrowEntry, KeyUnwrapError, decrypt_file, read_escrow,
                      unwrap_private_key)
from ..cipher.engine import MAGIC
from ..corpus import sha256_hex


@dataclass
class RestoreReport:
    restored: list = field(default_factory=list)
    intact: list = field(default_factory=list)     # escrowed but never overwritten
    failed: list = field(default_factory=list)     # {"path", "reason"}
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.failed and not self.error

    def to_dict(self) -> dict:
        return {"restored": self.restored, "intact": self.intact, "failed": self.failed,
                "error": self.error, "ok": self.ok}


def _is_image(data: bytes) -> bool:
    return data[:4] == MAGIC


def _restore_one(store, entry: EscrowEntry, campaign_private) -> str:
    """Returns "restored" or "intact"; raises on failure."""
    src = None
    for cand in (entry.encrypted_path, entry.relative_path + ".part"):
        if cand != entry.relative_path and store.exists(cand):
            src = cand
            break
    if src is None:
        if not store.exists(entry.relative_path):
            raise FileNotFoundError(f"no image at {entry.encrypted_path}")
        data = store.read(entry.relative_path)
        if len(data) == entry.original_len and sha256_hex(data) == entry.original_digest:
            return "intact"
        if not _is_image(data):
            raise CipherError("file is neither the original nor an encrypted image")
        src = entry.relative_path
    plain = decrypt_file(store.read(src), entry, campaign_private)
    store.write(entry.relative_path, plain)
    if src != entry.relative_path:
        store.remove(src)
    return "restored"


def decrypt_campaign(escrow_path, server_private, store) -> RestoreReport:
    """Decrypt every escrowed file back in place.

    Images left under the campaign extension without an escrow entry are
    reported as failures, as are entries whose image is missing or damaged.
    A wrong server key restores nothing.
    """
    report = RestoreReport()
    header, entries = read_escrow(escrow_path)
    try:
        campaign_private = unwrap_private_key(server_private, header.campaign_private_wrapped)
    except (KeyUnwrapError, ValueError, TypeError) as exc:
        report.error = f"cannot unwrap the campaign key with this server key: {exc}"
        report.failed = [{"path": e.relative_path, "reason": "campaign key unavailable"}
                         for e in entries]
        return report
    latest: dict[str, EscrowEntry] = {}
    for e in entries:
        latest[e.relative_path] = e
    claimed = set()
    for rel in sorted(latest):
        e = latest[rel]
        claimed.update({e.encrypted_path, rel, rel + ".part"})
        try:
            status = _restore_one(store, e, campaign_private)
        except (OSError, KeyError, CipherError, ValueError) as exc:
            report.failed.append({"path": rel, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        (report.restored if status == "restored" else report.intact).append(rel)
    ext = header.custom_extension
    for rel in store.files():
        if rel in claimed:
            continue
        if (ext and rel.endswith(ext)) or rel.endswith(".part"):
            try:
                orphan = _is_image(store.read(rel))
            except OSError:
                orphan = True
            if orphan:
                report.failed.append({"path": rel, "reason": "encrypted image without escrow entry"})
    return report
