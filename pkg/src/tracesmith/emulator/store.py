"""File stores the campaign operates on: the sandboxed disk tree or an in-memory copy.

The in-memory store lets fitness evaluations run a full campaign without
touching disk; it behaves like a freshly reset corpus.
"""
from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Optional

from ..corpus import CorpusManifest, Snapshot, iter_corpus_files
from .safety import check_relative, contained, require_marker


class DiskStore:
    """Corpus files under a marked sandbox root."""

    on_disk = True

    def __init__(self, root):
        self.root = require_marker(root)

    def path(self, rel: str) -> Path:
        return contained(self.root, rel)

    def read(self, rel: str) -> bytes:
        return self.path(rel).read_bytes()

    def write(self, rel: str, data: bytes) -> None:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "wb") as fh:
            fh.write(data)
            fh.flush()

    def overwrite(self, rel: str, data: bytes) -> None:
        """Write in place over an existing file (no new inode)."""
        p = self.path(rel)
        with open(p, "r+b") as fh:
            fh.write(data)
            fh.truncate(len(data))
            fh.flush()

    def rename(self, old: str, new: str) -> None:
        dst = self.path(new)
        os.replace(self.path(old), dst)

    def remove(self, rel: str) -> None:
        self.path(rel).unlink()

    def exists(self, rel: str) -> bool:
        return self.path(rel).is_file()

    def size(self, rel: str) -> int:
        return self.path(rel).stat().st_size

    def times(self, rel: str) -> tuple[int, int]:
        st = self.path(rel).stat()
        return st.st_mtime_ns, st.st_ctime_ns

    def files(self) -> list[str]:
        return [p.relative_to(self.root).as_posix() for p in iter_corpus_files(self.root)]

    def is_dir(self, rel: str) -> bool:
        return rel in (".", "") or self.path(rel).is_dir()


class MemoryStore:
    """Dict-backed corpus, seeded from a snapshot or manifest-shaped content."""

    on_disk = False

    def __init__(self, files: dict[str, bytes], mtimes: Optional[dict[str, int]] = None):
        self._files = dict(files)
        self._mtimes = dict(mtimes or {})
        self._ctime = {rel: i for i, rel in enumerate(sorted(self._files))}
        self._tick = len(self._ctime)
        self._lock = threading.Lock()
        self.root = Path("<memory>")

    @classmethod
    def from_snapshot(cls, snapshot: Snapshot) -> "MemoryStore":
        snapshot.load()
        files = {e.path: snapshot.read(e.path) for e in snapshot.manifest.entries}
        return cls(files, snapshot.mtimes)

    def read(self, rel: str) -> bytes:
        return self._files[check_relative(rel)]

    def write(self, rel: str, data: bytes) -> None:
        rel = check_relative(rel)
        with self._lock:
            self._files[rel] = bytes(data)
            self._mtimes[rel] = self._tick
            self._ctime.setdefault(rel, self._tick)
            self._tick += 1

    overwrite = write

    def rename(self, old: str, new: str) -> None:
        old, new = check_relative(old), check_relative(new)
        with self._lock:
            self._files[new] = self._files.pop(old)
            self._mtimes[new] = self._mtimes.pop(old, 0)
            self._ctime[new] = self._ctime.pop(old, 0)

    def remove(self, rel: str) -> None:
        rel = check_relative(rel)
        with self._lock:
            del self._files[rel]
            self._mtimes.pop(rel, None)
            self._ctime.pop(rel, None)

    def exists(self, rel: str) -> bool:
        return check_relative(rel) in self._files

    def size(self, rel: str) -> int:
        return len(self.read(rel))

    def times(self, rel: str) -> tuple[int, int]:
        rel = check_relative(rel)
        return self._mtimes.get(rel, 0), self._ctime.get(rel, 0)

    def files(self) -> list[str]:
        return sorted(self._files)

    def is_dir(self, rel: str) -> bool:
        if rel in (".", ""):
            return True
        prefix = check_relative(rel).rstrip("/") + "/"
        return any(f.startswith(prefix) for f in self._files)

    def snapshot_bytes(self) -> dict[str, bytes]:
        return dict(self._files)


def manifest_matches(store, manifest: CorpusManifest) -> bool:
    """Cheap check that a store holds exactly the manifest's paths with the right sizes."""
    have = set(store.files())
    return have == {e.path for e in manifest.entries} and all(
        store.size(e.path) == e.length for e in manifest.entries)
