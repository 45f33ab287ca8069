"""Deterministic decoy corpus: generate, snapshot, verify, reset."""
from __future__ import annotations

import gzip
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import SANDBOX_MARKER, ValidationError
from .config_io import load_mapping

FILE_KINDS = ("text", "csv", "binary-random", "binary-structured", "already-compressed")
_EXT = {"text": ".txt", "csv": ".csv", "binary-random": ".bin",
        "binary-structured": ".db", "already-compressed": ".gz"}
LOG_FRACTION = 0.125
BASE_MTIME_NS = 1_600_000_000 * 10**9

_WORDS = (
    "the of and to in a is that for it as was with be by on not he this are or his from at "
    "which but have an they you were her she there been one all we their has would when if so "
    "no will can more about said other into them time only some could these two may first then "
    "do any like my now over such our man me even most made after also did many before must "
    "through back years where much your way well down should because each just those people "
    "how too little state good very make world still own see men work long get here between "
    "both life being under never day same another know while last might us great old year off "
    "come since against go came right used take three report budget agency federal program "
    "public health water energy county department survey annual review policy data system "
    "office service research table figure section district council school plan project"
).split()


@dataclass(frozen=True)
class SizeDistribution:
    min_bytes: int
    max_bytes: int
    shape: str = "uniform"


@dataclass(frozen=True)
class CorpusSpec:
    file_count: int
    size_distribution: SizeDistribution
    type_mix: tuple[tuple[str, float], ...]
    directory_fanout: int = 4
    seed: int = 0

    def __post_init__(self):
        sd = self.size_distribution
        if self.file_count < 1:
            raise ValidationError("empty corpus: file_count must be positive")
        if sd.min_bytes < 1 or sd.max_bytes < sd.min_bytes:
            raise ValidationError("size bounds need 1 <= min_bytes <= max_bytes")
        if sd.shape not in ("uniform", "lognormal"):
            raise ValidationError(f"unknown size shape {sd.shape!r}")
        if self.directory_fanout < 1:
            raise ValidationError("directory_fanout must be positive")
        for kind, w in self.type_mix:
            if kind not in FILE_KINDS:
                raise ValidationError(f"unknown file kind {kind!r}")
            if w < 0:
                raise ValidationError("type weights must be non-negative")
        if abs(sum(w for _, w in self.type_mix) - 1.0) > 1e-9:
            raise ValidationError("type_mix weights must sum to 1")
        if not 0 <= self.seed < 1 << 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        sd = d.get("size_distribution", {})
        mix = d.get("type_mix", {"text": 1.0})
        if isinstance(mix, dict):
            mix = list(mix.items())
        return cls(file_count=int(d.get("file_count", 0)),
                   size_distribution=SizeDistribution(int(sd.get("min_bytes", 1024)),
                                                      int(sd.get("max_bytes", 65536)),
                                                      sd.get("shape", "uniform")),
                   type_mix=tuple((k, float(w)) for k, w in mix),
                   directory_fanout=int(d.get("directory_fanout", 4)),
                   seed=int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        sd = self.size_distribution
        return {"file_count": self.file_count,
                "size_distribution": {"min_bytes": sd.min_bytes, "max_bytes": sd.max_bytes,
                                      "shape": sd.shape},
                "type_mix": dict(self.type_mix), "directory_fanout": self.directory_fanout,
                "seed": self.seed}


def load_corpus_spec(path) -> CorpusSpec:
    return CorpusSpec.from_dict(load_mapping(path))


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    length: int
    kind: str
    digest: str

    def to_json(self) -> str:
        return json.dumps({"path": self.path, "len": self.length, "kind": self.kind,
                           "sha256": self.digest})


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValidationError("manifest paths must be unique")

    @property
    def total_bytes(self) -> int:
        return sum(e.length for e in self.entries)

    def by_path(self) -> dict[str, ManifestEntry]:
        return {e.path: e for e in self.entries}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def write_manifest(manifest: CorpusManifest, path) -> None:
    with open(path, "w") as fh:
        for e in manifest.entries:
            fh.write(e.to_json() + "\n")


def read_manifest(path) -> CorpusManifest:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                entries.append(ManifestEntry(d["path"], int(d["len"]), d["kind"], d["sha256"]))
            except (ValueError, KeyError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad manifest row ({exc})") from None
    return CorpusManifest(tuple(entries))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- content synthesis ---------------------------------------------------------

def _text(rng: np.random.Generator, n: int) -> bytes:
    words = _WORDS
    out = bytearray()
    while len(out) < n:
        idx = rng.integers(0, len(words), size=256)
        breaks = rng.random(256)
        parts = []
        for i, b in zip(idx, breaks):
            w = words[i]
            parts.append(w + ("\n" if b < 0.07 else ". " if b < 0.12 else " "))
        out += "".join(parts).encode("ascii")
    return bytes(out[:n])


def _csv(rng: np.random.Generator, n: int) -> bytes:
    out = bytearray(b"id,station,reading,flow,level\n")
    row = 0
    while len(out) < n:
        vals = rng.integers(0, 10000, size=(64, 3))
        st = rng.integers(100, 140, size=64)
        out += "".join(f"{row + i},{st[i]},{a},{b}.{c % 100:02d},{c}\n"
                       for i, (a, b, c) in enumerate(vals)).encode("ascii")
        row += 64
    return bytes(out[:n])


def _structured(rng: np.random.Generator, n: int) -> bytes:
    template = bytearray(64)
    template[0:4] = b"REC1"
    template[48:64] = b"............pad."
    out = bytearray()
    rid = 0
    while len(out) < n:
        rec = bytearray(template)
        rec[4:8] = rid.to_bytes(4, "little")
        rec[8:12] = int(rng.integers(0, 1 << 12)).to_bytes(4, "little")
        rec[12] = int(rng.integers(0, 4))
        out += rec
        rid += 1
    return bytes(out[:n])


def _compressed(rng: np.random.Generator, n: int) -> bytes:
    out = gzip.compress(rng.bytes(n + 64), compresslevel=6, mtime=0)
    return out[:n]


def synth_bytes(kind: str, rng: np.random.Generator, n: int) -> bytes:
    """n bytes of the given file kind (also used by the benign personas)."""
    return _MAKERS[kind](rng, n)


_MAKERS = {"text": _text, "csv": _csv, "binary-random": lambda r, n: r.bytes(n),
           "binary-structured": _structured, "already-compressed": _compressed}


def _sizes(spec: CorpusSpec, rng: np.random.Generator) -> np.ndarray:
    sd = spec.size_distribution
    if sd.shape == "uniform":
        return rng.integers(sd.min_bytes, sd.max_bytes + 1, size=spec.file_count)
    lo, hi = np.log(sd.min_bytes), np.log(sd.max_bytes)
    mu, sigma = (lo + hi) / 2, max((hi - lo) / 4, 1e-9)
    raw = np.exp(rng.normal(mu, sigma, size=spec.file_count))
    return np.clip(np.rint(raw), sd.min_bytes, sd.max_bytes).astype(np.int64)


def check_root(root: Path, force: bool = False) -> Path:
    root = Path(root).resolve()
    if root == Path(root.anchor) or root == Path.home().resolve():
        raise ValidationError(f"refusing to use {root} as a sandbox root")
    if not root.is_dir():
        raise ValidationError(f"corpus root {root} does not exist")
    others = [p for p in root.iterdir() if p.name != SANDBOX_MARKER]
    if others and not force:
        raise ValidationError(f"corpus root {root} is not empty (use --force)")
    return root


def generate_corpus(spec: CorpusSpec, root, force: bool = False,
                    snapshot_dir=None) -> CorpusManifest:
    """Write `spec.file_count` synthetic files under `root` and return their manifest.

    The sandbox marker is created if absent. With `force`, existing content
    other than the marker is removed first. Same spec, same bytes.
    """
    root = check_root(root, force)
    if force:
        for p in root.iterdir():
            if p.name != SANDBOX_MARKER:
                shutil.rmtree(p) if p.is_dir() and not p.is_symlink() else p.unlink()
    (root / SANDBOX_MARKER).touch()
    rng = np.random.default_rng(spec.seed)
    kinds = [k for k, _ in spec.type_mix]
    weights = np.array([w for _, w in spec.type_mix], dtype=float)
    weights = weights / weights.sum()
    sizes = _sizes(spec, rng)
    picks = rng.choice(len(kinds), size=spec.file_count, p=weights)
    log_draw = rng.random(spec.file_count)
    mtimes = BASE_MTIME_NS + np.sort(rng.integers(0, 86400 * 365 * 10**9, size=spec.file_count))
    mtimes = rng.permutation(mtimes)
    files = []
    for i in range(spec.file_count):
        kind = kinds[picks[i]]
        ext = ".log" if kind == "text" and log_draw[i] < LOG_FRACTION else _EXT[kind]
        rel = f"d{i % spec.directory_fanout:03d}/f{i:05d}{ext}"
        files.append((rel, kind, i))
    # Written in path order so that creation order matches name order, as after a reset.
    entries = []
    for rel, kind, i in sorted(files):
        data = _MAKERS[kind](np.random.default_rng([spec.seed, i]), int(sizes[i]))
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
        os.utime(p, ns=(int(mtimes[i]), int(mtimes[i])))
        entries.append(ManifestEntry(rel, len(data), kind, sha256_hex(data)))
    manifest = CorpusManifest(tuple(entries), spec.seed)
    if snapshot_dir is not None:
        snapshot_corpus(root, manifest, snapshot_dir)
    return manifest


def guess_kind(data: bytes) -> str:
    from .vdev.entropy import entropy_exact
    if not data:
        return "text"
    if data[:2] == b"\x1f\x8b" or data[:4] == b"PK\x03\x04":
        return "already-compressed"
    h = entropy_exact(data)
    if h > 0.95:
        return "binary-random"
    try:
        data.decode("ascii")
        return "csv" if data.count(b",") > len(data) / 40 else "text"
    except UnicodeDecodeError:
        return "binary-structured"


def iter_corpus_files(root: Path) -> Iterable[Path]:
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            p = Path(dirpath) / name
            if p.parent == root and name == SANDBOX_MARKER:
                continue
            yield p


def ingest_directory(root) -> CorpusManifest:
    """Build a manifest for an existing directory tree (kinds are guessed)."""
    root = Path(root).resolve()
    entries = []
    for p in iter_corpus_files(root):
        data = p.read_bytes()
        entries.append(ManifestEntry(p.relative_to(root).as_posix(), len(data),
                                     guess_kind(data), sha256_hex(data)))
    return CorpusManifest(tuple(sorted(entries, key=lambda e: e.path)))


@dataclass
class VerificationReport:
    missing: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)
    unreadable: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing or self.modified or self.extra or self.unreadable)

    def to_dict(self) -> dict:
        return {"missing": self.missing, "modified": self.modified, "extra": self.extra,
                "unreadable": self.unreadable, "ok": self.ok}


def verify_corpus(root, manifest: CorpusManifest) -> VerificationReport:
    root = Path(root).resolve()
    report = VerificationReport()
    expected = manifest.by_path()
    seen = set()
    for p in iter_corpus_files(root):
        rel = p.relative_to(root).as_posix()
        if rel not in expected:
            report.extra.append(rel)
            continue
        seen.add(rel)
        try:
            data = p.read_bytes()
        except OSError:
            report.unreadable.append(rel)
            continue
        e = expected[rel]
        if len(data) != e.length or sha256_hex(data) != e.digest:
            report.modified.append(rel)
    report.missing = sorted(set(expected) - seen)
    return report


# -- snapshots -----------------------------------------------------------------

class SnapshotError(RuntimeError):
    pass


@dataclass
class Snapshot:
    """Pristine copy of a corpus kept outside the sandbox root."""

    path: Path
    manifest: CorpusManifest
    mtimes: dict[str, int]
    _cache: dict[str, bytes] = field(default_factory=dict, repr=False)
    _verified: bool = field(default=False, repr=False)

    def read(self, rel: str) -> bytes:
        data = self._cache.get(rel)
        if data is None:
            try:
                data = (self.path / "files" / rel).read_bytes()
            except OSError as exc:
                raise SnapshotError(f"snapshot file {rel} unreadable: {exc}") from None
            self._cache[rel] = data
        return data

    def load(self) -> "Snapshot":
        """Read and digest-check every snapshot file, keeping them in memory."""
        if self._verified:
            return self
        for e in self.manifest.entries:
            data = self.read(e.path)
            if len(data) != e.length or sha256_hex(data) != e.digest:
                self._cache.pop(e.path, None)
                raise SnapshotError(f"snapshot copy of {e.path} is corrupted")
        self._verified = True
        return self


def snapshot_corpus(root, manifest: CorpusManifest, dest) -> Snapshot:
    root, dest = Path(root).resolve(), Path(dest).resolve()
    if dest == root or root in dest.parents:
        raise ValidationError("snapshot must live outside the sandbox root")
    files = dest / "files"
    if dest.exists():
        shutil.rmtree(dest)
    files.mkdir(parents=True)
    mtimes = {}
    for e in manifest.entries:
        src = root / e.path
        dst = files / e.path
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dst)
        mtimes[e.path] = src.stat().st_mtime_ns
    write_manifest(manifest, dest / "manifest.jsonl")
    (dest / "mtimes.json").write_text(json.dumps(mtimes, sort_keys=True))
    return Snapshot(dest, manifest, mtimes)


def open_snapshot(dest) -> Snapshot:
    dest = Path(dest)
    try:
        manifest = read_manifest(dest / "manifest.jsonl")
        mtimes = json.loads((dest / "mtimes.json").read_text())
    except (OSError, ValueError) as exc:
        raise SnapshotError(f"no usable snapshot at {dest}: {exc}") from None
    return Snapshot(dest, manifest, mtimes)


def reset_corpus(root, snapshot: Snapshot) -> None:
    """Restore `root` to the snapshot: drop extras, rewrite every file in path order.

    The snapshot is fully digest-checked before anything on disk is touched.
    Rewriting in path order keeps ctime order equal to name order, so the
    ctime file ordering stays reproducible across resets.
    """
    if not isinstance(snapshot, Snapshot):
        snapshot = open_snapshot(snapshot)
    root = Path(root).resolve()
    snapshot.load()
    expected = snapshot.manifest.by_path()
    for p in list(iter_corpus_files(root)):
        if p.relative_to(root).as_posix() not in expected:
            p.unlink()
    for e in snapshot.manifest.entries:
        p = root / e.path
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(snapshot.read(e.path))
        t = snapshot.mtimes.get(e.path)
        if t is not None:
            os.utime(p, ns=(t, t))
    for dirpath, dirnames, filenames in os.walk(root, topdown=False):
        d = Path(dirpath)
        if d != root and not any(d.iterdir()):
            d.rmdir()
