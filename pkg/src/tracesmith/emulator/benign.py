"""Benign personas: compressors, converters, a file server and a log appender.

Personas only read the corpus. Their outputs (archives, converted files, the
log) exist on the virtual device alone, so a benign run never changes the
sandbox. Every record they emit is tagged "benign".
"""
from __future__ import annotations

import base64
import bz2
import gzip
import io
import lzma
import re
import zipfile
import zlib
from typing import Iterator

import numpy as np

from ..corpus import CorpusManifest, synth_bytes
from ..vdev import BlockDevice
from .config import BenignPersona

TAG = "benign"
LOG_CHUNK = 1 << 20
_BENIGN_STREAM = 0xBE9


def _zip(data: bytes, level: int) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED, compresslevel=level) as zf:
        info = zipfile.ZipInfo("archive.bin", date_time=(2020, 1, 1, 0, 0, 0))
        info.compress_type = zipfile.ZIP_DEFLATED   # ZipInfo defaults to STORED
        zf.writestr(info, data, compresslevel=level)
    return buf.getvalue()


def compress(codec: str, data: bytes, level: int = 6) -> bytes:
    """Codec output. zstd-like and lz4-like are zlib stand-ins at fast levels."""
    level = int(np.clip(level, 1, 9))
    if codec == "deflate-zip":
        return _zip(data, level)
    if codec == "gzip":
        return gzip.compress(data, compresslevel=level, mtime=0)
    if codec == "bzip2-like":
        return bz2.compress(data, compresslevel=level)
    if codec == "xz-like":
        return lzma.compress(data, preset=level)
    if codec == "zstd-like":
        return zlib.compress(data, min(level, 3))
    if codec == "lz4-like":
        return zlib.compress(data, 1)
    raise ValueError(f"unknown codec {codec!r}")


def convert(transform: str, data: bytes) -> bytes:
    if transform == "base64-wrap":
        return base64.encodebytes(data)
    if transform == "csv-normalize":
        text = data.decode("latin-1").lower()
        text = re.sub(r"[ \t]+", " ", text)
        return text.encode("latin-1")
    if transform == "recompress":
        if data[:2] == b"\x1f\x8b":
            try:
                data = gzip.decompress(data)
            except (OSError, EOFError, zlib.error):
                pass  # truncated stream: recompress the raw bytes
        return bz2.compress(data, 9)
    raise ValueError(f"unknown transform {transform!r}")


class BenignRun:
    """Action generator for one persona; each `next()` performs one operation."""

    def __init__(self, persona: BenignPersona, manifest: CorpusManifest, device: BlockDevice,
                 store, seed: int = 0):
        if not manifest.entries:
            raise ValueError("benign personas need a non-empty corpus")
        self.persona = persona
        self.manifest = manifest
        self.device = device
        self.store = store
        self.rng = np.random.default_rng([seed, _BENIGN_STREAM])
        self.paths = sorted(e.path for e in manifest.entries)
        self._outputs = 0
        self.ops_done = 0

    def _think(self) -> None:
        p = self.persona
        if p.think_ms:
            j = p.think_jitter
            self.device.clock.sleep_ms(p.think_ms * (1 + j * (2 * self.rng.random() - 1)))

    def _read_file(self, rel: str, tid: int) -> bytes:
        # in mixed runs the campaign may already have renamed or removed the file
        if not self.store.exists(rel):
            return b""
        data = self.store.read(rel)
        if data:
            self.device.record_io("R", rel, 0, len(data), tag=TAG, tid=tid)
        return data

    def _write_new(self, payload: bytes, tid: int) -> None:
        dev = self.device
        name = f"<benign-out-{self._outputs}>"
        self._outputs += 1
        dev.allocate(name, len(payload))
        dev.meta(tid, tag=TAG)
        if payload:
            dev.record_io("W", name, 0, len(payload), payload, tag=TAG, tid=tid)

    def actions(self) -> Iterator[str]:
        kind = self.persona.kind
        gen = {"compressor": self._compressor, "converter": self._converter,
               "fileserver": self._fileserver, "log_appender": self._log_appender}[kind]
        for op in gen():
            self.ops_done += 1
            yield op
            self._think()

    def run(self) -> int:
        for _ in self.actions():
            pass
        return self.ops_done

    # -- personas -------------------------------------------------------------
    def _compressor(self):
        p = self.persona
        idx = 0
        for a in range(p.op_count):
            tid = a % p.workers
            parts = []
            for _ in range(p.files_per_archive):
                parts.append(self._read_file(self.paths[idx % len(self.paths)], tid))
                idx += 1
            archive = compress(p.codec, b"".join(parts), p.level)
            self.device.clock.charge_crypto(sum(map(len, parts)))
            self._write_new(archive, tid)
            yield "archive"

    def _converter(self):
        p = self.persona
        for i in range(p.op_count):
            data = self._read_file(self.paths[i % len(self.paths)], 0)
            self._write_new(convert(p.transform, data), 0)
            yield "convert"

    def _fileserver(self):
        p = self.persona
        for _ in range(p.op_count):
            rel = self.paths[int(self.rng.integers(len(self.paths)))]
            if self.rng.random() < p.read_ratio:
                self._read_file(rel, 0)
                yield "read"
            else:
                data = self.store.read(rel) if self.store.exists(rel) else b""
                if data:
                    self.device.record_io("W", rel, 0, len(data), data, tag=TAG)
                yield "write"

    def _log_appender(self):
        p = self.persona
        dev = self.device
        name = "<benign-log>"
        dev.allocate(name, LOG_CHUNK)
        dev.meta(0, tag=TAG)
        capacity, offset = LOG_CHUNK, 0
        for _ in range(p.op_count):
            line = synth_bytes("text", self.rng, p.append_bytes)
            if offset + len(line) > capacity:
                capacity += LOG_CHUNK
                dev.ensure_span(name, capacity)
            dev.record_io("W", name, offset, len(line), line, tag=TAG)
            offset += len(line)
            yield "append"


def run_benign(persona: BenignPersona, manifest: CorpusManifest, device: BlockDevice, store,
               seed: int = 0):
    """Run a persona to completion; returns the device's trace records."""
    BenignRun(persona, manifest, device, store, seed).run()
    return device.sink.records()
