"""The emulated block device: turns file operations into trace records."""
from __future__ import annotations

import hashlib
import threading
from typing import Optional, Union

import numpy as np

from .clock import VirtualClock, RealClock
from .entropy import byte_histogram, entropy_from_counts_clz
from .layout import (MAX_RECORD_SECTORS, SECTOR_BYTES, SECTORS_PER_BLOCK, BLOCK_BYTES,
                     DeviceLayout, Extent, ExtentMap)
from .trace import TraceRecord, TraceSink

_META_BLOCK_CACHE: dict[int, bytes] = {}


def _meta_block(seq: int) -> bytes:
    """A journal block: a short inode-like header, a counter, then zero fill."""
    key = seq % 64
    blk = _META_BLOCK_CACHE.get(key)
    if blk is None:
        head = b"JRNL" + seq.to_bytes(8, "little") + hashlib.sha256(seq.to_bytes(8, "little")).digest()
        blk = head + bytes(BLOCK_BYTES - len(head))
        _META_BLOCK_CACHE[key] = blk
    return blk


class BlockDevice:
    """Maps (file, offset, length) requests onto LBAs and logs them.

    Requests over 256 KiB are split into 512-sector records. Every write record
    carries the CLZ entropy of its own payload slice. Allocation and the
    journal pointer are guarded by a lock so real-clock workers can share it.
    """

    def __init__(self, extent_map: ExtentMap, clock: Union[VirtualClock, RealClock],
                 sink: Optional[TraceSink] = None, metadata: bool = True):
        self.emap = extent_map
        self.clock = clock
        self.sink = sink if sink is not None else TraceSink()
        self.metadata = metadata
        self._journal_pos = 0
        self._lock = threading.RLock()

    @property
    def layout(self) -> DeviceLayout:
        return self.emap.layout

    # -- allocation passthroughs ------------------------------------------------
    def allocate(self, path: str, nbytes: int) -> Extent:
        with self._lock:
            return self.emap.allocate(path, nbytes)

    def allocate_anonymous(self, nbytes: int) -> Extent:
        with self._lock:
            return self.emap.allocate_anonymous(nbytes)

    def release(self, path: str) -> None:
        with self._lock:
            self.emap.release(path)

    def rename(self, old: str, new: str) -> None:
        with self._lock:
            self.emap.rename(old, new)

    def ensure_span(self, path: str, nbytes: int) -> None:
        """Grow a file's mapping so `nbytes` fit, adding one overflow extent if needed."""
        with self._lock:
            have = sum(e.nbytes for e in self.emap.spans(path))
            if nbytes > have:
                self.emap.extend(path, nbytes - have)

    # -- I/O -------------------------------------------------------------------
    def _emit(self, op: str, lba: int, sectors: int, payload, tid: int, tag: str,
              extra_ns: float) -> TraceRecord:
        ent = None
        if op == "W":
            ent = round(entropy_from_counts_clz(byte_histogram(payload)), 6)
        rec = TraceRecord(self.clock.now_ns(), op, lba, sectors, ent, tid, tag)
        if extra_ns:
            self.clock.advance(extra_ns / self.clock.speedup)
        self.clock.charge_io(op, sectors * SECTOR_BYTES)
        self.sink.append(rec)
        return rec

    def io_extent(self, op: str, extent: Extent, offset: int, length: int, payload=None,
                  tag: str = "data", tid: int = 0, crypto_bytes: int = 0) -> list[TraceRecord]:
        """Issue a request against a raw extent (no file lookup)."""
        return self._io([extent], op, offset, length, payload, tag, tid, crypto_bytes)

    def record_io(self, op: str, path: str, offset: int, length: int, payload=None,
                  tag: str = "data", tid: int = 0, crypto_bytes: int = 0) -> list[TraceRecord]:
        """Log a read or write of `length` bytes at `offset` within a mapped file.

        `crypto_bytes` charges the modeled cipher cost (encrypting that many
        bytes) ahead of the first record's service time.
        """
        with self._lock:
            spans = self.emap.spans(path)
        return self._io(spans, op, offset, length, payload, tag, tid, crypto_bytes)

    def _io(self, spans: list[Extent], op, offset, length, payload, tag, tid, crypto_bytes):
        if length <= 0:
            raise ValueError("zero-length I/O")
        if op == "W":
            if payload is None or len(payload) != length:
                raise ValueError("writes need a payload of exactly `length` bytes")
            payload = memoryview(payload).cast("B")
        capacity = sum(e.nbytes for e in spans)
        if offset < 0 or offset + length > capacity:
            raise ValueError(f"I/O [{offset}, {offset + length}) outside mapped span of {capacity} bytes")
        out: list[TraceRecord] = []
        extra = self.clock.params.crypto_ns(crypto_bytes) if crypto_bytes else 0.0
        # Walk the byte range over the file's extents in order.
        pos, end, base = offset, offset + length, 0
        for ext in spans:
            ext_end = base + ext.nbytes
            while pos < end and pos < ext_end:
                first_sector = (pos - base) // SECTOR_BYTES
                stop = min(end, ext_end, base + (first_sector + MAX_RECORD_SECTORS) * SECTOR_BYTES)
                last_sector = -(-(stop - base) // SECTOR_BYTES)
                sectors = last_sector - first_sector
                chunk = payload[pos - offset:stop - offset] if op == "W" else None
                out.append(self._emit(op, ext.start_lba + first_sector, sectors, chunk, tid, tag, extra))
                extra = 0.0
                pos = stop
            base = ext_end
            if pos >= end:
                break
        return out

    def meta(self, tid: int = 0, tag: str = "meta") -> Optional[TraceRecord]:
        """One 8-sector journal write for a create, rename or delete."""
        if not self.metadata:
            return None
        with self._lock:
            j = self.emap.journal
            slot = self._journal_pos % (j.length_sectors // SECTORS_PER_BLOCK)
            seq = self._journal_pos
            self._journal_pos += 1
        return self._emit("W", j.start_lba + slot * SECTORS_PER_BLOCK, SECTORS_PER_BLOCK,
                          _meta_block(seq), tid, tag, 0.0)
