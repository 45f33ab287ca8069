"""Trace records and their CSV form."""
from __future__ import annotations

import csv
import io
import itertools
import threading
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

TRACE_HEADER = ("ts_ns", "op", "lba", "len", "entropy", "tid", "tag")
FOREIGN_HEADER = TRACE_HEADER[:5]
TAGS = ("data", "meta", "shred", "keyfile", "benign")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TraceRecord:
    ts_ns: int
    op: str
    lba: int
    len: int
    entropy: Optional[float]
    tid: int = 0
    tag: str = "data"

    def __post_init__(self):
        if self.op not in ("R", "W"):
            raise ValueError(f"op must be R or W, got {self.op!r}")
        if self.len < 1:
            raise ValueError("record length must be at least one sector")
        if (self.entropy is None) != (self.op == "R"):
            raise ValueError("entropy is present exactly on writes")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")

    @property
    def nbytes(self) -> int:
        return self.len * 512


class TraceSink:
    """Thread-safe append-only record collector.

    Each append gets a global sequence number; `records()` sorts by
    (ts_ns, tid, seq), which is how concurrent real-clock workers serialize.
    """

    def __init__(self):
        self._rows: list[tuple[int, int, int, TraceRecord]] = []
        self._seq = itertools.count()
        self._lock = threading.Lock()

    def append(self, rec: TraceRecord) -> None:
        with self._lock:
            self._rows.append((rec.ts_ns, rec.tid, next(self._seq), rec))

    def extend(self, recs: Iterable[TraceRecord]) -> None:
        for r in recs:
            self.append(r)

    def __len__(self) -> int:
        return len(self._rows)

    def records(self) -> list[TraceRecord]:
        with self._lock:
            return [r for *_, r in sorted(self._rows, key=lambda t: t[:3])]


def _fmt_entropy(h: Optional[float]) -> str:
    return "" if h is None else f"{h:.6f}"


def write_trace(records: Iterable[TraceRecord], sink) -> None:
    """Write records as CSV to a path or text stream."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as fh:
            return write_trace(records, fh)
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    last = None
    for r in records:
        if last is not None and r.ts_ns < last:
            raise ValueError("records must be ordered by ts_ns")
        last = r.ts_ns
        w.writerow((r.ts_ns, r.op, r.lba, r.len, _fmt_entropy(r.entropy), r.tid, r.tag))


def trace_to_string(records: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    write_trace(records, buf)
    return buf.getvalue()


def parse_trace(source, foreign: bool | None = None) -> list[TraceRecord]:
    """Parse a native trace, or a foreign one lacking the tid/tag columns.

    Foreign traces get tid 0 and tag "data"; out-of-order timestamps there only
    warn. In native traces they are an error, as is any malformed row.
    """
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and "\n" in source):
        with open(source, newline="") as fh:
            return parse_trace(fh, foreign)
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise TraceFormatError("line 1: empty trace file") from None
    if header == TRACE_HEADER:
        is_foreign = False
    elif header == FOREIGN_HEADER:
        is_foreign = True
    else:
        raise TraceFormatError(f"line 1: bad header {','.join(header)!r}")
    if foreign is not None and foreign != is_foreign:
        raise TraceFormatError("line 1: header does not match the requested trace flavour")
    out: list[TraceRecord] = []
    last = None
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TraceFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ts, op, lba, ln, ent = int(row[0]), row[1], int(row[2]), int(row[3]), row[4]
            tid, tag = (0, "data") if is_foreign else (int(row[5]), row[6])
            rec = TraceRecord(ts, op, lba, ln, float(ent) if ent != "" else None, tid, tag)
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
        if ts < 0 or lba < 0:
            raise TraceFormatError(f"line {lineno}: negative timestamp or LBA")
        if last is not None and ts < last:
            if is_foreign:
                warnings.warn(f"line {lineno}: timestamp goes backwards", stacklevel=2)
            else:
                raise TraceFormatError(f"line {lineno}: timestamp goes backwards")
        last = ts if last is None else max(last, ts)
        out.append(rec)
    return out
