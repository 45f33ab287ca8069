"""Partitioned device layout and the 4-KiB-aligned extent allocator."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable

SECTOR_BYTES = 512
BLOCK_BYTES = 4096
SECTORS_PER_BLOCK = BLOCK_BYTES // SECTOR_BYTES
MAX_RECORD_SECTORS = 512
PARTITION_NAMES = ("mbr", "boot", "os", "recovery", "data")

GiB = 1 << 30
MiB = 1 << 20


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Partition:
    name: str
    start_lba: int
    length_sectors: int

    @property
    def end_lba(self) -> int:
        """One past the last sector."""
        return self.start_lba + self.length_sectors

    def contains(self, lba: int, length: int = 1) -> bool:
        return self.start_lba <= lba and lba + length <= self.end_lba


@dataclass(frozen=True)
class DeviceLayout:
    partitions: tuple[Partition, ...]
    sector_bytes: int = SECTOR_BYTES

    def __post_init__(self):
        if self.sector_bytes != SECTOR_BYTES:
            raise ValueError("sector size is fixed at 512 bytes")
        if not self.partitions:
            raise ValueError("layout needs partitions")
        pos = self.partitions[0].start_lba
        for p in self.partitions:
            if p.name not in PARTITION_NAMES:
                raise ValueError(f"unknown partition name {p.name!r}")
            if p.length_sectors <= 0:
                raise ValueError(f"partition {p.name} is empty")
            if p.start_lba != pos:
                raise ValueError(f"partition {p.name} is not contiguous with its predecessor")
            pos = p.end_lba
        data = self.partitions[-1]
        if data.name != "data":
            raise ValueError("data partition must be last")
        if any(p.length_sectors >= data.length_sectors for p in self.partitions[:-1]):
            raise ValueError("data partition must be the largest")

    @property
    def data(self) -> Partition:
        return self.partitions[-1]

    @property
    def total_sectors(self) -> int:
        return self.partitions[-1].end_lba

    def partition_of(self, lba: int, length: int = 1) -> Partition | None:
        """The single partition holding [lba, lba+length), or None if it straddles."""
        for p in self.partitions:
            if p.contains(lba, length):
                return p
        return None

    def to_dict(self) -> dict:
        return {"sector_bytes": self.sector_bytes,
                "partitions": [[p.name, p.start_lba, p.length_sectors] for p in self.partitions]}


def default_layout(device_bytes: int = 16 * GiB) -> DeviceLayout:
    """MBR gap, 512 MiB boot, 4 GiB OS, 512 MiB recovery, data takes the rest."""
    sizes = [("mbr", 2048), ("boot", 512 * MiB // SECTOR_BYTES),
             ("os", 4 * GiB // SECTOR_BYTES), ("recovery", 512 * MiB // SECTOR_BYTES)]
    parts, pos = [], 0
    for name, n in sizes:
        parts.append(Partition(name, pos, n))
        pos += n
    parts.append(Partition("data", pos, device_bytes // SECTOR_BYTES - pos))
    return DeviceLayout(tuple(parts))


def blocks_for(nbytes: int) -> int:
    return max(1, -(-nbytes // BLOCK_BYTES))


@dataclass(frozen=True)
class Extent:
    start_lba: int
    length_sectors: int

    @property
    def end_lba(self) -> int:
        return self.start_lba + self.length_sectors

    @property
    def nbytes(self) -> int:
        return self.length_sectors * SECTOR_BYTES


@dataclass
class ExtentMap:
    """File -> extent mapping over the data partition.

    The first `journal_sectors` of the data partition hold the metadata journal;
    file allocation starts right after it at `alloc_start`.
    """

    layout: DeviceLayout
    journal: Extent
    alloc_start: int
    extents: dict[str, Extent] = field(default_factory=dict)
    overflow: dict[str, list[Extent]] = field(default_factory=dict)
    free: list[tuple[int, int]] = field(default_factory=list)  # sorted (start, length)

    @property
    def free_sectors(self) -> int:
        return sum(n for _, n in self.free)

    def extent(self, path: str) -> Extent:
        try:
            return self.extents[path]
        except KeyError:
            raise KeyError(f"unmapped file {path!r}") from None

    def _take(self, sectors: int) -> Extent:
        for i, (start, n) in enumerate(self.free):
            if n >= sectors:
                if n == sectors:
                    del self.free[i]
                else:
                    self.free[i] = (start + sectors, n - sectors)
                return Extent(start, sectors)
        raise CapacityError(f"no free run of {sectors} sectors left in the data partition")

    def _release(self, ext: Extent) -> None:
        i = bisect.bisect_left(self.free, (ext.start_lba, 0))
        self.free.insert(i, (ext.start_lba, ext.length_sectors))
        # coalesce with neighbours
        merged: list[tuple[int, int]] = []
        for start, n in self.free[max(0, i - 1):i + 2]:
            if merged and merged[-1][0] + merged[-1][1] == start:
                merged[-1] = (merged[-1][0], merged[-1][1] + n)
            else:
                merged.append((start, n))
        self.free[max(0, i - 1):i + 2] = merged

    def allocate(self, path: str, nbytes: int) -> Extent:
        if path in self.extents:
            raise ValueError(f"{path!r} already mapped")
        ext = self._take(blocks_for(nbytes) * SECTORS_PER_BLOCK)
        self.extents[path] = ext
        return ext

    def allocate_anonymous(self, nbytes: int) -> Extent:
        return self._take(blocks_for(nbytes) * SECTORS_PER_BLOCK)

    def extend(self, path: str, nbytes: int) -> Extent:
        """Give `path` an extra extent (the file outgrew its original blocks)."""
        ext = self._take(blocks_for(nbytes) * SECTORS_PER_BLOCK)
        self.overflow.setdefault(path, []).append(ext)
        return ext

    def release(self, path: str) -> None:
        self._release(self.extents.pop(path))
        for ext in self.overflow.pop(path, []):
            self._release(ext)

    def rename(self, old: str, new: str) -> None:
        if new in self.extents:
            raise ValueError(f"{new!r} already mapped")
        self.extents[new] = self.extents.pop(old)
        if old in self.overflow:
            self.overflow[new] = self.overflow.pop(old)

    def spans(self, path: str) -> list[Extent]:
        return [self.extent(path), *self.overflow.get(path, [])]


def build_extent_map(layout: DeviceLayout, entries: Iterable, journal_sectors: int = 2048,
                     slack: float = 0.25) -> ExtentMap:
    """Pack files contiguously in ascending path order from the start of the file area.

    `entries` are manifest entries exposing `.path` and `.length`.
    """
    data = layout.data
    if journal_sectors % SECTORS_PER_BLOCK:
        raise ValueError("journal size must be a whole number of 4-KiB blocks")
    journal = Extent(data.start_lba, journal_sectors)
    start = data.start_lba + journal_sectors
    entries = sorted(entries, key=lambda e: e.path)
    need = sum(blocks_for(e.length) * SECTORS_PER_BLOCK for e in entries)
    if need * (1 + slack) > data.end_lba - start:
        raise CapacityError(f"corpus needs {need} sectors (+{slack:.0%} slack); "
                            f"data partition offers {data.end_lba - start}")
    emap = ExtentMap(layout, journal, start)
    pos = start
    for e in entries:
        n = blocks_for(e.length) * SECTORS_PER_BLOCK
        emap.extents[e.path] = Extent(pos, n)
        pos += n
    emap.free = [(pos, data.end_lba - pos)]
    return emap
