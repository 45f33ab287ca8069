"""Encryption campaigns: per-file read, encrypt, escrow, destructive write, rename.

Every file follows the same sequence:

1. read the plaintext (R records over the file's extent);
2. encrypt it in memory;
3. append and flush its escrow entry (W records tagged "keyfile");
4. only then the destructive writes, per write method.

Virtual-clock campaigns run single-threaded: file i is credited to worker
``i % workers`` and modeled cost is divided by the number of files still in
flight (capped at the worker count). Real-clock campaigns use a thread pool.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from ..cipher import (DEFAULT_REGISTRY, EscrowEntry, EscrowWriter, KeyHierarchy, derive_keys,
                      encrypt_file, get_cipher, new_file_key, size_model, wrap_file_key)
from ..cipher.content import apply_content_method
from ..cipher.drbg import Drbg
from ..corpus import CorpusManifest, sha256_hex
from ..vdev import BlockDevice, ClockParams, TraceSink, build_extent_map, default_layout, make_clock
from .config import EmulatorConfig
from .plan import CampaignPlan, PlanItem

log = logging.getLogger(__name__)

ESCROW_DEVICE_PATH = "<escrow>"
ESCROW_INITIAL_BYTES = 64 * 1024


class CampaignAborted(RuntimeError):
    pass


class CampaignInterrupted(RuntimeError):
    """Raised by test hooks to simulate the process being killed."""


@dataclass
class FileOutcome:
    path: str
    status: str              # encrypted | skipped | failed
    encrypted_path: str = ""
    reason: str = ""
    bytes_in: int = 0
    bytes_out: int = 0


@dataclass
class CampaignReport:
    label: str
    cipher: str
    content_method: str
    write_method: str
    workers: int
    files_planned: int = 0
    files_attempted: int = 0
    files_encrypted: int = 0
    files_skipped: int = 0
    files_failed: int = 0
    bytes_processed: int = 0
    bytes_written: int = 0
    virtual_s: float = 0.0
    wall_s: float = 0.0
    clock: str = "virtual"
    skipped: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    worker_samples: list = field(default_factory=list)

    @property
    def encryptions_per_second(self) -> float:
        span = self.virtual_s if self.clock == "virtual" else self.wall_s
        return self.files_encrypted / span if span > 0 else 0.0

    def add(self, o: FileOutcome) -> None:
        self.files_attempted += 1
        if o.status == "encrypted":
            self.files_encrypted += 1
            self.bytes_processed += o.bytes_in
            self.bytes_written += o.bytes_out
        elif o.status == "skipped":
            self.files_skipped += 1
            self.skipped.append({"path": o.path, "reason": o.reason})
        else:
            self.files_failed += 1
            self.failed.append({"path": o.path, "reason": o.reason})

    def to_dict(self) -> dict:
        return {
            "label": self.label, "cipher": self.cipher, "content_method": self.content_method,
            "write_method": self.write_method, "workers": self.workers, "clock": self.clock,
            "files_planned": self.files_planned, "files_attempted": self.files_attempted,
            "files_encrypted": self.files_encrypted, "files_skipped": self.files_skipped,
            "files_failed": self.files_failed, "bytes_processed": self.bytes_processed,
            "bytes_written": self.bytes_written, "virtual_s": self.virtual_s,
            "wall_s": self.wall_s, "encryptions_per_second": self.encryptions_per_second,
            "skipped": self.skipped, "failed": self.failed,
            "worker_samples": self.worker_samples,
        }


def build_device(manifest: CorpusManifest, clock_params: Optional[ClockParams] = None,
                 metadata: bool = True, sink: Optional[TraceSink] = None) -> BlockDevice:
    """Default 16 GiB layout with the corpus packed at the start of the data partition."""
    emap = build_extent_map(default_layout(), manifest.entries)
    return BlockDevice(emap, make_clock(clock_params or ClockParams()), sink, metadata)


class _EscrowOnDevice:
    """Mirrors escrow appends as keyfile writes at a growing device extent."""

    def __init__(self, device: BlockDevice, writer: EscrowWriter):
        self.device = device
        self.writer = writer
        self.offset = 0
        self._lock = threading.Lock()

    def _mirror(self, raw: bytes, tid: int) -> None:
        if not raw:
            return
        with self._lock:
            off = self.offset
            self.offset += len(raw)
        self.device.ensure_span(ESCROW_DEVICE_PATH, off + len(raw))
        self.device.record_io("W", ESCROW_DEVICE_PATH, off, len(raw), raw, tag="keyfile", tid=tid)

    def open(self, tid: int = 0) -> None:
        # Allocated on first use so an idle campaign leaves the device untouched.
        self.device.allocate(ESCROW_DEVICE_PATH, ESCROW_INITIAL_BYTES)
        self._mirror(self.writer.open(), tid)

    def append(self, entry: EscrowEntry, tid: int) -> None:
        self._mirror(self.writer.append(entry), tid)


class Campaign:
    """One encryption campaign over a plan, bound to a store, device and key set.

    `hook(event, item)` is called at "escrowed" (entry flushed, nothing
    destroyed yet) and "done" (file fully processed); raising from it models
    a crash at that point.
    """

    def __init__(self, plan: CampaignPlan, config: EmulatorConfig, device: BlockDevice, store,
                 escrow: EscrowWriter, keys: Optional[KeyHierarchy] = None,
                 registry=DEFAULT_REGISTRY, hook: Optional[Callable] = None,
                 load_fn: Optional[Callable[[], float]] = None):
        self.plan = plan
        self.config = config
        self.device = device
        self.clock = device.clock
        self.store = store
        self.keys = (keys or derive_keys(config.seed)).victim_view()
        self.registry = registry
        self.spec = get_cipher(config.cipher_id, registry)
        self.escrow = _EscrowOnDevice(device, escrow)
        self.hook = hook
        self.load_fn = load_fn
        self.report = CampaignReport(config.class_label, config.cipher_id, str(config.content_method),
                                     config.write_method, config.workers,
                                     files_planned=len(plan),
                                     clock="virtual" if self.clock.virtual else "real")
        self.outcomes: list[FileOutcome] = []
        self._started = False
        self._t0 = 0.0

    # -- one file ----------------------------------------------------------------
    def _modeled_ns(self, n: int, image_len: int, enc_bytes: int) -> float:
        p = self.clock.params
        cost = p.io_ns("R", n) + p.crypto_ns(enc_bytes) + p.io_ns("W", image_len)
        if self.config.write_method != "overwrite":
            cost += p.io_ns("W", n)
        return cost

    def _emit_event(self, event: str, item: PlanItem) -> None:
        if self.hook is not None:
            self.hook(event, item)

    def process(self, item: PlanItem, tid: int) -> FileOutcome:
        cfg, dev, store = self.config, self.device, self.store
        rel = item.path
        new_rel = rel + cfg.custom_extension if cfg.custom_extension else rel
        try:
            data = store.read(rel)
        except (OSError, KeyError) as exc:
            return FileOutcome(rel, "failed", reason=f"read failed: {exc}")
        n = len(data)
        t_start = time.perf_counter()
        timeout = cfg.per_file_timeout_ms
        if timeout is not None and self.clock.virtual:
            image_len = size_model(cfg.cipher_id, cfg.content_method, n, self.registry)
            enc_bytes = sum(e - s for s, e in apply_content_method(n, cfg.content_method))
            modeled = self._modeled_ns(n, image_len, enc_bytes) / self.clock.speedup
            if modeled > timeout * 1e6:
                self.clock.sleep_ms(timeout)
                return FileOutcome(rel, "skipped", reason=f"timeout after {timeout} ms (modeled)")
        if n:
            dev.record_io("R", rel, 0, n, tid=tid)
        drbg = Drbg(cfg.seed, f"file:{rel}")
        fk = new_file_key(self.spec, drbg)
        enc = encrypt_file(data, cfg.cipher_id, cfg.content_method, fk, self.registry)
        self.clock.charge_crypto(enc.encrypted_bytes)
        image = enc.image
        if timeout is not None and not self.clock.virtual:
            if (time.perf_counter() - t_start) * 1000 > timeout:
                return FileOutcome(rel, "skipped", reason=f"timeout after {timeout} ms")
        entry = EscrowEntry(rel, cfg.cipher_id, cfg.content_method,
                            wrap_file_key(self.keys.campaign_public, fk, drbg.read(32)),
                            n, sha256_hex(data), new_rel)
        # Escrow first: nothing below may run unless the entry is on disk.
        self.escrow.append(entry, tid)
        self._emit_event("escrowed", item)
        try:
            self._write(rel, new_rel, data, image, drbg, tid)
        except OSError as exc:
            return FileOutcome(rel, "failed", reason=f"write failed: {exc}")
        return FileOutcome(rel, "encrypted", new_rel, bytes_in=n, bytes_out=len(image))

    def _shred(self, rel: str, n: int, drbg: Drbg, tid: int) -> None:
        dev = self.device
        ext = dev.emap.extent(rel)
        noise = drbg.read(ext.nbytes)
        dev.io_extent("W", ext, 0, ext.nbytes, noise, tag="shred", tid=tid)
        if n:
            self.store.overwrite(rel, noise[:n])
        self.store.remove(rel)
        dev.meta(tid)

    def _copy(self, dev_name: str, store_name: str, image: bytes, tid: int) -> None:
        dev = self.device
        dev.allocate(dev_name, len(image))
        dev.meta(tid)
        dev.record_io("W", dev_name, 0, len(image), image, tid=tid)
        self.store.write(store_name, image)

    def _write(self, rel: str, new_rel: str, data: bytes, image: bytes, drbg: Drbg, tid: int):
        dev, store, method = self.device, self.store, self.config.write_method
        if method == "overwrite":
            dev.ensure_span(rel, len(image))
            dev.record_io("W", rel, 0, len(image), image, tid=tid)
            store.overwrite(rel, image)
            if new_rel != rel:
                store.rename(rel, new_rel)
                dev.rename(rel, new_rel)
                dev.meta(tid)
            return
        same = new_rel == rel
        dev_name = rel + "\0copy" if same else new_rel
        if method == "shred_then_copy":
            self._shred(rel, len(data), drbg, tid)
            self._copy(dev_name, new_rel, image, tid)
        else:
            part = rel + ".part" if same else new_rel
            self._copy(dev_name, part, image, tid)
            self._shred(rel, len(data), drbg, tid)
            if same:
                store.rename(part, rel)
        # The shredded blocks are freed only once the copy has its own extent.
        dev.release(rel)
        if same:
            dev.rename(dev_name, rel)

    # -- scheduling -------------------------------------------------------------
    def _effective_workers(self) -> int:
        cfg = self.config
        if cfg.auto_adjust.enabled:
            return max(1, int(cfg.auto_adjust.target_load_fraction * cfg.workers))
        return cfg.workers

    def start(self) -> None:
        if not self._started:
            self._started = True
            self._t0 = time.perf_counter()
            self.escrow.open()

    def actions(self) -> Iterator[FileOutcome]:
        """Virtual-clock schedule, one yielded outcome per plan item."""
        self.start()
        workers = self._effective_workers()
        budget_ns = self.config.max_virtual_s * 1e9 if self.config.max_virtual_s else None
        items = self.plan.items
        for i, item in enumerate(items):
            if budget_ns is not None and self.clock.now_ns() >= budget_ns:
                break
            self.clock.speedup = float(min(workers, len(items) - i))
            outcome = self.process(item, i % workers)
            self.clock.speedup = 1.0
            self._record(outcome)
            self._emit_event("done", item)
            if item.delay_ms:
                self.clock.sleep_ms(item.delay_ms)
            yield outcome
        self.finish()

    def _record(self, outcome: FileOutcome) -> None:
        self.outcomes.append(outcome)
        self.report.add(outcome)
        if outcome.status == "failed":
            log.warning("file %s failed: %s", outcome.path, outcome.reason)

    def finish(self) -> CampaignReport:
        self.report.virtual_s = self.clock.now_ns() / 1e9 if self.clock.virtual else 0.0
        self.report.wall_s = time.perf_counter() - self._t0
        if not self.clock.virtual:
            self.report.virtual_s = self.clock.now_ns() / 1e9
        self.escrow.writer.close()
        return self.report

    def run(self) -> CampaignReport:
        if self.clock.virtual:
            for _ in self.actions():
                pass
            return self.report
        return self._run_threads()

    def _run_threads(self) -> CampaignReport:
        from .workers import AutoAdjuster
        cfg = self.config
        self.start()
        work: queue.Queue = queue.Queue()
        for item in self.plan.items:
            work.put(item)
        adjuster = AutoAdjuster(cfg.workers, cfg.auto_adjust, self.load_fn) \
            if cfg.auto_adjust.enabled else None
        lock = threading.Lock()
        errors: list[BaseException] = []

        def worker(wid: int) -> None:
            rng = np.random.default_rng([cfg.seed, 0xB0B, wid])
            done_in_burst = 0
            while True:
                if adjuster is not None:
                    adjuster.wait_turn(wid, work.empty)
                try:
                    item = work.get_nowait()
                except queue.Empty:
                    return
                try:
                    outcome = self.process(item, wid)
                    with lock:
                        self._record(outcome)
                    self._emit_event("done", item)
                except BaseException as exc:  # a hook "crash" stops every worker
                    with lock:
                        errors.append(exc)
                    while not work.empty():
                        try:
                            work.get_nowait()
                        except queue.Empty:
                            break
                    return
                done_in_burst += 1
                if done_in_burst >= cfg.burst_files:
                    done_in_burst = 0
                    self.clock.sleep_ms(cfg.delay.draw(rng))

        if adjuster is not None:
            adjuster.start()
        threads = [threading.Thread(target=worker, args=(w,), daemon=True)
                   for w in range(cfg.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if adjuster is not None:
            adjuster.stop()
            self.report.worker_samples = adjuster.samples
        self.finish()
        if errors:
            raise errors[0]
        return self.report


def open_escrow(path, keys: KeyHierarchy, config: EmulatorConfig) -> EscrowWriter:
    """Create the escrow writer; failing here aborts before anything is touched."""
    try:
        fh = open(path, "a")
        fh.close()
    except OSError as exc:
        raise CampaignAborted(f"escrow file {path} is not writable: {exc}") from None
    return EscrowWriter(path, keys, config.custom_extension)


def run_campaign(plan: CampaignPlan, config: EmulatorConfig, device: BlockDevice, store,
                 escrow_path, keys: Optional[KeyHierarchy] = None, hook=None,
                 load_fn=None, registry=DEFAULT_REGISTRY):
    """Execute a plan; returns (trace records, escrow path, report)."""
    keys = keys or derive_keys(config.seed)
    writer = open_escrow(escrow_path, keys, config)
    camp = Campaign(plan, config, device, store, writer, keys, registry, hook, load_fn)
    try:
        report = camp.run()
    finally:
        writer.close()
    return device.sink.records(), Path(escrow_path), report
