"""Lab presets: four ransomware personas, two benign personas, and a corpus recipe.

The personas differ along the axes the features can see: cipher and
content method (write entropy), write method (LBA spread of writes), and
pacing (throughput per window).
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

from ..cipher import ContentMethod, KeyHierarchy, derive_keys
from ..corpus import CorpusManifest, CorpusSpec, Snapshot
from ..features import FeatureVector, WindowSpec, build_dataset, extract_windows
from .config import BenignPersona, DelaySpec, EmulatorConfig
from .run import run_workload
from .store import MemoryStore

LAB_KEY_SEED = 7


def lab_corpus_spec(file_count: int = 160, seed: int = 2024) -> CorpusSpec:
    return CorpusSpec.from_dict({
        "file_count": file_count,
        "size_distribution": {"min_bytes": 1024, "max_bytes": 131072, "shape": "lognormal"},
        "type_mix": [["text", 0.35], ["csv", 0.15], ["binary-random", 0.1],
                     ["binary-structured", 0.25], ["already-compressed", 0.15]],
        "directory_fanout": 8,
        "seed": seed,
    })


def ransomware_personas() -> dict[str, EmulatorConfig]:
    base = EmulatorConfig(exclude=())
    return {
        "rw-cbc-overwrite": base.with_(
            label="rw-cbc-overwrite", cipher_id="AES-256-CBC", content_method=ContentMethod.full(),
            write_method="overwrite", delay=DelaySpec.static(250), burst_files=1, order="name"),
        "rw-chacha-header-copy": base.with_(
            label="rw-chacha-header-copy", cipher_id="CHACHA20",
            content_method=ContentMethod.first(4096), write_method="copy_then_shred",
            delay=DelaySpec.random(100, 500), burst_files=1, order="size"),
        "rw-ctr-intermittent": base.with_(
            label="rw-ctr-intermittent", cipher_id="AES-128-CTR",
            content_method=ContentMethod.segments(4096, 32768), write_method="shred_then_copy",
            delay=DelaySpec.static(1000), burst_files=2, workers=4, order="random"),
        "rw-shuffle-burst": base.with_(
            label="rw-shuffle-burst", cipher_id="SHUFFLE", content_method=ContentMethod.full(),
            write_method="overwrite", delay=DelaySpec.static(500), burst_files=4, order="mtime"),
    }


def benign_personas() -> dict[str, EmulatorConfig]:
    return {
        "benign-fileserver": EmulatorConfig(
            workload="benign", label="benign-fileserver",
            persona=BenignPersona("fileserver", read_ratio=0.9, op_count=400, think_ms=60,
                                  think_jitter=0.8, name="benign-fileserver")),
        "benign-compressor": EmulatorConfig(
            workload="benign", label="benign-compressor",
            persona=BenignPersona("compressor", codec="gzip", level=6, files_per_archive=4,
                                  op_count=60, think_ms=400, think_jitter=0.5,
                                  name="benign-compressor")),
    }


def lab_personas() -> dict[str, EmulatorConfig]:
    return {**ransomware_personas(), **benign_personas()}


def persona_windows(config: EmulatorConfig, snapshot: Snapshot, min_windows: int,
                    spec: WindowSpec = WindowSpec(), keys: Optional[KeyHierarchy] = None,
                    max_runs: int = 200) -> list[FeatureVector]:
    """Repeat a persona on fresh in-memory copies of the corpus until enough windows exist.

    Run r uses seed ``config.seed + r``; every run is labelled with the
    persona's class label.
    """
    keys = keys or derive_keys(LAB_KEY_SEED)
    out: list[FeatureVector] = []
    with tempfile.TemporaryDirectory() as tmp:
        for r in range(max_runs):
            cfg = config.with_(seed=config.seed + r)
            store = MemoryStore.from_snapshot(snapshot)
            res = run_workload(cfg, snapshot.manifest, store, Path(tmp) / "escrow.jsonl", keys)
            out += extract_windows(res.records, spec, cfg.class_label)
            if len(out) >= min_windows:
                break
    return out


def build_lab_dataset(snapshot: Snapshot, personas: Optional[dict[str, EmulatorConfig]] = None,
                      min_windows: int = 200, spec: WindowSpec = WindowSpec(),
                      balance: bool = False, seed: int = 0, keys=None):
    personas = personas or lab_personas()
    runs = {name: persona_windows(cfg, snapshot, min_windows, spec, keys)
            for name, cfg in personas.items()}
    return build_dataset(runs, sorted(cfg.class_label for cfg in personas.values()),
                         balance=balance, seed=seed)
