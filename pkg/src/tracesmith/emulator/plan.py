"""Campaign planning: target selection, filters, ordering, and burst schedule."""
from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from pathlib import PurePosixPath
from typing import Optional

import numpy as np

from .. import ValidationError
from ..corpus import CorpusManifest
from .config import EmulatorConfig
from .safety import check_relative

_PLAN_STREAM = 0x504C414E  # "PLAN": keeps plan draws apart from other seeded streams


class EmptyPlan(ValidationError):
    pass


@dataclass(frozen=True)
class PlanItem:
    path: str
    length: int
    burst: int          # index of the burst group this file belongs to
    delay_ms: float     # pause after this file (non-zero only when it closes a burst)


@dataclass(frozen=True)
class CampaignPlan:
    items: tuple[PlanItem, ...]

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def paths(self) -> list[str]:
        return [it.path for it in self.items]

    @property
    def total_bytes(self) -> int:
        return sum(it.length for it in self.items)


def matches(pattern: str, rel: str) -> bool:
    """Extension patterns (".log") match suffixes; anything else is a wildcard."""
    name = PurePosixPath(rel).name
    if pattern.startswith(".") and not any(c in pattern for c in "*?["):
        return name.lower().endswith(pattern.lower())
    return fnmatch.fnmatch(name, pattern) or fnmatch.fnmatch(rel, pattern)


def _in_targets(rel: str, targets: list[str]) -> bool:
    for t in targets:
        if t in (".", ""):
            return True
        if rel == t or rel.startswith(t.rstrip("/") + "/"):
            return True
    return False


def select_files(config: EmulatorConfig, manifest: CorpusManifest) -> list:
    targets = [t if t in (".", "") else check_relative(t) for t in config.target_dirs]
    out = []
    for e in manifest.entries:
        if not _in_targets(e.path, targets):
            continue
        if config.custom_extension and e.path.endswith(config.custom_extension):
            continue
        if config.include and not any(matches(p, e.path) for p in config.include):
            continue
        if any(matches(p, e.path) for p in config.exclude):
            continue
        out.append(e)
    return out


def plan_campaign(config: EmulatorConfig, manifest: CorpusManifest, store=None) -> CampaignPlan:
    """Filter and order the manifest into a deterministic per-file schedule.

    `store` supplies modification/creation times for the mtime and ctime
    orders; ties fall back to name order.
    """
    if store is not None:
        for t in config.target_dirs:
            if not store.is_dir(t):
                raise ValidationError(f"target directory {t!r} does not exist under the sandbox root")
    entries = select_files(config, manifest)
    if not entries:
        raise EmptyPlan("empty plan: every file was filtered out")
    rng = np.random.default_rng([config.seed, _PLAN_STREAM])
    if config.order == "name":
        entries.sort(key=lambda e: e.path)
    elif config.order == "size":
        entries.sort(key=lambda e: (e.length, e.path))
    elif config.order in ("mtime", "ctime"):
        if store is None:
            raise ValidationError(f"order={config.order} needs file timestamps (pass a store)")
        col = 0 if config.order == "mtime" else 1
        entries.sort(key=lambda e: (store.times(e.path)[col], e.path))
    else:
        entries.sort(key=lambda e: e.path)
        entries = [entries[i] for i in rng.permutation(len(entries))]
    group = config.burst_files * config.workers
    items = []
    for i, e in enumerate(entries):
        closes = (i + 1) % group == 0 and i + 1 < len(entries)
        delay = config.delay.draw(rng) if closes else 0.0
        items.append(PlanItem(e.path, e.length, i // group, delay))
    return CampaignPlan(tuple(items))
