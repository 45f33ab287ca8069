"""One entry point for any workload type."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..cipher import KeyHierarchy, derive_keys
from ..corpus import CorpusManifest
from ..vdev import TraceSink
from .benign import BenignRun
from .campaign import CampaignReport, build_device, run_campaign
from .config import EmulatorConfig
from .mixed import run_mixed
from .plan import plan_campaign


@dataclass
class WorkloadResult:
    records: list
    report: Optional[CampaignReport]
    actions: Optional[list] = None
    device: object = None


def run_workload(config: EmulatorConfig, manifest: CorpusManifest, store, escrow_path,
                 keys: Optional[KeyHierarchy] = None, hook=None, load_fn=None,
                 sink: Optional[TraceSink] = None) -> WorkloadResult:
    """Build a fresh device for the manifest and run the configured workload on it."""
    device = build_device(manifest, config.clock, config.metadata, sink)
    if config.workload == "benign":
        BenignRun(config.persona, manifest, device, store, config.seed).run()
        return WorkloadResult(device.sink.records(), None, device=device)
    keys = keys or derive_keys(config.seed)
    if config.workload == "mixed":
        res = run_mixed(config, manifest, device, store, escrow_path, keys, hook=hook)
        return WorkloadResult(res.records, res.report, res.actions, device)
    plan = plan_campaign(config, manifest, store)
    records, _, report = run_campaign(plan, config, device, store, escrow_path, keys, hook, load_fn)
    return WorkloadResult(records, report, device=device)
