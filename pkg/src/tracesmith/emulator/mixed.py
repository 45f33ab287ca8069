"""Mixed workloads: a seeded interleaving of a campaign and a benign persona."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cipher import KeyHierarchy, derive_keys
from ..corpus import CorpusManifest
from ..vdev import BlockDevice
from .benign import BenignRun
from .campaign import Campaign, CampaignReport, open_escrow
from .config import EmulatorConfig
from .plan import plan_campaign

_MIX_STREAM = 0x313


@dataclass
class MixedResult:
    records: list
    report: CampaignReport
    actions: list = field(default_factory=list)   # "ransomware" / "benign" per step

    @property
    def ransomware_fraction(self) -> float:
        return self.actions.count("ransomware") / len(self.actions) if self.actions else 0.0


def run_mixed(config: EmulatorConfig, manifest: CorpusManifest, device: BlockDevice, store,
              escrow_path, keys: KeyHierarchy | None = None, plan=None, hook=None,
              max_actions: int | None = None) -> MixedResult:
    """Each next action comes from the campaign with probability `mix_rate`.

    When one stream runs dry the other continues only if its own draw
    probability is non-zero, so rate 0 and rate 1 reproduce the pure runs.
    """
    r = config.mix_rate
    keys = keys or derive_keys(config.seed)
    plan = plan if plan is not None else plan_campaign(config, manifest, store)
    writer = open_escrow(escrow_path, keys, config)
    camp = Campaign(plan, config, device, store, writer, keys, hook=hook)
    benign = BenignRun(config.persona, manifest, device, store, config.seed)
    streams = {"ransomware": camp.actions(), "benign": benign.actions()}
    live = {"ransomware": r > 0, "benign": r < 1}
    rng = np.random.default_rng([config.seed, _MIX_STREAM])
    actions: list[str] = []
    try:
        while any(live.values()):
            if max_actions is not None and len(actions) >= max_actions:
                break
            pick = "ransomware" if rng.random() < r else "benign"
            if not live[pick]:
                pick = "benign" if pick == "ransomware" else "ransomware"
            try:
                next(streams[pick])
            except StopIteration:
                live[pick] = False
                continue
            actions.append(pick)
    finally:
        if camp._started:
            camp.finish()
        writer.close()
    return MixedResult(device.sink.records(), camp.report, actions)
