"""Workload emulation: campaigns, benign personas, mixed runs, decryption."""
from .benign import BenignRun, compress, convert, run_benign
from .campaign import (Campaign, CampaignAborted, CampaignInterrupted, CampaignReport, FileOutcome,
                       build_device, open_escrow, run_campaign)
from .config import (DEFAULT_EXCLUDE, AutoAdjust, BenignPersona, DelaySpec, EmulatorConfig,
                     load_config, save_config)
from .decryptor import RestoreReport, decrypt_campaign
from .mixed import MixedResult, run_mixed
from .plan import CampaignPlan, EmptyPlan, PlanItem, plan_campaign
from .run import WorkloadResult, run_workload
from .safety import SandboxError, require_marker
from .store import DiskStore, MemoryStore
from .workers import AutoAdjuster

__all__ = [n for n in dir() if not n.startswith("_")]
