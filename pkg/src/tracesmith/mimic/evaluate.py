"""Fitness of a genome: emulate it, window the trace, classify, score F1."""
from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import ValidationError
from ..cipher import KeyHierarchy, derive_keys
from ..corpus import Snapshot, reset_corpus
from ..detect import Model, f1
from ..emulator import DiskStore, EmulatorConfig, MemoryStore, run_workload
from ..features import WindowSpec, extract_windows
from .genome import canonical, decode

log = logging.getLogger(__name__)

WORST = 100.0
BENIGN_PREFIX = "benign"


@dataclass(frozen=True)
class Goal:
    kind: str = "resemble"          # resemble | diverge
    target_class: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("resemble", "diverge"):
            raise ValidationError("goal must be resemble or diverge")
        if self.kind == "resemble" and not self.target_class:
            raise ValidationError("resemble needs a target class")

    @classmethod
    def resemble(cls, target: str) -> "Goal":
        return cls("resemble", target)

    @classmethod
    def diverge(cls) -> "Goal":
        return cls("diverge")


def f1_cost(score: float) -> float:
    """Cost of an F1 score: 100 - 100 * F1."""
    return WORST - 100.0 * score


def resemble_cost(predictions, target: str) -> float:
    """100 - 100 * F1 with every generated window counted as the target class."""
    truths = [target] * len(predictions)
    return f1_cost(f1(list(predictions), truths, target))


def diverge_cost(predictions, ransomware_classes) -> float:
    """100 * the largest per-class F1 over the ransomware classes."""
    preds = list(predictions)
    best = 0.0
    for c in ransomware_classes:
        best = max(best, f1(preds, [c] * len(preds), c))
    return 100.0 * best


@dataclass
class Evaluation:
    cost: float
    duration_s: float
    windows: int
    predictions: list
    error: str = ""


@dataclass
class EvalContext:
    """Everything a fitness call needs; results are cached by canonical genome.

    With `root` set, each evaluation resets the on-disk corpus from the
    snapshot and runs there; otherwise it runs on an in-memory copy.
    """

    model: Model
    snapshot: Snapshot
    window: WindowSpec = field(default_factory=WindowSpec)
    budget_s: float = 300.0
    base_config: EmulatorConfig = field(default_factory=lambda: EmulatorConfig(exclude=()))
    keys: Optional[KeyHierarchy] = None
    ransomware_classes: Optional[tuple] = None
    seed: int = 0
    root: Optional[Path] = None
    workdir: Optional[Path] = None

    def __post_init__(self):
        self.snapshot.load()
        if self.keys is None:
            self.keys = derive_keys(7)
        if self.ransomware_classes is None:
            self.ransomware_classes = tuple(c for c in self.model.classes
                                            if not c.startswith(BENIGN_PREFIX))
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.calls = 0
        self.misses = 0

    def config_for(self, genome) -> EmulatorConfig:
        cfg = decode(genome, self.base_config)
        return cfg.with_(seed=self.seed, max_virtual_s=self.budget_s)

    def _emulate(self, genome, goal: Goal) -> Evaluation:
        cfg = self.config_for(genome)
        if self.root is not None:
            reset_corpus(self.root, self.snapshot)
            store = DiskStore(self.root)
            escrow = Path(self.workdir or self.root.parent) / "eval-escrow.jsonl"
        else:
            store = MemoryStore.from_snapshot(self.snapshot)
            escrow = os.devnull
        res = run_workload(cfg, self.snapshot.manifest, store, escrow, self.keys)
        vecs = extract_windows(res.records, self.window)
        X = np.array([v.values() for v in vecs])
        preds = list(self.model.predict(X))
        if goal.kind == "resemble":
            if goal.target_class not in self.model.classes:
                raise ValidationError(f"model has no class {goal.target_class!r}")
            cost = resemble_cost(preds, goal.target_class)
        else:
            cost = diverge_cost(preds, self.ransomware_classes)
        dur = res.records[-1].ts_ns / 1e9 if res.records else 0.0
        return Evaluation(cost, dur, len(vecs), preds)

    def evaluate(self, genome, goal: Goal) -> Evaluation:
        key = (canonical(genome), goal)
        with self._lock:
            self.calls += 1
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        try:
            ev = self._emulate(genome, goal)
        except ValidationError:
            raise
        except Exception as exc:  # an emulation failure is a worst-case score, not a crash
            log.warning("evaluation of %s failed: %s", genome, exc)
            ev = Evaluation(WORST, 0.0, 0, [], error=str(exc))
        with self._lock:
            self.misses += 1
            self._cache[key] = ev
        return ev

    def objective(self, goal: Goal, with_duration: bool = False):
        """Callable for the searches: (cost,) or (cost, modeled duration)."""
        def fn(genome):
            ev = self.evaluate(genome, goal)
            return (ev.cost, ev.duration_s) if with_duration else (ev.cost,)
        return fn


def evaluate(genome, ctx: EvalContext, goal: Goal) -> float:
    return ctx.evaluate(genome, goal).cost
