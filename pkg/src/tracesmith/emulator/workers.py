"""Automatic worker-count adjustment for real-clock campaigns."""
from __future__ import annotations

import threading
import time
from typing import Callable, Optional

from .config import AutoAdjust

HYSTERESIS = 0.1


def system_load() -> float:
    """Current CPU utilisation as a fraction of all cores."""
    import psutil
    return psutil.cpu_percent(interval=None) / 100.0


class AutoAdjuster:
    """Samples load every period and moves the active-worker limit one step.

    Above the target the limit drops by one; below target minus a small
    hysteresis band it rises by one. Workers with an id at or above the
    limit park until they are let back in (or the run ends).
    """

    def __init__(self, max_workers: int, params: AutoAdjust,
                 load_fn: Optional[Callable[[], float]] = None):
        self.max_workers = max_workers
        self.params = params
        self.load_fn = load_fn or system_load
        self.active = max(1, int(params.target_load_fraction * max_workers))
        self.samples: list[dict] = []
        self._cond = threading.Condition()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._t0 = time.perf_counter()

    def step(self, load: float) -> int:
        """Apply one sample; returns the new active limit."""
        target = self.params.target_load_fraction
        with self._cond:
            if load > target and self.active > 1:
                self.active -= 1
            elif load < target - HYSTERESIS and self.active < self.max_workers:
                self.active += 1
            self.samples.append({"t_ms": (time.perf_counter() - self._t0) * 1000,
                                 "load": load, "active": self.active})
            self._cond.notify_all()
            return self.active

    def wait_turn(self, wid: int, finished: Callable[[], bool] = lambda: False) -> None:
        with self._cond:
            while wid >= self.active and not self._stop.is_set() and not finished():
                self._cond.wait(timeout=0.05)

    def _loop(self) -> None:
        period = self.params.sample_period_ms / 1000.0
        while not self._stop.wait(period):
            self.step(float(self.load_fn()))

    def start(self) -> None:
        if self.load_fn is system_load:
            system_load()  # first psutil sample only primes the counter
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        with self._cond:
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join()

    def mean_active(self) -> float:
        if not self.samples:
            return float(self.active)
        return sum(s["active"] for s in self.samples) / len(self.samples)
