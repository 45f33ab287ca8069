"""Virtual and wall clocks driving trace timestamps."""
from __future__ import annotations

import time
from dataclasses import dataclass

GiB = float(1 << 30)


@dataclass
class ClockParams:
    mode: str = "virtual"
    base_latency_ns: int = 50_000
    read_bandwidth_Bps: float = 2 * GiB
    write_bandwidth_Bps: float = 1 * GiB
    crypto_ns_per_byte: float = 0.5

    def __post_init__(self):
        if self.mode not in ("virtual", "real"):
            raise ValueError(f"clock mode must be virtual or real, got {self.mode!r}")
        if self.read_bandwidth_Bps <= 0 or self.write_bandwidth_Bps <= 0:
            raise ValueError("bandwidths must be positive")
        if self.base_latency_ns < 0 or self.crypto_ns_per_byte < 0:
            raise ValueError("latency and crypto cost must be non-negative")

    def io_ns(self, op: str, nbytes: int) -> float:
        bw = self.read_bandwidth_Bps if op == "R" else self.write_bandwidth_Bps
        return self.base_latency_ns + nbytes / bw * 1e9

    def crypto_ns(self, nbytes: int) -> float:
        return self.crypto_ns_per_byte * nbytes

    @classmethod
    def from_dict(cls, d: dict | None) -> "ClockParams":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "base_latency_ns": self.base_latency_ns,
                "read_bandwidth_Bps": self.read_bandwidth_Bps,
                "write_bandwidth_Bps": self.write_bandwidth_Bps,
                "crypto_ns_per_byte": self.crypto_ns_per_byte}


class VirtualClock:
    """Time moves only when the device model says so.

    `speedup` divides modeled I/O and crypto cost; the campaign sets it to the
    number of files in flight to model parallel workers on one timeline.
    """

    virtual = True

    def __init__(self, params: ClockParams | None = None):
        self.params = params or ClockParams()
        self._now = 0.0
        self.speedup = 1.0

    def now_ns(self) -> int:
        return int(round(self._now))

    def advance(self, ns: float) -> None:
        if ns < 0:
            raise ValueError("virtual time cannot go backwards")
        self._now += ns

    def charge_io(self, op: str, nbytes: int) -> None:
        self.advance(self.params.io_ns(op, nbytes) / self.speedup)

    def charge_crypto(self, nbytes: int) -> None:
        self.advance(self.params.crypto_ns(nbytes) / self.speedup)

    def sleep_ms(self, ms: float) -> None:
        self.advance(ms * 1e6)


class RealClock:
    """Wall time since construction; delays actually sleep."""

    virtual = False

    def __init__(self, params: ClockParams | None = None):
        self.params = params or ClockParams(mode="real")
        self._t0 = time.perf_counter_ns()
        self.speedup = 1.0

    def now_ns(self) -> int:
        return time.perf_counter_ns() - self._t0

    def advance(self, ns: float) -> None:
        pass

    def charge_io(self, op: str, nbytes: int) -> None:
        pass

    def charge_crypto(self, nbytes: int) -> None:
        pass

    def sleep_ms(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


def make_clock(params: ClockParams | None = None):
    params = params or ClockParams()
    return VirtualClock(params) if params.mode == "virtual" else RealClock(params)
