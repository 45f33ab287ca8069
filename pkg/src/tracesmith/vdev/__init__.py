"""Virtual block device: layout, extents, clocks, entropy, and traces."""
from .clock import ClockParams, RealClock, VirtualClock, make_clock
from .device import BlockDevice
from .entropy import clz64, entropy_clz, entropy_exact, ilog2
from .layout import (BLOCK_BYTES, SECTOR_BYTES, CapacityError, DeviceLayout, Extent, ExtentMap,
                     Partition, build_extent_map, default_layout)
from .trace import (TRACE_HEADER, TraceFormatError, TraceRecord, TraceSink, parse_trace,
                    trace_to_string, write_trace)

__all__ = [
    "BLOCK_BYTES", "SECTOR_BYTES", "BlockDevice", "CapacityError", "ClockParams", "DeviceLayout",
    "Extent", "ExtentMap", "Partition", "RealClock", "TRACE_HEADER", "TraceFormatError",
    "TraceRecord", "TraceSink", "VirtualClock", "build_extent_map", "clz64", "default_layout",
    "entropy_clz", "entropy_exact", "ilog2", "make_clock", "parse_trace",
    "trace_to_string", "write_trace",
]
