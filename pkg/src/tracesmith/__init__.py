"""Ransomware-workload emulation lab: decoy corpora, block traces, detectors, and config search."""

__version__ = "0.1.0"

SANDBOX_MARKER = ".tracesmith-sandbox"


class ValidationError(ValueError):
    """Bad input or configuration. The CLI maps it to exit code 2."""
