"""Byte-histogram Shannon entropy, exact and CLZ-approximated.

Both return entropy normalized by 8 bits, so ciphertext lands near 1.0 and a
constant buffer at 0.0.
"""
from __future__ import annotations

import numpy as np


def _as_array(payload) -> np.ndarray:
    if isinstance(payload, np.ndarray):
        arr = payload.view(np.uint8).ravel()
    else:
        arr = np.frombuffer(memoryview(payload).cast("B"), dtype=np.uint8)
    if arr.size == 0:
        raise ValueError("entropy of an empty payload is undefined")
    return arr


def byte_histogram(payload) -> np.ndarray:
    return np.bincount(_as_array(payload), minlength=256)


def clz64(x: int) -> int:
    """Count leading zeros of a 64-bit unsigned integer (64 for zero)."""
    if not 0 <= x < 1 << 64:
        raise ValueError("clz64 takes a 64-bit unsigned value")
    return 64 - x.bit_length()


def ilog2(n: int) -> int:
    """floor(log2 n) the way hardware does it: 63 - clz(n)."""
    if n <= 0:
        raise ValueError("ilog2 needs a positive integer")
    return 63 - clz64(n)


def _ilog2_vec(counts: np.ndarray) -> np.ndarray:
    # frexp gives n = m * 2**e with m in [0.5, 1), so e - 1 == 63 - clz64(n);
    # exact for every count below 2**53.
    return np.frexp(counts.astype(np.float64))[1].astype(np.int64) - 1


def entropy_exact(payload) -> float:
    counts = byte_histogram(payload)
    n = counts.sum()
    p = counts[counts > 0] / n
    h = float(-(p * np.log2(p)).sum() / 8.0)
    return min(1.0, max(0.0, h))


def entropy_from_counts_clz(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.int64)
    n = int(counts.sum())
    total = int((counts * (ilog2(n) - _ilog2_vec(counts))).sum())
    return min(1.0, max(0.0, total / (8.0 * n)))


def entropy_clz(payload) -> float:
    """Integer-log entropy estimate, as a storage-side entropy probe would compute it.

    sum_i n_i * (ilog2(N) - ilog2(n_i)) / (8N). Matches entropy_exact exactly when N
    and every n_i are powers of two; otherwise the floor errors keep it within 1/8.
    """
    return entropy_from_counts_clz(byte_histogram(payload))
