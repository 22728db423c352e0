"""Counter-based random streams (splitmix64).

Walk generation and training need many independent, cheaply-seedable
streams so that output is identical for any worker count.  Each stream is
keyed by a (seed, a, b) triple; the same constants are compiled into the
native kernels, so the Python and compiled backends consume identical
random sequences.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """Finalizer of splitmix64: a 64-bit bijective scramble."""
    z = (x + GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_state(seed: int, a: int = 0, b: int = 0) -> int:
    """Initial state of the stream keyed by (seed, a, b)."""
    s = mix64(seed & MASK64)
    s = mix64(s ^ mix64(a & MASK64))
    s = mix64(s ^ mix64(b & MASK64))
    return s


class Stream:
    """Sequential splitmix64 stream. Mirrors the native kernels exactly."""

    __slots__ = ("state",)

    def __init__(self, seed: int, a: int = 0, b: int = 0):
        self.state = stream_state(seed, a, b)

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def next_f64(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is ~n/2^64, negligible."""
        return self.next_u64() % n


def splitmix_array(seed: int, n: int, a: int = 0, b: int = 0) -> np.ndarray:
    """First n outputs of Stream(seed, a, b), computed vectorized.

    splitmix64 is counter-based, so output i is a pure function of the
    initial state plus (i+1)*GAMMA.
    """
    s0 = stream_state(seed, a, b)
    with np.errstate(over="ignore"):
        z = np.uint64(s0) + (np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def uniform_array(seed: int, n: int, a: int = 0, b: int = 0) -> np.ndarray:
    """First n uniform [0,1) doubles of Stream(seed, a, b)."""
    return (splitmix_array(seed, n, a, b) >> np.uint64(11)) * (2.0**-53)
