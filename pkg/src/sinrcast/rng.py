"""Counter-based random streams.

Every draw is a pure function of ``(master seed, purpose, round, station)``, so
a station's coin flip in a given round does not depend on how many other
stations exist, the order they are processed in, or how many rounds are drawn
at once.  The mixing function is the SplitMix64 finalizer applied twice.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_STATION_BITS = np.uint64(24)
_MAX_STATIONS = 1 << 24
_TO_UNIT = 1.0 / (1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def derive_key(master: int, purpose: str, *extra: int) -> int:
    """64-bit stream key for a (master seed, purpose, ...) tuple."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master).to_bytes(16, "little", signed=True))
    h.update(purpose.encode())
    for x in extra:
        h.update(int(x).to_bytes(16, "little", signed=True))
    return int.from_bytes(h.digest(), "little")


class CounterStream:
    """Uniform [0, 1) variates addressed by (round, station)."""

    def __init__(self, master: int, purpose: str = "tx", *extra: int):
        self.key = np.uint64(derive_key(master, purpose, *extra))
        self._key2 = _mix(np.array([self.key ^ _GOLDEN], dtype=np.uint64))[0]

    def bits(self, rounds, stations) -> np.ndarray:
        r = np.asarray(rounds, dtype=np.uint64)
        s = np.asarray(stations, dtype=np.uint64)
        with np.errstate(over="ignore"):
            counter = (r << _STATION_BITS) | s
            return _mix(_mix(counter * _GOLDEN + self.key) ^ self._key2)

    def uniform(self, rounds, stations) -> np.ndarray:
        return (self.bits(rounds, stations) >> np.uint64(11)) * _TO_UNIT

    def window(self, start: int, length: int, n: int) -> np.ndarray:
        """(length, n) block of uniforms for rounds start..start+length-1."""
        if n > _MAX_STATIONS:
            raise ValueError("too many stations for the counter layout")
        rounds = np.arange(start, start + length, dtype=np.uint64)[:, None]
        return self.uniform(rounds, np.arange(n, dtype=np.uint64)[None, :])

    def integers(self, rounds, stations, high: int) -> np.ndarray:
        """Uniform integers in [0, high) as floor(u * high) of a 53-bit uniform."""
        u = self.uniform(rounds, stations)
        return np.minimum((u * high).astype(np.int64), high - 1)
