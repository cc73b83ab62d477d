"""Counter-based random numbers.

Every draw is a pure function of a key tuple (seed, stream, i, j, ...), so
results never depend on evaluation order or thread scheduling.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0


def _mix(x):
    # splitmix64 finalizer, elementwise on uint64 arrays
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def hash_u64(*keys) -> np.ndarray:
    """Hash broadcastable integer keys into uniformly distributed uint64."""
    arrays = np.broadcast_arrays(*[np.asarray(k) for k in keys])
    shape = arrays[0].shape
    h = np.zeros(shape, dtype=np.uint64).reshape(-1)
    for k in arrays:
        k = np.asarray(k).astype(np.int64).reshape(-1).view(np.uint64)
        h = _mix(h + _GOLDEN + _mix(k + _GOLDEN))
    return h.reshape(shape)


def uniform(*keys) -> np.ndarray:
    """Uniform doubles in [0, 1) keyed by ``keys``."""
    return (hash_u64(*keys) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def normal(*keys) -> np.ndarray:
    """Standard normal draws (Box-Muller on two derived uniform streams)."""
    u1 = uniform(*keys, 0x6E31)
    u2 = uniform(*keys, 0x6E32)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


class CounterStream:
    """Sequential view of a keyed counter stream.

    Mimics the two ``numpy.random.Generator`` methods the samplers use, so
    either can be passed where a random stream is expected.
    """

    def __init__(self, seed: int, *key: int):
        self.key = (int(seed),) + tuple(int(k) for k in key)
        self.position = 0

    def _counters(self, size):
        n = int(np.prod(size)) if size is not None else 1
        idx = np.arange(self.position, self.position + n, dtype=np.int64)
        self.position += n
        return idx, size

    def random(self, size=None):
        idx, size = self._counters(size)
        out = uniform(*self.key, idx, 1)
        return out.reshape(size) if size is not None else float(out[0])

    def standard_normal(self, size=None):
        idx, size = self._counters(size)
        out = normal(*self.key, idx, 2)
        return out.reshape(size) if size is not None else float(out[0])
