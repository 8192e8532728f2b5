"""Counter-based random streams for bootstrap replicates.

Replicate ``r`` of group ``g`` draws from a stream that is a pure function of
``(seed, r, g)``, so replicates can be evaluated in any order, in any chunking,
on any number of threads, and still produce identical values. Each stream is
a SplitMix64 sequence whose starting state is mixed from the seed key and the
``(r, g)`` counter; the seed key itself comes from numpy's SeedSequence.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_GROUP_STEP = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LOW32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, in place."""
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


class ReplicateStreams:
    """Index source for subject resampling keyed by ``(seed, replicate, group)``."""

    def __init__(self, seed: int):
        self.seed = check_seed(seed)
        k0, k1 = np.random.SeedSequence(self.seed).generate_state(2, dtype=np.uint64)
        self._k0 = np.uint64(k0)
        self._k1 = np.uint64(k1)

    def _states(self, replicates: np.ndarray, group: int) -> np.ndarray:
        r = np.asarray(replicates, dtype=np.uint64)
        g = np.uint64(group)
        with np.errstate(over="ignore"):
            a = _mix(self._k0 + _GOLDEN * (r + np.uint64(1)))
            b = _mix(np.atleast_1d(self._k1 + _GROUP_STEP * (g + np.uint64(1))))
            return _mix(a ^ b)

    def words(self, replicates, group: int, size: int) -> np.ndarray:
        """``(len(replicates), size)`` array of raw 64-bit outputs."""
        states = self._states(np.atleast_1d(replicates), group)[:, None]
        counter = np.arange(1, size + 1, dtype=np.uint64)[None, :]
        with np.errstate(over="ignore"):
            return _mix(states + _GOLDEN * counter)

    def indices(self, replicates, group: int, n: int) -> np.ndarray:
        """Subject draws with replacement: ``(len(replicates), n)`` ints in [0, n).

        Each 64-bit word supplies two draws, one per 32-bit half, mapped to
        [0, n) by multiply-high (bias below n / 2**32).
        """
        if not 1 <= n < 2**32:
            raise ValueError(f"n must lie in [1, 2**32), got {n}")
        half = (n + 1) // 2
        w = self.words(replicates, group, half)
        out = np.empty((w.shape[0], 2 * half), dtype=np.uint64)
        nn = np.uint64(n)
        with np.errstate(over="ignore"):
            np.right_shift(w, _SHIFT32, out=out[:, :half])
            np.bitwise_and(w, _LOW32, out=out[:, half:])
            out *= nn
            out >>= _SHIFT32
        return out[:, :n].astype(np.int64)
