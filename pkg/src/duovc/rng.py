"""Deterministic random number generation.

The generator is a counter-based SplitMix64: draw ``i`` of a stream seeded
with ``s`` is ``mix64(s + (i + 1) * GAMMA)``, so any block of draws can be
produced with vectorized integer arithmetic and the stream is identical
across platforms and runs.  Gaussians come from the Box-Muller transform
evaluated in float64 and cast to float32.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U53 = float(1 << 53)


def _mix64(v: np.ndarray) -> np.ndarray:
    v = (v ^ (v >> np.uint64(30))) * _M1
    v = (v ^ (v >> np.uint64(27))) * _M2
    return v ^ (v >> np.uint64(31))


class Rng:
    """Reproducible random stream identified by a 64-bit seed."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    @property
    def seed(self) -> int:
        return int(self._seed)

    def next_u64(self, n: int) -> np.ndarray:
        """The next ``n`` raw 64-bit draws."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._seed + idx * _GAMMA)

    def fork(self) -> "Rng":
        """An independent child stream (consumes one draw)."""
        return Rng(int(self.next_u64(1)[0]))

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """I.i.d. float32 uniforms in [low, high)."""
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) / _U53
        out = (low + (high - low) * u).astype(np.float32)
        return out.reshape(shape)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """I.i.d. float32 Gaussians via Box-Muller."""
        if std < 0:
            raise ValueError(f"std must be >= 0, got {std}")
        n = int(np.prod(shape)) if shape else 1
        if n == 0:
            return np.zeros(shape, dtype=np.float32)
        m = (n + 1) // 2
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((self.next_u64(m) >> np.uint64(11)).astype(np.float64) + 1.0) / _U53
        u2 = (self.next_u64(m) >> np.uint64(11)).astype(np.float64) / _U53
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])[:n]
        out = (mean + std * z).astype(np.float32)
        return out.reshape(shape)

    def integers(self, low: int, high: int, n: int = 1) -> np.ndarray:
        """``n`` integers uniform in [low, high)."""
        if high <= low:
            raise ValueError(f"empty range [{low}, {high})")
        span = np.uint64(high - low)
        return (low + (self.next_u64(n) % span).astype(np.int64)).astype(np.int64)

    def choice_without(self, n: int, exclude: int, k: int) -> np.ndarray:
        """``k`` distinct indices uniform over {0..n-1} minus ``exclude``.

        Partial Fisher-Yates over the candidate list; needs k <= n - 1.
        """
        if k > n - 1:
            raise ValueError(f"cannot draw {k} distinct indices from {n - 1} candidates")
        pool = np.concatenate([np.arange(exclude, dtype=np.int64),
                               np.arange(exclude + 1, n, dtype=np.int64)])
        m = len(pool)
        draws = self.next_u64(k)
        out = np.empty(k, dtype=np.int64)
        for i in range(k):
            j = i + int(draws[i] % np.uint64(m - i))
            pool[i], pool[j] = pool[j], pool[i]
            out[i] = pool[i]
        return out

    def shuffled(self, n: int) -> np.ndarray:
        """A permutation of range(n) (Fisher-Yates)."""
        perm = np.arange(n, dtype=np.int64)
        if n <= 1:
            return perm
        draws = self.next_u64(n - 1)
        for i in range(n - 1):
            j = i + int(draws[i] % np.uint64(n - i))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
