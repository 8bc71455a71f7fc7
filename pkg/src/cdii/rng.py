"""Deterministic random numbers: counter-based SplitMix64 with Box-Muller normals.

Every stochastic stage of the toolkit (noise injection, parameter
initialization, Monte Carlo sampling) draws from this generator so that runs
are bit-reproducible across platforms and numpy versions.  The generator is
the SplitMix64 output function applied to a running 64-bit counter; normals
come from the Box-Muller transform applied to pairs of uniforms.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(counters: np.ndarray) -> np.ndarray:
    """SplitMix64 output function on an array of uint64 counters."""
    z = counters * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """Seeded stream of uniforms and standard normals.

    The n-th raw word of the stream with seed s is splitmix64(s + n + 1),
    so the stream is a pure function of (seed, position).
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._pos = 0

    def _words(self, n: int) -> np.ndarray:
        counters = self._seed + np.arange(self._pos + 1, self._pos + n + 1, dtype=np.uint64)
        self._pos += n
        return _splitmix64(counters)

    def uniform(self, n: int) -> np.ndarray:
        """n i.i.d. uniforms in [0, 1)."""
        return (self._words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_open(self, n: int) -> np.ndarray:
        """n i.i.d. uniforms in the open interval (0, 1)."""
        return ((self._words(n) >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52

    def normal(self, n: int) -> np.ndarray:
        """n i.i.d. standard normals via Box-Muller."""
        m = (n + 1) // 2
        u1 = self.uniform_open(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]
