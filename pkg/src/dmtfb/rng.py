"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed and a
tuple of non-negative integers. Monte-Carlo work is cut into fixed-size chunks
and each chunk draws from its own key, so totals do not depend on how chunks
are grouped into batches or spread across workers.
"""

from __future__ import annotations

import numpy as np

CHUNK = 1 << 16

# stream namespaces
CALIBRATION = 1
ESTIMATION = 2
AUDIT = 3

_OFFSET = 1 << 31


def snr_key(snr_db: float) -> int:
    """Integer stream key for an SNR point (milli-dB, shifted non-negative)."""
    return int(round(snr_db * 1000)) + _OFFSET


class Streams:
    """Factory of independent generators derived from one 64-bit seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 1 << 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = seed

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(ss))

    def chunks(self, trials: int, *key: int):
        """Yield ``(chunk_index, size, generator)`` covering ``trials`` draws."""
        full, rest = divmod(int(trials), CHUNK)
        for c in range(full + (rest > 0)):
            size = CHUNK if c < full else rest
            yield c, size, self.generator(*key, c)

    def __repr__(self):
        return f"Streams(seed={self.seed})"
