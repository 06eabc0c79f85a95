"""Counter-based random number streams for replicated Monte Carlo.

Streams are keyed by (master_seed, stream_id, purpose), so parallel
replications can draw independently and any run is reproducible from the
master seed alone.  The underlying bit generator is Philox (counter based),
which also backs the compiled kernels through the BitGenerator capsule.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _purpose_code(purpose) -> int:
    if isinstance(purpose, int):
        return purpose & _MASK64
    # stable across processes, unlike hash()
    return zlib.crc32(str(purpose).encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """One logical stream of randomness, owned by exactly one worker."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self, purpose=0) -> np.random.Generator:
        """Fresh Generator for (master_seed, stream_id, purpose)."""
        ss = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.stream_id, _purpose_code(purpose)),
        )
        return np.random.Generator(np.random.Philox(seed=ss))

    def substream(self, k: int) -> "RngStream":
        """Child stream; distinct k give independent streams."""
        return RngStream(self.master_seed, (self.stream_id * 1_000_003 + 1 + k) & _MASK64)


def replication_generator(master_seed: int, replication_id: int, purpose=0) -> np.random.Generator:
    """Generator for one replication of one experiment stage."""
    return RngStream(master_seed, replication_id).generator(purpose)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, Generator, or seed int; return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng)).generator()
