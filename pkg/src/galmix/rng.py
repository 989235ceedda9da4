"""Reproducible, splittable random-number streams.

Streams are indexed by (root_seed, stream_index) through numpy's
SeedSequence spawn keys on top of the counter-based Philox generator, so
distinct indices give statistically independent sequences and the same
index always reproduces the same draws, independent of how many other
streams were consumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Handle for one independent Gaussian stream."""

    root_seed: int
    stream: int = 0
    path: tuple[int, ...] = field(default=())

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.root_seed, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *indices: int) -> "RngStream":
        """Derived stream, independent of this one and of other children."""
        return RngStream(self.root_seed, self.stream, self.path + tuple(indices))
