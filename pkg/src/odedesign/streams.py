"""Deterministic random substreams.

All randomness in the package flows through Philox generators derived from a
master seed plus an integer address.  Distinct addresses give statistically
independent streams, and a stream's draws depend only on (seed, address),
never on the order in which other streams are consumed.  That makes parallel
or reordered evaluation reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *ids: int) -> np.random.Generator:
    """Generator for the substream addressed by ``ids`` under ``seed``."""
    seq = np.random.SeedSequence(entropy=(int(seed), *map(int, ids)))
    return np.random.Generator(np.random.Philox(seq))
