"""Seeded random number generation.

Every stochastic routine in this package draws from a counter-based
Philox4x64-10 bit generator so that a (seed, stream...) pair maps to the
same number sequence on every platform and every run. Substreams are
derived by folding integer tags into the seed material, which keeps e.g.
"dataset jitter for shape 17" independent from "diffusion noise at step 17"
without any hidden global state.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a fresh Philox generator for (seed, *stream).

    The same arguments always produce the same sequence; distinct stream
    tags produce statistically independent sequences.
    """
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(int(s) & 0xFFFFFFFFFFFFFFFF for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
