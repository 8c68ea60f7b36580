"""Deterministic random stream derivation.

Every stochastic choice in the pipeline draws from a generator keyed on
(seed, stream...) so that runs are reproducible and independent components
never share a stream. Philox is counter-based, so generators for distinct
stream keys are statistically independent.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream ids, fixed forever; renumbering breaks stored-run reproducibility
STREAM_TRANSFORM = 1
STREAM_NOISE = 2
STREAM_INIT = 3
STREAM_PROPOSE = 4
STREAM_BATCH = 5
STREAM_REFRESH = 6
STREAM_EVAL = 7
STREAM_PROJECTION = 8
STREAM_PROTOTYPE = 9
STREAM_SYNTH = 10


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for a (seed, stream...) key. Same key, same draws."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=tuple(int(s) & _MASK64 for s in stream),
    )
    return np.random.Generator(np.random.Philox(ss))


def substream_seed(seed: int, *stream: int) -> int:
    """Collapse a (seed, stream...) key into a single 64-bit seed."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=tuple(int(s) & _MASK64 for s in stream),
    )
    return int(ss.generate_state(1, np.uint64)[0])
