"""Counter-based random substreams for reproducible, order-independent simulation.

Every random draw in the simulator comes from a Philox stream addressed by
(master seed, experiment, point, round, purpose).  Streams with different
addresses are statistically independent and reproducible regardless of
execution order or thread count, so a sweep produces byte-identical output
for a given master seed no matter how it is scheduled.
"""

from __future__ import annotations

import numpy as np

# purpose lanes for the shared per-round draws (consumed by every scheme at a
# sweep point) and for scheme-private randomness
COMMON = 0
DECISION = 1
CALIBRATION = 2
CHIPS = 3

_WORD = np.uint64(0xFFFFFFFFFFFFFFFF)


def substream(
    master_seed: int,
    *,
    experiment: int = 0,
    point: int = 0,
    round_index: int = 0,
    purpose: int = COMMON,
) -> np.random.Generator:
    """Return the Generator for one (experiment, point, round, purpose) lane.

    The address goes into the Philox key and the high counter words; counter
    word 0 is left zero so stream advancement can never run into a
    neighbouring lane.
    """
    key = np.array(
        [np.uint64(master_seed) & _WORD, np.uint64(experiment) & _WORD],
        dtype=np.uint64,
    )
    counter = np.array(
        [0, np.uint64(purpose) & _WORD, np.uint64(round_index) & _WORD, np.uint64(point) & _WORD],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
