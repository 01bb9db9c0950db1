"""Deterministic random substreams.

Every random draw in the package comes from a generator keyed by a tuple of
integers (master seed, sample index, field role, retry counter, ...), so
datasets are reproducible sample-by-sample and independent of generation
order or thread count.
"""

from __future__ import annotations

import numpy as np

# Stable role ids; appending is fine, renumbering would change datasets.
ROLES = {
    "alpha": 0,
    "beta": 1,
    "gamma": 2,
    "b": 3,
    "f": 4,
    "p1": 5,
    "grf": 6,
    "scale": 7,
    "jump": 8,
    "shared_f": 9,
    "coeffs": 10,
    "speed": 11,
    "perturb": 12,
    "certificate": 13,
    "net_init": 14,
    "points": 15,
}


def substream(*key: int) -> np.random.Generator:
    """Generator for the substream keyed by a tuple of non-negative ints."""
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def field_stream(master_seed: int, sample_index: int, role: str, retry: int = 0) -> np.random.Generator:
    """Substream for one coefficient field of one dataset sample."""
    return substream(master_seed, sample_index, ROLES[role], retry)


def counter_points(seed: int, m: int, naxes: int) -> np.ndarray:
    """m uniform points in [0,1)^naxes from a counter-based stream.

    Philox is counter-based, so the full batch is generated in one call and
    the result does not depend on how work is split across threads.
    """
    gen = np.random.Generator(np.random.Philox(key=seed))
    return gen.random((m, naxes))
