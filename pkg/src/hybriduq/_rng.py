"""Counter-based random streams keyed by integer tuples.

Every draw is addressed by ``(seed, stream, run, index)`` so sample ``k`` of a
run is the same no matter which worker computes it or in what order.
"""

import numpy as np


def keyed_generator(*key):
    """Return a Philox generator whose key is derived from ``key``."""
    if any(int(k) < 0 for k in key):
        raise ValueError(f"random stream keys must be nonnegative, got {key}")
    ss = np.random.SeedSequence([int(k) for k in key])
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))
