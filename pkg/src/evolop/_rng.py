import numpy as np


def make_rng(seed):
    """Return the library generator: numpy's PCG64 seeded with a 64-bit integer.

    PCG64 has fixed multiplier/increment constants and a platform independent
    output stream, so seeded draws are reproducible across machines.
    """
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))
