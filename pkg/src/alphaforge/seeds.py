"""Seed derivation: every random stream is a pure function of (seed, keys)."""
import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """63-bit child seed for the stream identified by ``keys``."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]).generate_state(2, np.uint64)
    return int(state[0] >> np.uint64(1))
