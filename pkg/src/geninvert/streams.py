"""Deterministic RNG streams keyed by (seed, trial index, purpose).

Every random draw in the toolkit comes from a stream derived here, so results
depend only on the seeds handed in, never on execution order, scheduling, or
which other experiments ran in the same process.
"""

import numpy as np

_U64 = (1 << 64) - 1

# purpose tags; appended to stream keys so draws for different uses never alias
LATENT = 0    # ground-truth latent draws
INIT = 1      # optimizer starting points
NOISE = 2     # additive image noise
CLIP = 3      # stochastic-clip replacement draws
BASELINE = 4  # random-pair distance baseline
UNSEEN = 5    # latents fed to the off-generator target builder


def mask64(seed: int) -> int:
    """Fold a signed 64-bit seed onto the unsigned range SeedSequence accepts."""
    return seed & _U64


def substream(*key: int) -> np.random.Generator:
    """Independent PCG64 generator for the given key tuple."""
    ss = np.random.SeedSequence([mask64(k) for k in key])
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(*key: int) -> int:
    """Collapse a key tuple to a single unsigned 64-bit seed."""
    ss = np.random.SeedSequence([mask64(k) for k in key])
    return int(ss.generate_state(1, np.uint64)[0])
