"""Counter-based derivation of independent random streams from one master seed.

Each consumer gets a stream keyed by (family, *indices), so results never
depend on the order in which streams are drawn from.
"""

import numpy as np

GLOBAL_INIT = 0       # initial global classifier weights
CLIENT_ROUND = 1      # (client_id, round) benign sampling and training
GENERATOR_INIT = 2    # adversary's generator weights
PARTITION = 3         # per-class training subsets
ADVERSARY_NOISE = 4   # generator training noise, sequential across rounds
SNAPSHOT = 5          # (round,) reconstruction snapshots
TEST_SUBSET = 6       # validation subsampling
CLIENT_SELECT = 7     # (round,) participant subsets


def child_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for (master_seed, path)."""
    seq = np.random.SeedSequence(entropy=int(master_seed),
                                 spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(seq)
