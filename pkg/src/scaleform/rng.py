"""Counter-based random streams keyed by (seed, purpose, index...).

Each call derives an independent Philox key from its arguments, so the
draws for image 7 at iteration 120 do not depend on how many numbers
anything else consumed. Parallel or resumed runs therefore see the same
streams as a sequential uninterrupted run.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "SCALEFORM_SEED"


def stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    text = ":".join([str(int(seed)), purpose, *(str(int(i)) for i in index)])
    digest = hashlib.blake2b(text.encode(), digest_size=16).digest()
    key = np.frombuffer(digest, dtype="<u8").copy()
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, purpose: str, *index: int) -> int:
    return int(stream(seed, purpose, *index).integers(0, 2**63 - 1))


def default_seed(explicit: int | None = None, fallback: int = 0) -> int:
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else fallback
