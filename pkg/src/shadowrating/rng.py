"""Seeded random streams.

Every stochastic step draws from its own PCG64 stream derived from the run
seed plus a fixed purpose key, so adding randomness in one place never
shifts the draws seen by another.
"""

from __future__ import annotations

import numpy as np

SYNTH = 1
FOLDS = 2
INIT = 3
SHUFFLE = 4
DROPOUT = 5
BACKGROUND = 6
SHAP = 7
INNER_SPLIT = 8

_MASK64 = (1 << 64) - 1


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    entropy = [int(seed) & _MASK64, int(purpose), *(int(e) & _MASK64 for e in extra)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def fold_seed(seed: int, fold: int) -> int:
    return (int(seed) ^ int(fold)) & _MASK64
