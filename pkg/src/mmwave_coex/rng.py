"""Reproducible per-trial random substreams.

Every random quantity in a trial is drawn from a generator keyed by
``(seed, trial, purpose)``, so changing one part of the simulation (for
example the mitigation policy) never shifts the draws used elsewhere.
"""

from __future__ import annotations

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("ascii"))


def substream(seed: int, trial: int, purpose: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), purpose_key(purpose)]))
