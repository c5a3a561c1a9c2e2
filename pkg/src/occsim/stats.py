"""Interval estimates and seed derivation."""

from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.stats import binomtest


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("need at least one trial")
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def mean_and_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def cell_id(*parts) -> int:
    """Stable 64-bit id of a parameter cell (independent of process and platform)."""
    key = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def trial_rng(master_seed: int, cell: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial of one cell."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, cell, trial]))
