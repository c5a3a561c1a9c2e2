"""Banded random binary matrices and their full-rank statistics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels as K
from .gf2 import BitMatrix, index_mask, n_words
from .stats import wilson_interval

BLOCK_TRIALS = 1000
_TRUNCATION = 1e-15


class Regularity(str, Enum):
    REGULAR = "regular"
    IRREGULAR = "irregular"


class Symmetry(str, Enum):
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"


@dataclass(frozen=True)
class BandedSpec:
    n_rows: int
    k: int
    alpha: int
    gamma: int = 0
    regularity: Regularity = Regularity.IRREGULAR
    symmetry: Symmetry = Symmetry.SYMMETRIC

    def __post_init__(self):
        object.__setattr__(self, "regularity", Regularity(self.regularity))
        object.__setattr__(self, "symmetry", Symmetry(self.symmetry))
        if self.n_rows < 1 or self.k < 1:
            raise ValueError("n_rows and k must be positive")
        if not 0 <= self.gamma < self.alpha <= self.k:
            raise ValueError(f"need 0 <= gamma < alpha <= k, got gamma={self.gamma} alpha={self.alpha} k={self.k}")
        step = self.alpha - self.gamma
        span = self.k if self.symmetry is Symmetry.SYMMETRIC else self.k - self.gamma
        if span % step:
            raise ValueError(f"alpha - gamma = {step} must divide {span}")
        if self.regularity is Regularity.REGULAR and self.n_rows % self.chi:
            raise ValueError(f"regular banded matrix needs chi = {self.chi} to divide n_rows = {self.n_rows}")

    @property
    def chi(self) -> int:
        step = self.alpha - self.gamma
        if self.symmetry is Symmetry.SYMMETRIC:
            return self.k // step
        return (self.k - self.gamma) // step


def apertures(spec: BandedSpec) -> list[tuple[int, ...]]:
    """Aperture index sets (0-based); symmetric ones wrap end-around."""
    step = spec.alpha - spec.gamma
    return [
        tuple((i * step + t) % spec.k for t in range(spec.alpha))
        for i in range(spec.chi)
    ]


def aperture_masks(spec: BandedSpec) -> np.ndarray:
    return np.stack([index_mask(a, spec.k) for a in apertures(spec)])


def sample_banded(spec: BandedSpec, rng: np.random.Generator) -> BitMatrix:
    words = np.empty((spec.n_rows, n_words(spec.k)), dtype=np.uint64)
    assign = np.empty(spec.n_rows, dtype=np.int64)
    K.sample_banded_inplace(rng, words, aperture_masks(spec), spec.regularity is Regularity.REGULAR, assign)
    return BitMatrix(words, spec.k)


def sample_banded_with_assignment(spec: BandedSpec, rng: np.random.Generator) -> tuple[BitMatrix, np.ndarray]:
    """Like :func:`sample_banded` but also returns each row's aperture index."""
    words = np.empty((spec.n_rows, n_words(spec.k)), dtype=np.uint64)
    assign = np.empty(spec.n_rows, dtype=np.int64)
    K.sample_banded_inplace(rng, words, aperture_masks(spec), spec.regularity is Regularity.REGULAR, assign)
    return BitMatrix(words, spec.k), assign


def exact_full_rank_prob(n: int, k: int) -> float:
    """Probability that an n x k i.u.d. binary matrix has rank k."""
    if k > n:
        raise ValueError(f"k = {k} exceeds n = {n}")
    return math.prod(1.0 - 2.0 ** -i for i in range(n - k + 1, n + 1))


def _tail_product(start: int) -> float:
    p = 1.0
    i = start
    while True:
        f = 2.0 ** -i
        if f < _TRUNCATION:
            return p
        p *= 1.0 - f
        i += 1


def cooper_rank_pmf(n: int, d: int, gamma: int) -> float:
    """Asymptotic (n -> infinity) probability that an n x d i.u.d. matrix has rank d - gamma.

    Only the limiting law; for small matrices compare against exact
    enumeration, e.g. 3x3 rank 2 is 294/512 exactly versus 0.5776 here.
    """
    if d > n:
        raise ValueError(f"d = {d} exceeds n = {n}")
    if not 1 <= gamma <= d - 1:
        raise ValueError(f"gamma must lie in 1..{d - 1}")
    num = _tail_product(n - d + gamma + 1)
    den = math.prod(1.0 - 2.0 ** -i for i in range(1, gamma + 1))
    return num / den * 2.0 ** (-gamma * (n - d + gamma))


def conjecture2_threshold(k: int, tau: int | None = None, symmetry: Symmetry | str = Symmetry.SYMMETRIC) -> int:
    """Smallest overlap at which banded matrices are expected to act fully random."""
    if k < 1:
        raise ValueError("k must be positive")
    symmetry = Symmetry(symmetry)
    if symmetry is Symmetry.SYMMETRIC:
        return math.ceil(2 * math.sqrt(k))
    if tau is None or tau < 2:
        raise ValueError("asymmetric threshold needs an overlap parameter tau >= 2")
    tau_e = tau / (tau - 1)
    return math.ceil(tau_e * tau * math.sqrt(k))


def _block_seed(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _count_block(args) -> int:
    spec, seed, block, trials = args
    rng = _block_seed(seed, block)
    return int(
        K.banded_full_rank_count(
            rng, spec.n_rows, spec.k, aperture_masks(spec), spec.regularity is Regularity.REGULAR, trials
        )
    )


@dataclass(frozen=True)
class RankFrequency:
    full_rank: int
    trials: int
    freq: float
    ci: tuple[float, float]


def full_rank_frequency(
    spec: BandedSpec, trials: int, seed: int = 0, workers: int = 1, confidence: float = 0.95
) -> RankFrequency:
    """Fraction of sampled matrices with full column rank, with a Wilson interval.

    Trials are split into fixed blocks seeded from ``(seed, block)``, so the
    count does not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if spec.n_rows < spec.k:
        hits = 0
    else:
        jobs = []
        for b, start in enumerate(range(0, trials, BLOCK_TRIALS)):
            jobs.append((spec, seed, b, min(BLOCK_TRIALS, trials - start)))
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                hits = sum(pool.map(_count_block, jobs))
        else:
            hits = sum(map(_count_block, jobs))
    return RankFrequency(hits, trials, hits / trials, wilson_interval(hits, trials, confidence))
