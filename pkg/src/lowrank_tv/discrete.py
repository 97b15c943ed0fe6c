"""Localized SVD estimator for low-rank probability matrices.

Rows and columns are grouped by the dyadic order of their empirical marginal
mass (computed on the first half of the sample); each block of the second-half
histogram is denoised by singular-value soft-thresholding, the blocks are
reassembled, clipped at zero and renormalized onto the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lowrank_tv.linalg import soft_threshold_singular_values
from lowrank_tv.models import as_rng

SMALL_SAMPLE_CONSTANT = 14.0
THRESHOLD_CONSTANT = 12.0


@dataclass(frozen=True)
class FrequencyMatrix:
    """Empirical frequencies ``counts / n`` with ``n = counts.sum()``."""
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise ValueError("counts must be a 2-D array")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.round(c)):
                raise ValueError("counts must be integers")
            c = np.round(c).astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        if c.sum() < 1:
            raise ValueError("a frequency matrix needs at least one observation")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def shape(self) -> tuple:
        return self.counts.shape

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.n

    @classmethod
    def from_values(cls, values, n: int, tol: float = 1e-9) -> "FrequencyMatrix":
        """Rebuild from frequencies that must be integer multiples of ``1/n``."""
        v = np.asarray(values, dtype=float)
        scaled = v * n
        counts = np.round(scaled)
        if np.max(np.abs(scaled - counts), initial=0.0) > tol:
            raise ValueError(f"frequencies are not multiples of 1/{n}")
        fm = cls(counts.astype(np.int64))
        if fm.n != n:
            raise ValueError(f"frequencies sum to {fm.n}/{n}, not 1")
        return fm


def split_and_histogram(counts=None, *, samples=None, shape=None, seed=None):
    """Split ``2n`` observations into two disjoint halves and histogram each.

    Pass either ``samples`` (flat cell indices or ``(i, j)`` pairs, split into
    first and second half in order) with ``shape``, or ``counts`` (a count
    matrix of 2n draws, split by a uniformly random partition of the
    observations, which needs ``seed``).
    """
    if (counts is None) == (samples is None):
        raise ValueError("pass exactly one of counts or samples")
    if samples is not None:
        if shape is None:
            raise ValueError("shape is required with raw samples")
        s = np.asarray(samples)
        if s.ndim == 2:
            s = np.ravel_multi_index((s[:, 0], s[:, 1]), shape)
        total = len(s)
        if total % 2:
            raise ValueError(f"total observation count {total} is odd")
        size = int(np.prod(shape))
        half = total // 2
        h1 = np.bincount(s[:half], minlength=size).reshape(shape)
        h2 = np.bincount(s[half:], minlength=size).reshape(shape)
        return FrequencyMatrix(h1), FrequencyMatrix(h2)
    c = np.asarray(counts, dtype=np.int64)
    total = int(c.sum())
    if total % 2:
        raise ValueError(f"total observation count {total} is odd")
    rng = as_rng(seed)
    first = rng.multivariate_hypergeometric(c.ravel(), total // 2).reshape(c.shape)
    return FrequencyMatrix(first), FrequencyMatrix(c - first)


def drop_to_even(counts) -> np.ndarray:
    """Remove one observation from the last nonempty cell when the total is odd."""
    c = np.array(counts, dtype=np.int64)
    if c.sum() % 2:
        flat = c.reshape(-1)
        last = np.flatnonzero(flat)[-1]
        flat[last] -= 1
    return c


@dataclass(frozen=True)
class DyadicBlocks:
    """Row/column levels ``t`` in ``0..T+1`` from dyadic marginal mass."""
    T: int
    row_level: np.ndarray
    col_level: np.ndarray

    @property
    def levels(self) -> range:
        return range(self.T + 2)

    @property
    def row_sets(self) -> list:
        return [np.flatnonzero(self.row_level == t) for t in self.levels]

    @property
    def col_sets(self) -> list:
        return [np.flatnonzero(self.col_level == t) for t in self.levels]

    def blocks(self):
        """Yield ``(t, t', I, J)`` for every nonempty block ``I_t x J_t'``."""
        rows, cols = self.row_sets, self.col_sets
        for t in self.levels:
            if len(rows[t]) == 0:
                continue
            for tp in self.levels:
                if len(cols[tp]):
                    yield t, tp, rows[t], cols[tp]


def dyadic_T(d: int) -> int:
    if int(d) != d or d < 2:
        raise ValueError(f"d must be an integer >= 2, got {d}")
    return int(d).bit_length() - 2  # floor(log2 d) - 1


def _levels_from_counts(c: np.ndarray, n: int, T: int) -> np.ndarray:
    # mass c/n in (2^-(t+1), 2^-t]  <=>  c * 2^(t+1) > n, first such t; exact in integers
    level = np.full(c.shape, T + 1, dtype=np.int64)
    for t in range(T, -1, -1):
        level[c * (1 << (t + 1)) > n] = t
    return level


def _levels_from_mass(m: np.ndarray, T: int) -> np.ndarray:
    level = np.full(m.shape, T + 1, dtype=np.int64)
    for t in range(T, -1, -1):
        level[m > 2.0 ** (-(t + 1))] = t
    return level


def build_dyadic_blocks(h1: FrequencyMatrix, d: int) -> DyadicBlocks:
    T = dyadic_T(d)
    c = h1.counts
    return DyadicBlocks(T, _levels_from_counts(c.sum(axis=1), h1.n, T),
                        _levels_from_counts(c.sum(axis=0), h1.n, T))


def oracle_blocks(p, d: int) -> DyadicBlocks:
    """Blocks from the exact marginals of ``p`` (debug / ablation only)."""
    T = dyadic_T(d)
    p = np.asarray(p, dtype=float)
    return DyadicBlocks(T, _levels_from_mass(p.sum(axis=1), T),
                        _levels_from_mass(p.sum(axis=0), T))


@dataclass(frozen=True)
class Alg1Params:
    """Inputs of the localized SVD estimator.

    ``N`` is the base of the log factor in the thresholds; ``n`` defaults to
    the per-half sample size of the histograms. ``threshold_scale`` multiplies
    every block threshold (1.0 reproduces the stated constant).
    """
    alpha: float
    d: int
    N: float
    n: int | None = None
    threshold_scale: float = 1.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")
        if not self.N > 1:
            raise ValueError(f"N must exceed 1, got {self.N}")
        if self.n is not None and self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not self.threshold_scale > 0:
            raise ValueError("threshold_scale must be positive")

    def small_sample(self, n: int) -> bool:
        return n < SMALL_SAMPLE_CONSTANT * self.alpha * self.d * math.log(self.N)

    def tau(self, t: int, tp: int, n: int) -> float:
        return self.threshold_scale * THRESHOLD_CONSTANT * math.sqrt(
            self.alpha * math.log(self.N) / n * 2.0 ** (-min(t, tp)))


@dataclass
class Alg1Result:
    estimate: np.ndarray
    branch: str  # "small-sample", "svd", "zero-fallback"
    raw: np.ndarray | None = None
    blocks: DyadicBlocks | None = None
    taus: dict = field(default_factory=dict)


def histogram_estimate(h1: FrequencyMatrix, h2: FrequencyMatrix) -> np.ndarray:
    if h1.shape != h2.shape:
        raise ValueError(f"shape mismatch: {h1.shape} vs {h2.shape}")
    return 0.5 * (h1.values + h2.values)


def localized_svd_fit(params: Alg1Params, h1: FrequencyMatrix, h2: FrequencyMatrix,
                      blocks: DyadicBlocks | None = None) -> Alg1Result:
    """Run the estimator and keep the intermediate quantities.

    ``blocks`` overrides the data-driven partition (e.g. with
    :func:`oracle_blocks`).
    """
    if h1.shape != h2.shape:
        raise ValueError(f"shape mismatch: {h1.shape} vs {h2.shape}")
    n = params.n if params.n is not None else h1.n
    if h1.n != h2.n or h1.n != n:
        raise ValueError(f"histograms must share the sample size n={n} "
                         f"(got {h1.n} and {h2.n})")
    fallback = histogram_estimate(h1, h2)
    if params.small_sample(n):
        return Alg1Result(fallback, "small-sample")

    if blocks is None:
        blocks = build_dyadic_blocks(h1, params.d)
    m = h2.values
    raw = np.zeros(m.shape)
    taus = {}
    for t, tp, rows, cols in blocks.blocks():
        tau = params.tau(t, tp, n)
        taus[(t, tp)] = tau
        sub = m[np.ix_(rows, cols)]
        if not np.any(sub):
            continue
        raw[np.ix_(rows, cols)] = soft_threshold_singular_values(sub, tau)

    pos = np.maximum(raw, 0.0)
    total = pos.sum()
    if total <= 0:
        return Alg1Result(fallback, "zero-fallback", raw, blocks, taus)
    return Alg1Result(pos / total, "svd", raw, blocks, taus)


def localized_svd_estimate(params: Alg1Params, h1: FrequencyMatrix,
                           h2: FrequencyMatrix, blocks: DyadicBlocks | None = None
                           ) -> np.ndarray:
    return localized_svd_fit(params, h1, h2, blocks).estimate
