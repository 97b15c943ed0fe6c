"""Adaptive choice of (K, beta) by a Scheffé-set minimum-distance tournament."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from lowrank_tv.density import (
    DensityParams,
    PiecewiseDensity2D,
    _ceil_root,
    alg2_density_2d,
    bandwidth,
    rank_guard_holds,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateGrid:
    """Grid of ``(K, beta_j)`` pairs, ordered by K then j."""
    n: int
    Ks: tuple
    betas: tuple

    def __post_init__(self):
        if not self.Ks or not self.betas:
            raise ValueError("candidate grid is empty")
        if len(set(self.Ks)) != len(self.Ks) or min(self.Ks) < 1:
            raise ValueError("K values must be distinct positive integers")
        b = np.asarray(self.betas)
        if np.any(b <= 0) or np.any(b > 1) or np.any(np.diff(b) >= 0):
            raise ValueError("betas must be strictly decreasing in (0, 1]")

    @staticmethod
    def beta_grid(n: int) -> tuple:
        """``beta_j = (1 + 1/ln n)^{1-j}`` for ``j = 1..ceil(ln n * ln ln n)``."""
        if n < 3:
            raise ValueError(f"need n >= 3 for the beta grid, got {n}")
        ln = math.log(n)
        J = max(math.ceil(ln * math.log(ln)), 1)
        return tuple((1 + 1 / ln) ** (-(j - 1)) for j in range(1, J + 1))

    @staticmethod
    def k_max(n: int) -> int:
        return math.isqrt(n - 1) + 1 if n > 1 else 1  # ceil(sqrt(n))

    @classmethod
    def default(cls, n: int, full_k: bool = False) -> "CandidateGrid":
        """Dyadic K grid ``{1, 2, 4, ...} <= K_max``; every K with ``full_k``."""
        kmax = cls.k_max(n)
        if full_k:
            Ks = tuple(range(1, kmax + 1))
        else:
            Ks = tuple(2 ** i for i in range(kmax.bit_length()) if 2 ** i <= kmax)
        return cls(n, Ks, cls.beta_grid(n))

    @property
    def m(self) -> int:
        return len(self.Ks) * len(self.betas)

    def entries(self):
        """``(K, j, beta)`` in tie-break order (j is 1-based)."""
        return [(K, j + 1, b) for K in self.Ks for j, b in enumerate(self.betas)]


@dataclass
class CandidateSet:
    densities: list
    labels: list  # (K, j, beta) per density
    shared_with: dict = field(default_factory=dict)  # index -> earlier index reused


def _config_key(K: int, beta: float, n: int, log_exponent: float):
    guard = rank_guard_holds(K, beta, n, log_exponent)
    kp = int(K) if guard else _ceil_root(n, 1.0 / (2 * beta + 2))
    return kp, bandwidth(kp, n, beta), guard


def build_candidates(x, grid: CandidateGrid, base: DensityParams | None = None
                     ) -> CandidateSet:
    """Run the two-dimensional estimator once per distinct grid configuration.

    Entries whose effective rank, bandwidth and guard outcome coincide with an
    earlier entry reuse its output; ``shared_with`` records the reuse. A
    candidate whose fit raises is logged and dropped.
    """
    base = base or DensityParams()
    x = np.asarray(x, dtype=float)
    built: dict = {}
    out = CandidateSet([], [])
    for K, j, beta in grid.entries():
        key = _config_key(K, beta, len(x), base.guard_log_exponent)
        if key in built:
            first, dens = built[key]
            out.shared_with[len(out.densities)] = first
        else:
            try:
                dens = alg2_density_2d(x, replace(base, K=K, beta=beta))
            except (ValueError, ArithmeticError) as exc:
                log.warning("candidate K=%d beta=%.6g dropped: %s", K, beta, exc)
                continue
            built[key] = (len(out.densities), dens)
        out.densities.append(dens)
        out.labels.append((K, j, beta))
    return out


# ---------------------------------------------------------------- Scheffé statistics

def overlay_edges(*densities) -> tuple:
    xs = np.unique(np.concatenate([d.x_edges for d in densities]))
    ys = np.unique(np.concatenate([d.y_edges for d in densities]))
    return xs, ys


def _values_on(d: PiecewiseDensity2D, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Cell values of ``d`` on the overlay cells (xs, ys refine d's grid)."""
    mx, my = 0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:])
    return d(mx[:, None], my[None, :])


def scheffe_mask(fa: PiecewiseDensity2D, fb: PiecewiseDensity2D) -> tuple:
    """Overlay grid and the cells where ``fb > fa`` (strict)."""
    xs, ys = overlay_edges(fa, fb)
    return xs, ys, _values_on(fb, xs, ys) > _values_on(fa, xs, ys)


class CumulativeMass:
    """``F(x, y) = ∫_{(-inf,x] x (-inf,y]} f`` for a piecewise-constant ``f``.

    F is bilinear inside each cell, so interpolating the table of F at the
    grid nodes is exact.
    """

    def __init__(self, f: PiecewiseDensity2D):
        self.xe, self.ye = f.x_edges, f.y_edges
        self.table = np.zeros((len(self.xe), len(self.ye)))
        self.table[1:, 1:] = f.cell_masses().cumsum(axis=0).cumsum(axis=1)

    @staticmethod
    def _locate(edges, pts):
        i = np.clip(np.searchsorted(edges, pts, side="right") - 1, 0, len(edges) - 2)
        t = np.clip((pts - edges[i]) / (edges[i + 1] - edges[i]), 0.0, 1.0)
        return i, t

    def grid(self, xs, ys) -> np.ndarray:
        """F on the tensor grid ``xs x ys``."""
        i, t = self._locate(self.xe, xs)
        rows = self.table[i] * (1 - t)[:, None] + self.table[i + 1] * t[:, None]
        j, u = self._locate(self.ye, ys)
        return rows[:, j] * (1 - u) + rows[:, j + 1] * u


def _corner_weights(mask: np.ndarray) -> np.ndarray:
    """Weights ``w`` with ``sum_cells mask * mass(cell) = sum_nodes w * F(node)``."""
    m = np.pad(mask.astype(float), 1)
    return m[:-1, :-1] - m[1:, :-1] - m[:-1, 1:] + m[1:, 1:]


class _ScheffeRegion:
    """Nodes of the boundary of ``{fb > fa}`` with their inclusion-exclusion weights."""

    def __init__(self, fa, fb):
        xs, ys, mask = scheffe_mask(fa, fb)
        self.empty = not mask.any()
        w = _corner_weights(mask)
        r, c = np.flatnonzero(w.any(axis=1)), np.flatnonzero(w.any(axis=0))
        self.xs, self.ys, self.w = xs[r], ys[c], w[np.ix_(r, c)]

    def mass(self, cum: CumulativeMass) -> float:
        if self.empty:
            return 0.0
        return float(np.sum(self.w * cum.grid(self.xs, self.ys)))


def integrate_over_scheffe(f: PiecewiseDensity2D, fa: PiecewiseDensity2D,
                           fb: PiecewiseDensity2D) -> float:
    """Exact ``∫_B f`` over ``B = {fb > fa}``.

    ``B`` is a union of cells of the overlay of fa and fb; its mass under f
    follows from f's cumulative mass at the overlay nodes.
    """
    return _ScheffeRegion(fa, fb).mass(CumulativeMass(f))


def empirical_measure_scheffe(x, fa: PiecewiseDensity2D, fb: PiecewiseDensity2D) -> float:
    """Fraction of sample points with ``fb(X_i) > fa(X_i)``."""
    x = np.asarray(x, dtype=float)
    return float(np.mean(fb(x[:, 0], x[:, 1]) > fa(x[:, 0], x[:, 1])))


@dataclass
class SelectionTrace:
    """Discrepancies ``|∫_{B_ab} f_c - P_n(B_ab)|`` between candidates.

    Identical candidates are scored once: ``unique_of[i]`` maps candidate i
    to its index in ``unique_table`` (shape (u, u, u) indexed [c, a, b]).
    """
    unique_table: np.ndarray
    unique_of: np.ndarray
    scores: np.ndarray
    selected: int
    labels: list | None = None

    @property
    def discrepancy(self) -> np.ndarray:
        """Full (m, m, m) table; pairs of identical candidates give 0."""
        u = self.unique_of
        return self.unique_table[np.ix_(u, u, u)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["candidate_K", "candidate_beta", "max_discrepancy", "selected_flag"])
            for i, s in enumerate(self.scores):
                K, beta = ("", "")
                if self.labels:
                    K, beta = self.labels[i][0], f"{self.labels[i][2]:.12g}"
                w.writerow([K, beta, f"{s:.12g}", int(i == self.selected)])


def _fingerprint(d: PiecewiseDensity2D) -> bytes:
    return b"|".join(np.ascontiguousarray(a, dtype=float).tobytes()
                     for a in (d.x_edges, d.y_edges, d.values))


def discrepancy_table(cands, x) -> np.ndarray:
    """``[c, a, b] -> |∫_{B_ab} f_c - P_n(B_ab)|`` with zeros on ``a == b``."""
    m = len(cands)
    x = np.asarray(x, dtype=float)
    at_points = np.array([c(x[:, 0], x[:, 1]) for c in cands])
    cums = [CumulativeMass(c) for c in cands]
    disc = np.zeros((m, m, m))
    for a in range(m):
        for b in range(m):
            if a == b:
                continue
            region = _ScheffeRegion(cands[a], cands[b])
            emp = float(np.mean(at_points[b] > at_points[a]))
            for c in range(m):
                disc[c, a, b] = abs(region.mass(cums[c]) - emp)
    return disc


def min_distance_select(candidates, x, labels=None) -> tuple:
    """Candidate minimizing the largest Scheffé discrepancy over ordered pairs.

    Ties go to the lowest index. Identical candidates share one row of the
    table, which leaves every score unchanged. Returns ``(density, trace)``.
    """
    if isinstance(candidates, CandidateSet):
        labels = labels or candidates.labels
        candidates = candidates.densities
    m = len(candidates)
    if m == 0:
        raise ValueError("no candidates to select from")
    first: dict = {}
    unique_of = np.empty(m, dtype=np.int64)
    reps = []
    for i, c in enumerate(candidates):
        key = _fingerprint(c)
        if key not in first:
            first[key] = len(reps)
            reps.append(c)
        unique_of[i] = first[key]
    table = discrepancy_table(reps, x)
    scores = table.reshape(len(reps), -1).max(axis=1)[unique_of]
    best = int(np.argmin(scores))
    return candidates[best], SelectionTrace(table, unique_of, scores, best, labels)


def adaptive_density(x, grid: CandidateGrid | None = None,
                     base: DensityParams | None = None) -> tuple:
    """Build the candidate family on ``x`` and select among it."""
    x = np.asarray(x, dtype=float)
    grid = grid or CandidateGrid.default(len(x))
    cands = build_candidates(x, grid, base)
    return min_distance_select(cands, x)


def oracle_slack(m: int, n: int, delta: float) -> float:
    """Deviation term ``2 sqrt(2 ln(2 m^2 / delta) / n)`` of the oracle inequality."""
    return 2.0 * math.sqrt(2.0 * math.log(2.0 * m * m / delta) / n)
