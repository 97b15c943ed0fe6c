"""Histogram-based density estimators on [0,1] and [0,1]^2.

The two-dimensional estimator bins the sample on a grid of bandwidth ``h*``
anchored at the estimated support, then hands the two quarter-sample
histograms to the localized SVD estimator (or averages them when the rank
is too large to help). Thin supports fall back to a one-dimensional
histogram along the wide axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lowrank_tv.discrete import Alg1Params, FrequencyMatrix, localized_svd_fit


@dataclass(frozen=True)
class DensityParams:
    """Tuning inputs of the two-dimensional estimator.

    Parameters
    ----------
    alpha : float
        Confidence exponent of the localized SVD step (> 1).
    K : int
        Presumed number of separable components.
    beta : float
        Hölder smoothness in (0, 1].
    L : float
        Hölder constant; only generators and metrics use it.
    guard_log_exponent : float
        Power of ``log n`` in the rate-selection guard (1.5 by default).
    N : float, optional
        Base of the log factor in the SVD thresholds; ``None`` means the
        sample size.
    threshold_scale : float
        Multiplier on every SVD threshold.
    """
    alpha: float = 1.01
    K: int = 1
    beta: float = 1.0
    L: float = 1.0
    guard_log_exponent: float = 1.5
    N: float | None = None
    threshold_scale: float = 1.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.guard_log_exponent >= 0:
            raise ValueError("guard_log_exponent must be nonnegative")
        if self.N is not None and not self.N > 1:
            raise ValueError(f"N must exceed 1, got {self.N}")
        if not self.threshold_scale > 0:
            raise ValueError("threshold_scale must be positive")


# ---------------------------------------------------------------- rate selection

def rank_guard_holds(K: int, beta: float, n: float, log_exponent: float = 1.5) -> bool:
    """``(K/n)^{b/(2b+1)} log^e(n) <= n^{-b/(2b+2)}``, evaluated in log space."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    lhs = beta / (2 * beta + 1) * (math.log(K) - math.log(n))
    lhs += log_exponent * math.log(math.log(n))
    rhs = -beta / (2 * beta + 2) * math.log(n)
    return lhs <= rhs


def _ceil_root(n: float, p: float) -> int:
    r = n ** p
    k = round(r)
    # 1e4 ** 0.25 is 10.000000000000002 in floating point
    if abs(r - k) <= 1e-9 * max(r, 1.0):
        return max(int(k), 1)
    return max(math.ceil(r), 1)


def choose_k_prime(K: int, beta: float, n: float, log_exponent: float = 1.5) -> int:
    """Effective rank: ``K`` if the guard holds, else ``ceil(n^{1/(2 beta + 2)})``."""
    if rank_guard_holds(K, beta, n, log_exponent):
        return int(K)
    return _ceil_root(n, 1.0 / (2 * beta + 2))


def bandwidth(k_prime: int, n: int, beta: float) -> float:
    return (k_prime / n) ** (1.0 / (2 * beta + 1))


# ---------------------------------------------------------------- one dimension

@dataclass(frozen=True)
class PiecewiseDensity1D:
    """Piecewise-constant density on ``[edges[0], edges[-1]]``, last bin closed.

    ``branch`` is ``"binned"``, ``"uniform"`` (support narrower than the
    bandwidth) or ``"point"`` (zero-width support replaced by a clipped
    window of width ``h*``).
    """
    edges: np.ndarray
    values: np.ndarray
    branch: str
    support: tuple
    h_star: float

    @property
    def h(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def n_bins(self) -> int:
        return len(self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx = np.where(x == self.edges[-1], self.n_bins - 1, idx)
        inside = (idx >= 0) & (idx < self.n_bins)
        return np.where(inside, self.values[np.clip(idx, 0, self.n_bins - 1)], 0.0)

    def integral(self) -> float:
        return float(np.dot(np.diff(self.edges), self.values))

    def cdf(self, x):
        """Mass of ``(-inf, x]``."""
        x = np.asarray(x, dtype=float)
        return _interval_weights(self.edges, x) @ self.values


def estimate_support_1d(z) -> tuple:
    """Min and max of the first ``floor(n/2)`` points (all of them if n = 1)."""
    z = np.asarray(z, dtype=float).ravel()
    if len(z) == 0:
        raise ValueError("cannot estimate the support of an empty sample")
    head = z[:max(len(z) // 2, 1)]
    return float(head.min()), float(head.max())


def _point_window(center: float, h: float, lo: float = 0.0, hi: float = 1.0) -> tuple:
    a, b = max(center - h / 2, lo), min(center + h / 2, hi)
    if b <= a:  # h so small it underflows; keep a tiny positive window
        a, b = center - h / 2, center + h / 2
    return a, b


def alg3_density_1d(z, k_prime: int, beta: float = 1.0) -> PiecewiseDensity1D:
    """Sample-split histogram on the estimated support.

    The support comes from the first half of ``z``; the counts come from the
    second half. Second-half points outside the support go to the nearest
    boundary bin so the output integrates to one.
    """
    z = np.asarray(z, dtype=float).ravel()
    n = len(z)
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    if k_prime < 1:
        raise ValueError(f"k_prime must be >= 1, got {k_prime}")
    half = n // 2
    r, R = estimate_support_1d(z)
    h_star = bandwidth(k_prime, n, beta)
    if R - r < h_star:
        if R > r:
            return PiecewiseDensity1D(np.array([r, R]), np.array([1.0 / (R - r)]),
                                      "uniform", (r, R), h_star)
        a, b = _point_window(r, h_star)
        return PiecewiseDensity1D(np.array([a, b]), np.array([1.0 / (b - a)]),
                                  "point", (r, R), h_star)
    ell = int(math.floor((R - r) / h_star))
    h = (R - r) / ell
    idx = np.clip(np.floor((z[half:] - r) / h).astype(np.int64), 0, ell - 1)
    counts = np.bincount(idx, minlength=ell)
    edges = r + h * np.arange(ell + 1)
    edges[-1] = R
    values = counts / ((n - half) * np.diff(edges))
    return PiecewiseDensity1D(edges, values, "binned", (r, R), h_star)


# ---------------------------------------------------------------- two dimensions

def _interval_weights(edges: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Length of ``[edges[i], edges[i+1]] ∩ (-inf, x]`` for every x and i."""
    x = np.asarray(x, dtype=float)[..., None]
    return np.clip(x, edges[:-1], edges[1:]) - edges[:-1]


@dataclass(frozen=True)
class PiecewiseDensity2D:
    """Piecewise-constant function on a tensor grid inside [0,1]^2.

    Cells are ``[x_i, x_{i+1}) x [y_j, y_{j+1})`` with the last row and
    column closed. ``values`` holds the function value per cell and
    ``phi`` the unnormalized values before the final L1 normalization.
    ``trace`` records the branch taken and the grid parameters.
    """
    x_edges: np.ndarray
    y_edges: np.ndarray
    values: np.ndarray
    branch: str
    phi: np.ndarray | None = None
    trace: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.x_edges) - 1, len(self.y_edges) - 1):
            raise ValueError("values shape does not match the grid")
        if np.any(np.diff(self.x_edges) <= 0) or np.any(np.diff(self.y_edges) <= 0):
            raise ValueError("grid edges must be strictly increasing")

    @property
    def cell_areas(self) -> np.ndarray:
        return np.outer(np.diff(self.x_edges), np.diff(self.y_edges))

    def cell_masses(self) -> np.ndarray:
        return self.values * self.cell_areas

    def integral(self) -> float:
        return float(self.cell_masses().sum())

    def _index(self, edges, x):
        m = len(edges) - 1
        idx = np.searchsorted(edges, x, side="right") - 1
        idx = np.where(x == edges[-1], m - 1, idx)
        return idx, (idx >= 0) & (idx < m)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        i, oki = self._index(self.x_edges, x)
        j, okj = self._index(self.y_edges, y)
        nx, ny = self.values.shape
        v = self.values[np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1)]
        return np.where(oki & okj, v, 0.0)

    def cdf(self, x, y):
        """Mass of ``(-inf, x] x (-inf, y]``; exact for piecewise-constant cells."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        ax = _interval_weights(self.x_edges, x)
        ay = _interval_weights(self.y_edges, y)
        return np.einsum("...i,ij,...j->...", ax, self.values, ay)

    def rectangle_mass(self, x0, x1, y0, y1):
        return (self.cdf(x1, y1) - self.cdf(x0, y1)
                - self.cdf(x1, y0) + self.cdf(x0, y0))

    def with_values(self, values, branch=None) -> "PiecewiseDensity2D":
        return PiecewiseDensity2D(self.x_edges, self.y_edges, np.asarray(values, float),
                                  self.branch if branch is None else branch,
                                  self.phi, dict(self.trace))


def uniform_density_2d(trace: dict | None = None) -> PiecewiseDensity2D:
    return PiecewiseDensity2D(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                              np.ones((1, 1)), "uniform", np.zeros((1, 1)),
                              dict(trace or {}))


def density_l1_normalize(phi: PiecewiseDensity2D) -> PiecewiseDensity2D:
    """Rescale to unit integral; the uniform density on [0,1]^2 if ``phi`` is zero."""
    v = np.asarray(phi.values, dtype=float)
    if np.any(v < 0):
        raise ValueError("cannot normalize a function with negative values")
    mass = float((v * phi.cell_areas).sum())
    trace = dict(phi.trace)
    if mass <= 0:
        trace["fallback"] = "uniform"
        out = uniform_density_2d(trace)
        return PiecewiseDensity2D(out.x_edges, out.y_edges, out.values, phi.branch,
                                  None, trace)
    return PiecewiseDensity2D(phi.x_edges, phi.y_edges, v / mass, phi.branch, v, trace)


def truncate_to_multiple_of_4(x) -> tuple:
    """Drop trailing points so the count is a multiple of 4; returns (x, dropped)."""
    x = np.asarray(x)
    keep = len(x) - len(x) % 4
    return x[:keep], len(x) - keep


def _clip_grid(edges: np.ndarray, values: np.ndarray, axis: int):
    """Restrict a full grid to [0,1] along ``axis``, dropping empty cells."""
    lo = np.clip(edges[:-1], 0.0, 1.0)
    hi = np.clip(edges[1:], 0.0, 1.0)
    keep = hi > lo
    new_edges = np.concatenate([lo[keep], hi[keep][-1:]])
    return new_edges, np.compress(keep, values, axis=axis)


def _bin_axis(coord: np.ndarray, r: float, h: float, lo: int, hi: int) -> np.ndarray:
    # floor-based binning; clipping only catches rounding at the outer edges
    return np.clip(np.floor((coord - r) / h).astype(np.int64), lo, hi) - lo


def alg2_density_2d(x, params: DensityParams,
                    rank_reduction: bool | None = None) -> PiecewiseDensity2D:
    """Two-dimensional low-rank histogram estimator.

    Parameters
    ----------
    x : array of shape (n, 2)
        Points in [0,1]^2 with ``n`` a multiple of 4 and at least 8.
    params : DensityParams
    rank_reduction : bool, optional
        Overrides the guard: ``False`` always averages the two histograms with
        ``K' = ceil(n^{1/(2 beta + 2)})`` (the plain histogram at bandwidth
        ``n^{-beta/(2 beta + 2)}``), ``True`` always uses ``K' = K`` and the
        localized SVD. ``None`` lets the guard decide.

    Returns
    -------
    PiecewiseDensity2D
        A density on [0,1]^2. ``branch`` is ``"thin-x"``, ``"thin-y"`` or
        ``"grid"``; ``trace`` records the bandwidth, grid and the estimator
        used on the grid.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) sample, got shape {x.shape}")
    n = len(x)
    if n < 8 or n % 4:
        raise ValueError(f"n must be a multiple of 4 and at least 8, got {n}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("sample points must lie in [0,1]^2")
    first = x[:n // 2]
    r = first.min(axis=0)
    R = first.max(axis=0)
    if rank_reduction is None:
        guard = rank_guard_holds(params.K, params.beta, n, params.guard_log_exponent)
    else:
        guard = bool(rank_reduction)
    k_prime = int(params.K) if guard else _ceil_root(n, 1.0 / (2 * params.beta + 2))
    h_star = bandwidth(k_prime, n, params.beta)
    trace = {"n": n, "K_prime": k_prime, "guard": guard, "h_star": h_star,
             "support": (float(r[0]), float(R[0]), float(r[1]), float(R[1]))}

    for thin in (0, 1):
        if R[thin] - r[thin] < h_star:
            wide = 1 - thin
            g = alg3_density_1d(x[n // 2:, wide], k_prime, params.beta)
            if R[thin] > r[thin]:
                a, b = float(r[thin]), float(R[thin])
            else:
                a, b = _point_window(float(r[thin]), h_star)
            band = np.array([a, b])
            col = g.values / (b - a)
            trace.update(estimator="one-dimensional", inner_branch=g.branch)
            if thin == 0:
                phi = PiecewiseDensity2D(band, g.edges, col[None, :], "thin-x", None, trace)
            else:
                phi = PiecewiseDensity2D(g.edges, band, col[:, None], "thin-y", None, trace)
            return density_l1_normalize(phi)

    ell = np.floor((R - r) / h_star).astype(np.int64)
    h = (R - r) / ell
    e_lo = -np.ceil(r / h).astype(np.int64)
    e_hi = np.ceil((1 - r) / h).astype(np.int64)
    shape = tuple(int(v) for v in (e_hi - e_lo + 1))
    q3, q4 = x[n // 2:3 * n // 4], x[3 * n // 4:]
    counts = []
    for q in (q3, q4):
        i = _bin_axis(q[:, 0], r[0], h[0], e_lo[0], e_hi[0])
        j = _bin_axis(q[:, 1], r[1], h[1], e_lo[1], e_hi[1])
        counts.append(np.bincount(i * shape[1] + j, minlength=shape[0] * shape[1])
                      .reshape(shape))
    G, Gp = FrequencyMatrix(counts[0]), FrequencyMatrix(counts[1])
    trace.update(quarter_counts=(G.n, Gp.n),
                 h=(float(h[0]), float(h[1])), ell=(int(ell[0]), int(ell[1])),
                 E1=(int(e_lo[0]), int(e_hi[0])), E2=(int(e_lo[1]), int(e_hi[1])))
    if not guard:
        p_hat = 0.5 * (G.values + Gp.values)
        trace["estimator"] = "histogram-average"
    else:
        alg1 = Alg1Params(params.alpha, max(shape), params.N if params.N else n,
                          n // 4, params.threshold_scale)
        res = localized_svd_fit(alg1, G, Gp)
        p_hat = res.estimate
        trace.update(estimator="localized-svd", inner_branch=res.branch)

    full_x = r[0] + h[0] * np.arange(e_lo[0], e_hi[0] + 2)
    full_y = r[1] + h[1] * np.arange(e_lo[1], e_hi[1] + 2)
    vals = p_hat / (h[0] * h[1])
    x_edges, vals = _clip_grid(full_x, vals, 0)
    y_edges, vals = _clip_grid(full_y, vals, 1)
    phi = PiecewiseDensity2D(x_edges, y_edges, vals, "grid", None, trace)
    return density_l1_normalize(phi)
