"""Seeded random instances: multinomial and Poissonized histograms, mixture
densities, rejection sampling and the hypercube (Assouad) adversarial families."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from lowrank_tv.linalg import as_matrix

SIMPLEX_TOL = 1e-10


class DegenerateEnvelopeError(RuntimeError):
    """Rejection sampler accepted too few proposals."""


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_prob_matrix(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``p`` as an array after checking nonnegativity and unit mass."""
    a = as_matrix(p)
    if np.any(a < 0):
        raise ValueError("probability matrix has negative entries")
    total = a.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"probability matrix sums to {total!r}, not 1")
    return a


def is_prob_matrix(p, tol: float = SIMPLEX_TOL) -> bool:
    try:
        check_prob_matrix(p, tol)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------- sampling

def sample_multinomial(p, n: int, seed) -> np.ndarray:
    """Counts ``Y ~ M(p, n)`` with the shape of ``p``."""
    a = check_prob_matrix(p)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    rng = as_rng(seed)
    flat = a.ravel() / a.sum()
    return rng.multinomial(int(n), flat).reshape(a.shape).astype(np.int64)


def sample_poissonized(p, lam: float, seed) -> np.ndarray:
    """Independent cells ``Y_ij ~ Poi(lam * p_ij)``; the total is random."""
    a = check_prob_matrix(p)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    rng = as_rng(seed)
    return rng.poisson(lam * a).astype(np.int64)


def sample_cells(p, n: int, seed) -> np.ndarray:
    """``n`` iid flat cell indices drawn from ``p`` (raw observations)."""
    a = check_prob_matrix(p)
    rng = as_rng(seed)
    flat = a.ravel() / a.sum()
    return rng.choice(flat.size, size=int(n), p=flat)


def sample_from_density(f: Callable, bound: float, n: int, seed,
                        batch: int | None = None,
                        max_proposals: int = 10_000_000,
                        min_rate: float = 1e-4) -> np.ndarray:
    """Draw ``n`` points from density ``f`` on [0,1]^2 by rejection against
    the uniform envelope ``bound``.

    ``f`` must be vectorized: ``f(x, y) -> array``. Returns an (n, 2) array.
    """
    if not bound > 0:
        raise ValueError(f"envelope bound must be positive, got {bound}")
    rng = as_rng(seed)
    n = int(n)
    if batch is None:
        batch = max(4096, int(1.25 * n * bound) + 16)
    out = np.empty((n, 2))
    filled = 0
    proposals = 0
    while filled < n:
        xy = rng.random((batch, 2))
        u = rng.random(batch)
        fx = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
        if np.any(fx > bound * (1 + 1e-12)):
            raise ValueError("density exceeds the supplied envelope bound")
        acc = xy[u * bound < fx]
        proposals += batch
        take = min(n - filled, len(acc))
        out[filled:filled + take] = acc[:take]
        filled += take
        if proposals >= max_proposals and filled / proposals < min_rate:
            raise DegenerateEnvelopeError(
                f"acceptance rate {filled / proposals:.2e} below {min_rate:g} "
                f"after {proposals} proposals")
    return out


# ---------------------------------------------------------------- mixtures

@dataclass(frozen=True)
class PiecewiseConstant1D:
    edges: tuple
    values: tuple

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e = np.asarray(self.edges)
        v = np.asarray(self.values)
        idx = np.searchsorted(e, x, side="right") - 1
        idx = np.where(x == e[-1], len(v) - 1, idx)
        inside = (idx >= 0) & (idx < len(v))
        return np.where(inside, v[np.clip(idx, 0, len(v) - 1)], 0.0)

    def integral(self) -> float:
        return float(np.dot(np.diff(self.edges), self.values))

    def breakpoints(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=float)


@dataclass(frozen=True)
class PiecewiseLinear1D:
    """Continuous piecewise-linear function through ``(knots, values)``,
    zero outside ``[knots[0], knots[-1]]``."""
    knots: tuple
    values: tuple

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.asarray(self.knots)
        y = np.interp(x, k, self.values)
        return np.where((x >= k[0]) & (x <= k[-1]), y, 0.0)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.knots))

    def breakpoints(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)


@dataclass(frozen=True)
class HolderMixture:
    """``f(x, y) = sum_k w_k u_k(x) v_k(y)`` on [0,1]^2."""
    weights: tuple
    us: tuple
    vs: tuple
    label: str = "mixture"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for w, u, v in zip(self.weights, self.us, self.vs):
            out = out + w * u(x) * v(y)
        return out

    @property
    def rank(self) -> int:
        return len(self.weights)

    def integral(self) -> float:
        return float(sum(w * u.integral() * v.integral()
                         for w, u, v in zip(self.weights, self.us, self.vs)))

    def breakpoints(self):
        xs = np.unique(np.concatenate([u.breakpoints() for u in self.us]))
        ys = np.unique(np.concatenate([v.breakpoints() for v in self.vs]))
        return xs, ys

    def upper_bound(self, probe: int = 512) -> float:
        # piecewise-linear/constant components: sup attained at breakpoints or probes
        xs, ys = self.breakpoints()
        gx = np.unique(np.concatenate([xs, np.linspace(0, 1, probe)]))
        gy = np.unique(np.concatenate([ys, np.linspace(0, 1, probe)]))
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        return float(self(X, Y).max())

    def validate(self, probe: int = 512, tol: float = 1e-6) -> None:
        g = (np.arange(probe) + 0.5) / probe
        X, Y = np.meshgrid(g, g, indexing="ij")
        if np.any(self(X, Y) < 0):
            raise ValueError("mixture density is negative on the probe grid")
        if abs(self.integral() - 1.0) > tol:
            raise ValueError(f"mixture integrates to {self.integral()!r}")


def linear_density_1d(slope: float) -> PiecewiseLinear1D:
    """Density ``1 + slope * (x - 1/2)`` on [0,1]; requires |slope| <= 2."""
    if abs(slope) > 2:
        raise ValueError("slope must be in [-2, 2] for a nonnegative density")
    return PiecewiseLinear1D((0.0, 1.0), (1 - slope / 2, 1 + slope / 2))


def separable_lipschitz_truth() -> HolderMixture:
    """Rank-one Lipschitz density ``(1/2 + x)(3/2 - y)`` on [0,1]^2."""
    return HolderMixture((1.0,), (linear_density_1d(1.0),),
                         (linear_density_1d(-1.0),), label="separable-linear")


def uniform_density() -> HolderMixture:
    one = PiecewiseConstant1D((0.0, 1.0), (1.0,))
    return HolderMixture((1.0,), (one,), (one,), label="uniform")


def box_density(x0: float, x1: float, y0: float, y1: float) -> HolderMixture:
    """Uniform density on the rectangle ``[x0,x1] x [y0,y1]``."""
    u = PiecewiseConstant1D((x0, x1), (1.0 / (x1 - x0),))
    v = PiecewiseConstant1D((y0, y1), (1.0 / (y1 - y0),))
    return HolderMixture((1.0,), (u,), (v,), label="box")


# ---------------------------------------------------------------- discrete instances

def low_rank_dirichlet_matrix(d: int, K: int, concentration: float = 1.0, seed=None,
                              d2: int | None = None) -> np.ndarray:
    """``sum_k w_k u_k v_k^T`` with Dirichlet factors and weights (rank <= K)."""
    d2 = d if d2 is None else d2
    if K < 1 or K > min(d, d2):
        raise ValueError(f"need 1 <= K <= min(d1, d2), got K={K}")
    rng = as_rng(seed)
    w = rng.dirichlet(np.full(K, concentration)) if K > 1 else np.ones(1)
    u = rng.dirichlet(np.full(d, concentration), size=K)
    v = rng.dirichlet(np.full(d2, concentration), size=K)
    p = np.einsum("k,ki,kj->ij", w, u, v)
    return p / p.sum()


@dataclass(frozen=True)
class AssouadMatrixSpec:
    d1: int
    d2: int
    K: int
    n: int
    eps: tuple = field(default=())  # K x D2 signs, row-major; empty -> all +1

    @property
    def D2(self) -> int:
        return self.d2 // 2

    @property
    def D(self) -> int:
        return 2 * self.K * self.D2

    @property
    def gamma(self) -> float:
        return min(1.0 / (4.0 * math.sqrt(self.n * self.D)), 1.0 / (2.0 * self.D))

    def sign_matrix(self) -> np.ndarray:
        if len(self.eps) == 0:
            return np.ones((self.K, self.D2))
        e = np.asarray(self.eps, dtype=float).reshape(self.K, self.D2)
        if not np.all(np.abs(e) == 1):
            raise ValueError("sign pattern entries must be +1 or -1")
        return e

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def random(cls, d1, d2, K, n, seed) -> "AssouadMatrixSpec":
        rng = as_rng(seed)
        eps = rng.choice([-1, 1], size=K * (d2 // 2))
        return cls(d1, d2, K, n, tuple(int(e) for e in eps))


def assouad_matrix(spec: AssouadMatrixSpec) -> np.ndarray:
    """Perturbed block matrix ``1/D +- eps_ij * gamma`` on the first K rows."""
    if spec.d2 < 2:
        raise ValueError("need d2 >= 2")
    if spec.K < 1 or spec.K > spec.d1:
        raise ValueError(f"need 1 <= K <= d1, got K={spec.K}, d1={spec.d1}")
    eps = spec.sign_matrix()
    D2, D, g = spec.D2, spec.D, spec.gamma
    p = np.zeros((spec.d1, spec.d2))
    p[:spec.K, :D2] = 1.0 / D + eps * g
    p[:spec.K, D2:2 * D2] = 1.0 / D - eps * g
    return p


# ---------------------------------------------------------------- bump and density prior

def _raw_bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 0.5
    out[m] = np.exp(1.0 - 1.0 / (1.0 - 4.0 * t[m] ** 2))
    return out


def holder_constant(fn: Callable, beta: float, lo: float = -0.5, hi: float = 0.5,
                    probe: int = 2001) -> float:
    """Largest ``|fn(s)-fn(t)| / |s-t|^beta`` over a probe grid."""
    t = np.linspace(lo, hi, probe)
    v = fn(t)
    num = np.abs(v[:, None] - v[None, :])
    den = np.abs(t[:, None] - t[None, :]) ** beta
    np.fill_diagonal(den, 1.0)
    return float((num / den).max())


@lru_cache(maxsize=64)
def bump_scale(beta: float) -> float:
    """Factor making the bump's beta-Holder constant at most 1/2."""
    h = holder_constant(_raw_bump, beta, probe=4001)
    return min(1.0, 0.5 / (h * 1.01))


def bump(t, beta: float = 1.0):
    """Smooth bump supported on (-1/2, 1/2) with values in [0, 1]."""
    return bump_scale(float(beta)) * _raw_bump(t)


@lru_cache(maxsize=64)
def bump_integral(beta: float) -> float:
    val, _ = integrate.quad(_raw_bump, -0.5, 0.5, epsabs=1e-12, epsrel=1e-12)
    return bump_scale(float(beta)) * val


@dataclass(frozen=True)
class AssouadDensitySpec:
    K: int
    n: int
    beta: float = 1.0
    L: float = 1.0
    omega: tuple = field(default=())  # K' x H bits, row-major; empty -> all zero

    @property
    def k_prime(self) -> int:
        return max(1, min(int(math.floor(self.n ** (1.0 / (2 * self.beta + 2)))), self.K))

    @property
    def H(self) -> int:
        return int(math.ceil((self.n / self.k_prime) ** (1.0 / (2 * self.beta + 1))))

    @property
    def h_x(self) -> float:
        return 1.0 / self.k_prime

    @property
    def h_y(self) -> float:
        return 1.0 / self.H

    @property
    def c_star(self) -> float:
        return min(0.25, 1.0 / (2.0 * self.L))

    def bit_matrix(self) -> np.ndarray:
        if len(self.omega) == 0:
            return np.zeros((self.k_prime, self.H))
        w = np.asarray(self.omega, dtype=float).reshape(self.k_prime, self.H)
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("omega entries must be 0 or 1")
        return w

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def random(cls, K, n, beta, L, seed) -> "AssouadDensitySpec":
        base = cls(K, n, beta, L)
        rng = as_rng(seed)
        bits = rng.integers(0, 2, size=base.k_prime * base.H)
        return cls(K, n, beta, L, tuple(int(b) for b in bits))


class AssouadDensity:
    """Evaluator for ``f_omega(x,y) = sum_i U_i(x) (1 + sum_j omega_ij c L h_y^beta V_j(y))``."""

    def __init__(self, spec: AssouadDensitySpec):
        self.spec = spec
        self.omega = spec.bit_matrix()
        self.kp = spec.k_prime
        self.H = spec.H
        self.amp = spec.c_star * spec.L * spec.h_y ** spec.beta
        self.label = "assouad"

    def _v(self, y, j):
        hy = self.spec.h_y
        y_minus = (j + 1 - 0.75) * hy
        y_plus = (j + 1 - 0.25) * hy
        b = self.spec.beta
        return bump((y - y_minus) / (hy / 2), b) - bump((y - y_plus) / (hy / 2), b)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        i = np.clip(np.floor(x * self.kp).astype(int), 0, self.kp - 1)
        j = np.clip(np.floor(y * self.H).astype(int), 0, self.H - 1)
        inside = (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1)
        val = 1.0 + self.omega[i, j] * self.amp * self._v(y, j)
        return np.where(inside, val, 0.0)

    def upper_bound(self) -> float:
        return 1.0 + self.amp * bump_scale(float(self.spec.beta))

    def integral(self) -> float:
        return 1.0

    def breakpoints(self):
        return (np.linspace(0, 1, self.kp + 1), np.linspace(0, 1, 2 * self.H + 1))


def assouad_density(spec: AssouadDensitySpec) -> AssouadDensity:
    if not 0 < spec.beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if spec.K < 1:
        raise ValueError("K must be positive")
    return AssouadDensity(spec)


def spec_from_dict(kind: str, data: dict):
    """Rebuild an instance spec serialized with ``to_dict``."""
    cls = {"assouad_matrix": AssouadMatrixSpec, "assouad_density": AssouadDensitySpec}[kind]
    data = dict(data)
    for key in ("eps", "omega"):
        if key in data:
            data[key] = tuple(data[key])
    return cls(**data)
