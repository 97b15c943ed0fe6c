"""Reference computations that do not share code with the package."""

import numpy as np
from scipy.optimize import minimize


def prox_objective(m, a, tau):
    return float(np.sum((m - a) ** 2) + tau * np.linalg.svd(a, compute_uv=False).sum())


def burer_monteiro_prox(m, tau, seed=0, restarts=3):
    """Minimize ``||m - A||_F^2 + tau ||A||_*`` over ``A = U V^T``.

    Uses ``||A||_* = min (||U||_F^2 + ||V||_F^2) / 2`` with full-width
    factors, so the smooth problem has no spurious local minima; L-BFGS is
    run from a few random starts and the best objective is kept.
    """
    m = np.asarray(m, dtype=float)
    d1, d2 = m.shape
    r = min(d1, d2)
    rng = np.random.default_rng(seed)

    def fun(z):
        u, v = z[:d1 * r].reshape(d1, r), z[d1 * r:].reshape(d2, r)
        res = u @ v.T - m
        f = np.sum(res ** 2) + 0.5 * tau * (np.sum(u ** 2) + np.sum(v ** 2))
        gu = 2 * res @ v + tau * u
        gv = 2 * res.T @ u + tau * v
        return f, np.concatenate([gu.ravel(), gv.ravel()])

    best = None
    for _ in range(restarts):
        z0 = rng.normal(scale=0.5, size=(d1 + d2) * r)
        out = minimize(fun, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 20000, "ftol": 1e-16, "gtol": 1e-12,
                                "maxcor": 30})
        if best is None or out.fun < best.fun:
            best = out
    u, v = best.x[:d1 * r].reshape(d1, r), best.x[d1 * r:].reshape(d2, r)
    return u @ v.T


def brute_levels(mass, T):
    """Level of each mass by direct interval membership over all t."""
    out = []
    for w in mass:
        lvl = T + 1
        for t in range(T + 1):
            if 2.0 ** (-(t + 1)) < w <= 2.0 ** (-t):
                lvl = t
                break
        out.append(lvl)
    return np.array(out)


def overlay_integral(f, fa, fb):
    """``∫_{fb > fa} f`` by midpoint evaluation on the three-way overlay grid."""
    xs = np.unique(np.concatenate([f.x_edges, fa.x_edges, fb.x_edges]))
    ys = np.unique(np.concatenate([f.y_edges, fa.y_edges, fb.y_edges]))
    mx, my = np.meshgrid(0.5 * (xs[1:] + xs[:-1]), 0.5 * (ys[1:] + ys[:-1]), indexing="ij")
    area = np.outer(np.diff(xs), np.diff(ys))
    inside = fb(mx, my) > fa(mx, my)
    return float(np.sum(f(mx, my) * area * inside))


def cell_average_density(truth_fn, k):
    """Piecewise-constant density on a k x k grid from midpoint values, normalized."""
    from lowrank_tv.density import PiecewiseDensity2D

    e = np.linspace(0, 1, k + 1)
    m = 0.5 * (e[1:] + e[:-1])
    v = truth_fn(m[:, None], m[None, :])
    v = v / (v.sum() / k ** 2)
    return PiecewiseDensity2D(e, e, v, "grid")
