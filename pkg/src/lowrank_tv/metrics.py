"""Error metrics and log-log slope fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lowrank_tv.density import PiecewiseDensity2D
from lowrank_tv.linalg import entrywise_l1_distance

MIN_QUAD_CELLS = 256


def matrix_l1_error(estimate, truth) -> float:
    """Entrywise l1 distance; the total variation distance is half of it."""
    return entrywise_l1_distance(estimate, truth)


def _breakpoints(f):
    bp = getattr(f, "breakpoints", None)
    if bp is None:
        return np.empty(0), np.empty(0)
    if isinstance(f, PiecewiseDensity2D):
        return f.x_edges, f.y_edges
    return bp()


def _overlay_axis(q: int, *edge_sets) -> np.ndarray:
    parts = [np.linspace(0.0, 1.0, q + 1)]
    parts += [np.clip(np.asarray(e, dtype=float), 0.0, 1.0) for e in edge_sets]
    return np.unique(np.concatenate(parts))


def _l1_on(est, truth, xs, ys) -> float:
    mx, my = 0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:])
    X, Y = np.meshgrid(mx, my, indexing="ij")
    diff = np.abs(est(X, Y) - truth(X, Y))
    return float(np.sum(diff * np.outer(np.diff(xs), np.diff(ys))))


def density_l1_error(est, truth, quad_cells_per_axis: int = 1024) -> tuple:
    """L1 distance on [0,1]^2 by midpoint quadrature on an overlay grid.

    The grid merges a uniform ``q x q`` refinement with the breakpoints of
    both functions, so piecewise-constant pairs are integrated exactly.
    Returns ``(error, bound)`` where ``bound`` is the change in the estimate
    when the uniform refinement is halved to ``q/2``.
    """
    q = int(quad_cells_per_axis)
    if q < MIN_QUAD_CELLS:
        raise ValueError(f"need at least {MIN_QUAD_CELLS} cells per axis, got {q}")
    ex, ey = _breakpoints(est)
    tx, ty = _breakpoints(truth)
    fine = _l1_on(est, truth, _overlay_axis(q, ex, tx), _overlay_axis(q, ey, ty))
    coarse = _l1_on(est, truth, _overlay_axis(q // 2, ex, tx), _overlay_axis(q // 2, ey, ty))
    return fine, abs(fine - coarse)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    x: tuple
    y: tuple

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def loglog_slope(points) -> SlopeFit:
    """Least-squares line through ``(ln x, ln y)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least 3 (x, y) points")
    if np.any(pts <= 0):
        raise ValueError("log-log fit needs positive x and y")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0),
                    tuple(pts[:, 0]), tuple(pts[:, 1]))
