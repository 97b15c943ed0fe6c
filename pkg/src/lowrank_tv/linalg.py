"""Dense linear-algebra primitives: SVD, singular-value shrinkage and matrix norms."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class SvdResult(NamedTuple):
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def as_matrix(m) -> np.ndarray:
    """Validate and return ``m`` as a finite 2-D float array."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def svd(m) -> SvdResult:
    """Thin SVD ``m = U diag(s) V^T`` with nonincreasing ``s``.

    ``right_vectors`` holds V (columns), not V^T. Backed by LAPACK's
    divide-and-conquer bidiagonalization routine.
    """
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u, s, vt.T)


def singular_values(m) -> np.ndarray:
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def soft_threshold_singular_values(m, tau: float) -> np.ndarray:
    """Minimizer of ``||m - A||_F^2 + tau * ||A||_*`` over A.

    The data-fit term has no 1/2 factor, so each singular value is shrunk
    by ``tau / 2``, not ``tau``.
    """
    if not tau >= 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    a = as_matrix(m)
    if tau == 0:
        return a.copy()
    u, s, v = svd(a)
    shrunk = np.maximum(s - tau / 2.0, 0.0)
    keep = shrunk > 0
    if not np.any(keep):
        return np.zeros_like(a)
    return (u[:, keep] * shrunk[keep]) @ v[:, keep].T


def nuclear_norm(m) -> float:
    return float(np.sum(singular_values(m)))


def operator_norm(m) -> float:
    """Largest singular value."""
    return float(singular_values(m)[0])


def bracket_norm(m) -> float:
    """Max of the largest absolute column sum and the largest absolute row sum."""
    a = np.abs(as_matrix(m))
    return float(max(a.sum(axis=0).max(), a.sum(axis=1).max()))


def entrywise_l1_distance(a, b) -> float:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def numerical_rank(m, tol: float = 1e-12) -> int:
    return int(np.sum(singular_values(m) > tol))
