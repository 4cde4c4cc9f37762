"""Moment vectors, their Hankel matrices, and the open cone of PD Hankels.

A moment vector is a 1-D float array ``(m_1, ..., m_2n)``; ``m_0`` is not
stored and is supplied as ``leading`` when a Hankel matrix is built.
"""

from __future__ import annotations

import numpy as np

PD_TOLERANCE = 1e-10


def as_moments(m) -> np.ndarray:
    """Validate and copy a moment vector (even length, finite entries)."""
    arr = np.array(m, dtype=float).reshape(-1)
    if arr.size < 2 or arr.size % 2:
        raise ValueError(f"moment vector must have even positive length, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("moment vector has non-finite entries")
    return arr


def to_hankel(m, leading: float = 1.0) -> np.ndarray:
    """(n+1)x(n+1) matrix with entry (i, j) = m_{i+j} and m_0 = `leading`."""
    m = as_moments(m)
    full = np.concatenate(([leading], m))
    n = m.size // 2
    idx = np.add.outer(np.arange(n + 1), np.arange(n + 1))
    return full[idx]


def from_hankel(H) -> np.ndarray:
    """Inverse of :func:`to_hankel`: read (m_1, ..., m_2n) off the first row and last column."""
    H = np.asarray(H, dtype=float)
    return np.concatenate((H[0, 1:], H[1:, -1]))


def ldl_pivots(H) -> np.ndarray:
    """Diagonal of D in H = L D L^T (unit lower L, no pivoting).

    Pivot ``k`` equals det(H_k) / det(H_{k-1}) for the leading principal
    submatrices, so all pivots are positive exactly when all leading minors are.
    Factorization stops at the first non-positive pivot; later entries are nan.
    """
    A = np.array(H, dtype=float)
    size = A.shape[0]
    d = np.full(size, np.nan)
    L = np.eye(size)
    for k in range(size):
        d[k] = A[k, k] - np.dot(L[k, :k] ** 2, d[:k])
        if not d[k] > 0:
            break
        for i in range(k + 1, size):
            L[i, k] = (A[i, k] - np.dot(L[i, :k] * L[k, :k], d[:k])) / d[k]
    return d


def smallest_pivot(H) -> float:
    # The first non-positive pivot, if any, is the last finite entry.
    return float(np.nanmin(ldl_pivots(H)))


def is_positive_definite(H, tolerance: float = PD_TOLERANCE) -> bool:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    d = ldl_pivots(H)
    return bool(np.all(d > tolerance))


def in_cone(m, tolerance: float = PD_TOLERANCE) -> bool:
    """Membership of `m` in the set of vectors whose Hankel (m_0 = 1) is PD."""
    return is_positive_definite(to_hankel(m, 1.0), tolerance)


def cone_margin(m) -> float:
    """Smallest LDL pivot of the Hankel of `m` with m_0 = 1."""
    return smallest_pivot(to_hankel(m, 1.0))


def add_scaled(m1, m2, alpha: float = 1.0) -> np.ndarray:
    m1, m2 = as_moments(m1), as_moments(m2)
    if m1.size != m2.size:
        raise ValueError(f"order mismatch: {m1.size} vs {m2.size}")
    return m1 + alpha * m2


def subtract(m1, m2) -> np.ndarray:
    """Elementwise m1 - m2. PD tests on the result still use m_0 = 1."""
    return add_scaled(m1, m2, -1.0)
