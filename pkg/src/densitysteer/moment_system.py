"""Moment-space dynamics of x(k+1) = a(k) x(k) + u(k) with u(k) independent of x(k)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hankel import as_moments


@lru_cache(maxsize=None)
def pascal(size: int) -> tuple[tuple[int, ...], ...]:
    """Rows 0..size of Pascal's triangle as exact integers."""
    rows = [(1,)]
    for _ in range(size):
        prev = rows[-1]
        rows.append((1,) + tuple(prev[i] + prev[i + 1] for i in range(len(prev) - 1)) + (1,))
    return tuple(rows)


def _check_coefficient(a: float):
    if not 0.0 < a < 1.0:
        raise ValueError(f"system coefficient must lie in (0, 1), got {a}")


@dataclass(frozen=True)
class ScalarSystem:
    coefficients: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(a) for a in self.coefficients))
        if not self.coefficients:
            raise ValueError("horizon must be at least 1")
        for a in self.coefficients:
            _check_coefficient(a)

    @property
    def horizon(self) -> int:
        return len(self.coefficients)

    def damping(self, k: int) -> float:
        """Product a(0) * ... * a(k-1)."""
        if not 0 <= k <= self.horizon:
            raise ValueError(f"step {k} outside 0..{self.horizon}")
        return float(np.prod(self.coefficients[:k]))


def build_A(u, a: float) -> np.ndarray:
    """Lower-triangular transition matrix; row l-1 holds C(l, j) a^j E[u^(l-j)]."""
    u = as_moments(u)
    _check_coefficient(a)
    order = u.size
    U = np.concatenate(([1.0], u))
    C = pascal(order)
    A = np.zeros((order, order))
    for l in range(1, order + 1):
        for j in range(1, l + 1):
            A[l - 1, j - 1] = C[l][j] * a**j * U[l - j]
    return A


def propagate(x, u, a: float) -> np.ndarray:
    """Moments of a*x + u for independent x and u."""
    x, u = as_moments(x), as_moments(u)
    if x.size != u.size:
        raise ValueError(f"order mismatch: {x.size} vs {u.size}")
    _check_coefficient(a)
    X = np.concatenate(([1.0], x))
    U = np.concatenate(([1.0], u))
    C = pascal(x.size)
    return np.array([
        sum(C[l][j] * a**j * X[j] * U[l - j] for j in range(l + 1))
        for l in range(1, x.size + 1)
    ])


def invert_for_control(x, x_next, a: float) -> np.ndarray:
    """Control moments that carry `x` to `x_next` in one step.

    The system is unit lower triangular in the control moments, so they are
    obtained order by order by forward substitution.
    """
    x, x_next = as_moments(x), as_moments(x_next)
    if x.size != x_next.size:
        raise ValueError(f"order mismatch: {x.size} vs {x_next.size}")
    _check_coefficient(a)
    X = np.concatenate(([1.0], x))
    C = pascal(x.size)
    U = np.zeros(x.size + 1)
    U[0] = 1.0
    for l in range(1, x.size + 1):
        U[l] = x_next[l - 1] - sum(C[l][j] * a**j * X[j] * U[l - j] for j in range(1, l + 1))
    return U[1:]


def uncontrolled_state(x0, system: ScalarSystem, k: int) -> np.ndarray:
    """State moments after `k` steps with u = 0: entry l is abar^l E[x0^l]."""
    x0 = as_moments(x0)
    abar = system.damping(k)
    return abar ** np.arange(1, x0.size + 1) * x0
