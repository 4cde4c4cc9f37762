"""Analytic mixture densities (Gaussian and Laplace components).

Moments are available in closed form and, independently, by adaptive
quadrature; the two routes are meant to cross-check each other.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

KINDS = ("gaussian", "laplace")

# Half-widths of the truncated support, in units of the component scale.
GAUSSIAN_HALF_WIDTH = 12.0
LAPLACE_HALF_WIDTH = 40.0


@dataclass(frozen=True)
class DensityComponent:
    kind: str
    location: float
    scale: float
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unsupported component kind {self.kind!r}")
        if not (math.isfinite(self.location) and math.isfinite(self.scale)):
            raise ValueError("component location and scale must be finite")
        if self.scale <= 0:
            raise ValueError(f"component scale must be positive, got {self.scale}")
        if self.weight <= 0:
            raise ValueError(f"component weight must be positive, got {self.weight}")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.location) / self.scale
        if self.kind == "gaussian":
            return np.exp(-0.5 * z * z) / (self.scale * math.sqrt(2.0 * math.pi))
        return np.exp(-np.abs(z)) / (2.0 * self.scale)

    def central_moment(self, j: int) -> float:
        """E[(x - location)^j]."""
        if j % 2:
            return 0.0
        if self.kind == "gaussian":
            # c_j = (j - 1) sigma^2 c_{j-2}, c_0 = 1
            c = 1.0
            for i in range(2, j + 1, 2):
                c *= (i - 1) * self.scale**2
            return c
        return math.factorial(j) * self.scale**j

    def raw_moment(self, l: int) -> float:
        mu = self.location
        return sum(math.comb(l, j) * mu ** (l - j) * self.central_moment(j) for j in range(l + 1))

    def support(self) -> tuple[float, float]:
        half = GAUSSIAN_HALF_WIDTH if self.kind == "gaussian" else LAPLACE_HALF_WIDTH
        reach = abs(self.location) + half * self.scale
        return -reach, reach

    def inverse_cdf(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "gaussian":
            return self.location + self.scale * special.ndtri(p)
        # Laplace quantile, split at the median.
        q = np.where(p < 0.5, np.log(2.0 * p), -np.log(2.0 * (1.0 - p)))
        return self.location + self.scale * q


@dataclass(frozen=True)
class DensitySpec:
    components: tuple[DensityComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("a density needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights sum to {total!r}, expected 1")

    @classmethod
    def from_dict(cls, data: dict) -> "DensitySpec":
        comps = data["components"] if isinstance(data, dict) else data
        return cls(tuple(
            DensityComponent(
                kind=str(c["kind"]).lower(),
                location=float(c.get("location", 0.0)),
                scale=float(c["scale"]),
                weight=float(c.get("weight", 1.0)),
            )
            for c in comps
        ))

    def to_dict(self) -> dict:
        return {"components": [
            {"kind": c.kind, "location": c.location, "scale": c.scale, "weight": c.weight}
            for c in self.components
        ]}

    def support(self) -> tuple[float, float]:
        lo = min(c.support()[0] for c in self.components)
        hi = max(c.support()[1] for c in self.components)
        return lo, hi


def gaussian(location: float = 0.0, scale: float = 1.0) -> DensitySpec:
    return DensitySpec((DensityComponent("gaussian", location, scale, 1.0),))


def laplace(location: float = 0.0, scale: float = 1.0) -> DensitySpec:
    return DensitySpec((DensityComponent("laplace", location, scale, 1.0),))


def mixture(components: Sequence[tuple[str, float, float, float]]) -> DensitySpec:
    """Build a DensitySpec from ``(kind, location, scale, weight)`` tuples."""
    return DensitySpec(tuple(DensityComponent(*c) for c in components))


def evaluate(spec: DensitySpec, x):
    """Mixture density at `x` (scalar or array)."""
    out = sum(c.weight * c.pdf(x) for c in spec.components)
    return float(out) if np.ndim(out) == 0 else out


def _check_order(order: int):
    if order < 2 or order % 2:
        raise ValueError(f"moment order must be even and >= 2, got {order}")


def closed_form_moments(spec: DensitySpec, order: int) -> np.ndarray:
    """Exact power moments (m_1, ..., m_order) of the mixture."""
    _check_order(order)
    return np.array([
        sum(c.weight * c.raw_moment(l) for c in spec.components)
        for l in range(1, order + 1)
    ])


def quadrature_moments(spec: DensitySpec, order: int, tolerance: float = 1e-10) -> np.ndarray:
    """Power moments by adaptive quadrature over the truncated support.

    The support is split at every component location so the Laplace kinks
    fall on interval ends. `tolerance` is absolute for moments of size up to
    one and relative above that. Raises ``RuntimeError`` if the integrator's
    error estimate exceeds it.
    """
    _check_order(order)
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    lo, hi = spec.support()
    cuts = sorted({lo, hi, *(c.location for c in spec.components)})
    pieces = list(zip(cuts[:-1], cuts[1:]))
    out = np.empty(order)
    for l in range(1, order + 1):
        total, err_total = 0.0, 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for a, b in pieces:
                val, err = integrate.quad(
                    lambda x: x**l * evaluate(spec, x), a, b,
                    epsabs=tolerance / (10 * len(pieces)), epsrel=1e-14, limit=500,
                )
                total += val
                err_total += err
        if err_total > tolerance * max(1.0, abs(total)):
            raise RuntimeError(f"quadrature for moment {l} did not converge (error {err_total:.3g})")
        out[l - 1] = total
    return out


def sample(spec: DensitySpec, count: int, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw `count` i.i.d. points: pick a component by weight, then invert its CDF."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    weights = np.array([c.weight for c in spec.components])
    which = np.searchsorted(np.cumsum(weights)[:-1], rng.random(count), side="right")
    p = rng.random(count)
    # Keep p strictly inside (0, 1) so quantiles stay finite.
    p = np.clip(p, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    out = np.empty(count)
    for i, comp in enumerate(spec.components):
        mask = which == i
        out[mask] = comp.inverse_cdf(p[mask])
    return out
