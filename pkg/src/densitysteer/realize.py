"""Realize a control-moment vector as an analytic density.

Given target moments (m_1, ..., m_2n) and a prior density r, the realized
density is ``p(u) = r(u) / (G(u)^T Lam G(u))`` with ``G(u) = (1, u, ..., u^n)``,
where Lam minimizes the convex functional

    J(Lam) = tr(Lam Sigma) - integral r(u) log(G(u)^T Lam G(u)) du

over symmetric Lam whose quadratic form in G(u) is positive on the whole
real line.  At the minimizer the first 2n moments of p equal the targets.

Only the anti-diagonal sums of Lam enter the polynomial, so the solver works
on the 2n+1 polynomial coefficients and reports Lam in Hankel form.  All
integrals are taken in the prior's standardized variable
``z = (u - location) / scale``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.polynomial.legendre import leggauss

from .errors import IterationLimit, LinesearchStall, NotInLPlus
from .hankel import as_moments, from_hankel, in_cone, to_hankel
from .moment_system import pascal

log = logging.getLogger(__name__)

PRIOR_KINDS = ("gaussian", "cauchy")
DEFAULT_VARIANCE_FACTOR = 4.0
GAUSSIAN_HALF_WIDTH = 12.0
QUAD_PANELS = 400
QUAD_DEGREE = 16
CDF_POINTS = 20001
ROOT_IMAG_TOL = 1e-9

TOLERANCE = 1e-8
MAX_ITERATIONS = 200
BACKTRACK = 0.5
MIN_STEP = 1e-12
ARMIJO = 1e-4


@lru_cache(maxsize=None)
def _standard_rule(kind: str, panels: int, degree: int):
    """Composite Gauss-Legendre nodes z and prior-weighted weights for a unit prior."""
    t, w = leggauss(degree)
    if kind == "gaussian":
        lo, hi = -GAUSSIAN_HALF_WIDTH, GAUSSIAN_HALF_WIDTH
    else:
        # u = tan(theta) maps the real line to (-pi/2, pi/2) and r(u) du = dtheta / pi
        lo, hi = -math.pi / 2, math.pi / 2
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    s = (mid[:, None] + half[:, None] * t).ravel()
    ws = (half[:, None] * w).ravel()
    if kind == "gaussian":
        z, weights = s, ws * np.exp(-0.5 * s * s) / math.sqrt(2 * math.pi)
    else:
        z, weights = np.tan(s), ws / math.pi
    z.setflags(write=False)
    weights.setflags(write=False)
    return z, weights


@dataclass(frozen=True)
class Prior:
    kind: str = "gaussian"
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"prior kind must be one of {PRIOR_KINDS}, got {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("prior scale must be positive")

    def pdf(self, u):
        z = (np.asarray(u, dtype=float) - self.location) / self.scale
        if self.kind == "gaussian":
            return np.exp(-0.5 * z * z) / (self.scale * math.sqrt(2 * math.pi))
        return 1.0 / (math.pi * self.scale * (1.0 + z * z))

    def rule(self, panels: int = QUAD_PANELS, degree: int = QUAD_DEGREE):
        """Standardized nodes z and weights w with sum(w f(z)) ~ E_r[f((u - loc)/scale)]."""
        return _standard_rule(self.kind, panels, degree)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "location": self.location, "scale": self.scale}


def default_prior(moments, kind: str = "gaussian",
                  variance_factor: float = DEFAULT_VARIANCE_FACTOR) -> Prior:
    """Prior centred on the target mean with variance inflated by `variance_factor`."""
    m = as_moments(moments)
    var = m[1] - m[0] ** 2
    if not var > 0:
        raise ValueError("target has non-positive variance")
    return Prior(kind, float(m[0]), math.sqrt(variance_factor * var))


# -- polynomial / matrix plumbing -------------------------------------------

def lambda_to_coefficients(lam) -> np.ndarray:
    """Ascending coefficients of G(u)^T Lam G(u): anti-diagonal sums of Lam."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[0] - 1
    flipped = np.fliplr(lam)
    return np.array([np.trace(flipped, offset=n - l) for l in range(2 * n + 1)])


def coefficients_to_lambda(c) -> np.ndarray:
    """Hankel Lam with the given polynomial, each coefficient spread evenly over its anti-diagonal."""
    c = np.asarray(c, dtype=float)
    n = (c.size - 1) // 2
    idx = np.add.outer(np.arange(n + 1), np.arange(n + 1))
    counts = np.array([min(l, 2 * n - l) + 1 for l in range(2 * n + 1)])
    return (c / counts)[idx]


def _substitute(c, shift: float, factor: float) -> np.ndarray:
    """Coefficients of P(shift + factor * t) in t."""
    out = np.zeros(1)
    lin = np.array([shift, factor])
    for coef in c[::-1]:
        out = npoly.polyadd(npoly.polymul(out, lin), [coef])
    out = np.pad(out, (0, max(0, len(c) - out.size)))[: len(c)]
    return out


def is_positive_polynomial(c, imag_tol: float = ROOT_IMAG_TOL) -> bool:
    """Strict positivity on the real line of the polynomial with ascending coefficients `c`.

    Positive at 0 and no real root among the companion-matrix eigenvalues.
    """
    c = np.trim_zeros(np.asarray(c, dtype=float), "b")
    if c.size == 0 or not c[0] > 0:
        return False
    if c.size == 1:
        return True
    if (c.size - 1) % 2 or not c[-1] > 0:
        return False
    if not np.all(np.isfinite(c)):
        return False
    roots = np.roots(c[::-1])
    return not np.any(np.abs(roots.imag) < imag_tol)


def in_lplus(lam) -> bool:
    return is_positive_polynomial(lambda_to_coefficients(lam))


def moment_matrix(moments) -> np.ndarray:
    return to_hankel(moments, 1.0)


def _z_moments(m, loc: float, scale: float) -> np.ndarray:
    """(1, E[z], ..., E[z^2n]) for z = (u - loc)/scale given raw moments of u."""
    M = np.concatenate(([1.0], m))
    C = pascal(m.size)
    return np.array([
        sum(C[l][j] * M[j] * (-loc) ** (l - j) for j in range(l + 1)) / scale**l
        for l in range(m.size + 1)
    ])


def _u_moments(Ez, loc: float, scale: float) -> np.ndarray:
    C = pascal(Ez.size - 1)
    return np.array([
        sum(C[l][j] * loc ** (l - j) * scale**j * Ez[j] for j in range(l + 1))
        for l in range(Ez.size)
    ])


# -- objective and gradient in the user's coordinates -------------------------

def _poly_on_rule(lam, prior: Prior):
    c = lambda_to_coefficients(lam)
    if not is_positive_polynomial(c):
        raise NotInLPlus("G(u)^T Lam G(u) is not strictly positive on the real line")
    z, w = prior.rule()
    cz = _substitute(c, prior.location, prior.scale)
    return z, w, npoly.polyval(z, cz)


def objective(lam, sigma, prior: Prior) -> float:
    """J(Lam) = tr(Lam Sigma) - E_r[log G^T Lam G]."""
    lam, sigma = np.asarray(lam, dtype=float), np.asarray(sigma, dtype=float)
    z, w, P = _poly_on_rule(lam, prior)
    return float(np.sum(lam * sigma) - w @ np.log(P))


def gradient(lam, sigma, prior: Prior) -> np.ndarray:
    """Sigma - E_r[G G^T / (G^T Lam G)], a symmetric matrix."""
    lam, sigma = np.asarray(lam, dtype=float), np.asarray(sigma, dtype=float)
    z, w, P = _poly_on_rule(lam, prior)
    n = lam.shape[0] - 1
    Ez = np.vander(z, 2 * n + 1, increasing=True).T @ (w / P)
    Eu = _u_moments(Ez, prior.location, prior.scale)
    return sigma - to_hankel(Eu[1:], Eu[0])


# -- solver -------------------------------------------------------------------

@dataclass
class Solution:
    lam: np.ndarray
    iterations: int
    gradient_norm: float
    z_coefficients: np.ndarray
    gradient_steps: int = 0


def _initial_coefficients(prior: Prior, n: int) -> np.ndarray:
    c = np.zeros(2 * n + 1)
    if prior.kind == "gaussian":
        c[0] = 1.0
    else:
        # r/(1+z^2)^n has 2n finite moments; the constant polynomial does not.
        c[::2] = [math.comb(n, j) for j in range(n + 1)]
    return c


def _line_search(c, d, gz, Mz, V, w, f0, slack):
    slope = float(gz @ d)
    if not slope < 0:
        return None
    t = 1.0
    while t >= MIN_STEP:
        trial = c + t * d
        if is_positive_polynomial(trial):
            P = V @ trial
            if np.all(P > 0):
                f = float(trial @ Mz - w @ np.log(P))
                if f <= f0 + ARMIJO * t * slope + slack:
                    return trial
        t *= BACKTRACK
    return None


def solve(sigma, prior: Prior, tolerance: float = TOLERANCE,
          max_iterations: int = MAX_ITERATIONS, initial=None) -> Solution:
    """Minimize J over positive polynomials by damped Newton with backtracking.

    Steps that leave the positive set are shrunk. When no Newton step length
    is admissible (typically at the constant starting polynomial, where the
    Newton direction can have a negative leading coefficient) a steepest
    descent step is tried instead.

    `initial` is an optional starting Lam in L+; by default the constant
    polynomial 1 (Gaussian prior) or (1 + z^2)^n (Cauchy prior).
    """
    sigma = np.asarray(sigma, dtype=float)
    m = from_hankel(sigma)
    if abs(sigma[0, 0] - 1.0) > 1e-12:
        raise ValueError("moment matrix must have entry (0, 0) equal to 1")
    if not in_cone(m):
        raise ValueError("moment matrix is not positive definite")
    n = sigma.shape[0] - 1
    loc, scale = prior.location, prior.scale
    Mu = np.concatenate(([1.0], m))
    Mz = _z_moments(m, loc, scale)
    z, w = prior.rule()
    V = np.vander(z, 2 * n + 1, increasing=True)
    if initial is None:
        c = _initial_coefficients(prior, n)
    else:
        c = _substitute(lambda_to_coefficients(initial), loc, scale)
        if not is_positive_polynomial(c):
            raise NotInLPlus("initial Lam is not in L+")
    descent_steps = 0

    for it in range(max_iterations + 1):
        P = V @ c
        q = w / P
        Ez = V.T @ q
        gnorm = float(np.abs(Mu - _u_moments(Ez, loc, scale)).max())
        if gnorm < tolerance:
            cu = _substitute(c, -loc / scale, 1.0 / scale)
            return Solution(coefficients_to_lambda(cu), it, gnorm, c, descent_steps)
        if it == max_iterations:
            break
        gz = Mz - Ez
        H = (V * (q / P)[:, None]).T @ V
        try:
            d = -np.linalg.solve(H, gz)
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(H, gz, rcond=None)[0]
        f0 = float(c @ Mz - w @ np.log(P))
        slack = 1e-13 * max(1.0, abs(f0))
        step = _line_search(c, d, gz, Mz, V, w, f0, slack)
        if step is None:
            descent_steps += 1
            step = _line_search(c, -gz, gz, Mz, V, w, f0, slack)
        if step is None:
            raise LinesearchStall(
                f"no admissible step above {MIN_STEP:g} at iteration {it} (gradient {gnorm:.3g})")
        c = step
    raise IterationLimit(f"gradient {gnorm:.3g} after {max_iterations} iterations")


# -- realized density ---------------------------------------------------------

@dataclass
class RealizedDensity:
    prior: Prior
    lam: np.ndarray
    target: np.ndarray
    iterations: int = 0
    gradient_norm: float = 0.0
    z_coefficients: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.z_coefficients is None:
            c = lambda_to_coefficients(self.lam)
            self.z_coefficients = _substitute(c, self.prior.location, self.prior.scale)

    @property
    def order(self) -> int:
        return 2 * (self.lam.shape[0] - 1)

    def _poly_z(self, z):
        return npoly.polyval(z, self.z_coefficients)

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        z = (u - self.prior.location) / self.prior.scale
        return self.prior.pdf(u) / self._poly_z(z)

    def moments(self, order: int | None = None) -> np.ndarray:
        """(E[u^0], ..., E[u^order]) of the realized density by the prior's quadrature."""
        order = self.order if order is None else order
        z, w = self.prior.rule()
        Ez = np.vander(z, order + 1, increasing=True).T @ (w / self._poly_z(z))
        return _u_moments(Ez, self.prior.location, self.prior.scale)

    @cached_property
    def cdf_grid(self):
        """(t, cdf) on a dense grid in the sampling variable; u = loc + scale * map(t)."""
        if self.prior.kind == "gaussian":
            t = np.linspace(-GAUSSIAN_HALF_WIDTH, GAUSSIAN_HALF_WIDTH, CDF_POINTS)
            dens = np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) / self._poly_z(t)
        else:
            t = np.linspace(-math.pi / 2, math.pi / 2, CDF_POINTS)
            dens = np.zeros_like(t)
            inner = slice(1, -1)
            dens[inner] = 1.0 / (math.pi * self._poly_z(np.tan(t[inner])))
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))))
        cdf /= cdf[-1]
        keep = np.concatenate(([True], np.diff(cdf) > 0))
        t, cdf = t[keep], cdf[keep]
        t.setflags(write=False)
        cdf.setflags(write=False)
        return t, cdf

    def _t_to_u(self, t):
        z = t if self.prior.kind == "gaussian" else np.tan(t)
        return self.prior.location + self.prior.scale * z

    def sample(self, count: int, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
        """Inverse-CDF draws with linear interpolation on the cached grid."""
        if count < 1:
            raise ValueError("count must be at least 1")
        if rng is None:
            rng = np.random.default_rng(seed)
        t, cdf = self.cdf_grid
        return self._t_to_u(np.interp(rng.random(count), cdf, t))

    def curve(self, points: int = 2001):
        """(u, p(u)) on a grid suited to export and plotting."""
        if self.prior.kind == "gaussian":
            z = np.linspace(-GAUSSIAN_HALF_WIDTH, GAUSSIAN_HALF_WIDTH, points)
        else:
            theta = np.linspace(-math.pi / 2, math.pi / 2, points + 2)[1:-1]
            z = np.tan(theta)
        u = self.prior.location + self.prior.scale * z
        return u, self.pdf(u)


def realize(u_moments, prior: Prior | None = None, tolerance: float = TOLERANCE,
            max_iterations: int = MAX_ITERATIONS) -> RealizedDensity:
    m = as_moments(u_moments)
    if not in_cone(m):
        raise ValueError("control moments are not in the PD Hankel cone")
    if prior is None:
        prior = default_prior(m)
    sol = solve(moment_matrix(m), prior, tolerance, max_iterations)
    log.debug("realized %s in %d iterations (gradient %.2e)", m, sol.iterations, sol.gradient_norm)
    return RealizedDensity(prior, sol.lam, m, sol.iterations, sol.gradient_norm, sol.z_coefficients)


def kl_diagnostic(density: RealizedDensity) -> float:
    """KL(r || p) = E_r[log(r / p)] = E_r[log G^T Lam G]."""
    z, w = density.prior.rule()
    return float(w @ np.log(density._poly_z(z)))


def sample_realized(density: RealizedDensity, count: int, seed=None) -> np.ndarray:
    return density.sample(count, seed)
