import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly
from scipy import integrate

from densitysteer import density as dens
from densitysteer.errors import IterationLimit, NotInLPlus
from densitysteer.hankel import to_hankel
from densitysteer.realize import (
    Prior, RealizedDensity, coefficients_to_lambda, default_prior, gradient, in_lplus,
    is_positive_polynomial, kl_diagnostic, lambda_to_coefficients, moment_matrix, objective,
    realize, solve,
)

NORMAL = np.array([0.0, 1.0, 0.0, 3.0])
MIXTURE = np.array([-0.2, 2.0, -0.8, 10.0])


def quad_moments(prior: Prior, lam, order):
    """Moments of prior(u) / P(u) by adaptive quadrature, independent of the solver's rule."""
    c = lambda_to_coefficients(lam)
    f = lambda u, l: u**l * prior.pdf(u) / npoly.polyval(u, c)
    lo, hi = (-np.inf, np.inf)
    return np.array([
        integrate.quad(f, lo, hi, args=(l,), epsabs=1e-13, epsrel=1e-13, limit=500)[0]
        for l in range(order + 1)
    ])


def random_lplus(rng, n, delta=0.1):
    A = rng.standard_normal((n + 1, n + 1))
    return A @ A.T + delta * np.eye(n + 1)


class TestPolynomialPlumbing:
    def test_coefficients_roundtrip(self):
        c = np.array([2.0, -1.0, 3.0, 0.5, 1.0])
        lam = coefficients_to_lambda(c)
        np.testing.assert_allclose(lambda_to_coefficients(lam), c)
        np.testing.assert_allclose(lam, lam.T)

    def test_quadratic_form(self):
        lam = np.array([[2.0, 0.5], [0.5, 1.0]])
        u = 1.7
        G = np.array([1.0, u])
        assert npoly.polyval(u, lambda_to_coefficients(lam)) == pytest.approx(G @ lam @ G)

    @pytest.mark.parametrize("c, expected", [
        ([1.0], True), ([1.0, 0.0, 1.0], True), ([1.0, 2.0, 1.0], False),
        ([-1.0, 0.0, 1.0], False), ([1.0, 0.0, -1.0], False), ([1.0, 1.0], False),
        ([1.0, 0.0, 0.0, 0.0, 1.0], True),
    ])
    def test_positivity(self, c, expected):
        assert is_positive_polynomial(c) is expected

    def test_pd_lambda_is_admissible(self):
        rng = np.random.default_rng(3)
        assert all(in_lplus(random_lplus(rng, n)) for n in (1, 2, 3) for _ in range(10))
        # Indefinite Lam whose polynomial 1 - u^2 + u^4 is still positive.
        lam = np.array([[1.0, 0.0, -1.2], [0.0, 1.4, 0.0], [-1.2, 0.0, 1.0]])
        assert np.linalg.eigvalsh(lam).min() < 0
        assert in_lplus(lam)
        assert not in_lplus(-np.eye(2))


class TestObjective:
    def test_unit_at_prior_moments(self):
        prior = Prior()
        lam = np.zeros((3, 3))
        lam[0, 0] = 1.0
        assert objective(lam, moment_matrix(NORMAL), prior) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("c", [0.3, 2.0, 5.0])
    def test_scaled_constant(self, c):
        lam = np.zeros((3, 3))
        lam[0, 0] = c
        assert objective(lam, moment_matrix(NORMAL), Prior()) == pytest.approx(c - math.log(c), abs=1e-12)

    def test_rejects_outside_lplus(self):
        with pytest.raises(NotInLPlus):
            objective(-np.eye(3), moment_matrix(NORMAL), Prior())
        with pytest.raises(NotInLPlus):
            gradient(-np.eye(3), moment_matrix(NORMAL), Prior())


class TestGradient:
    def test_zero_at_fixed_point(self):
        lam = np.zeros((3, 3))
        lam[0, 0] = 1.0
        np.testing.assert_allclose(gradient(lam, moment_matrix(NORMAL), Prior()), 0, atol=1e-12)

    @pytest.mark.parametrize("c", [0.5, 4.0])
    def test_scaled_constant(self, c):
        lam = np.zeros((3, 3))
        lam[0, 0] = c
        sigma = moment_matrix(NORMAL)
        np.testing.assert_allclose(gradient(lam, sigma, Prior()), (1 - 1 / c) * sigma, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_finite_differences(self, n):
        rng = np.random.default_rng(10 + n)
        prior = Prior("gaussian", 0.3, 1.4)
        sigma = moment_matrix(dens.closed_form_moments(dens.gaussian(0.1, 0.9), 2 * n))
        for _ in range(5):
            lam = random_lplus(rng, n)
            E = rng.standard_normal(lam.shape)
            E = 0.5 * (E + E.T)
            h = 1e-5 * np.linalg.norm(lam)
            fd = (objective(lam + h * E, sigma, prior) - objective(lam - h * E, sigma, prior)) / (2 * h)
            analytic = np.sum(gradient(lam, sigma, prior) * E)
            assert abs(fd - analytic) <= 1e-6 * max(abs(analytic), 1e-8)


class TestSolve:
    def test_fixed_point(self):
        prior = Prior()
        sol = solve(moment_matrix(NORMAL), prior)
        assert sol.iterations == 0
        expected = np.zeros((3, 3))
        expected[0, 0] = 1.0
        np.testing.assert_allclose(sol.lam, expected, atol=1e-8)

    @pytest.mark.parametrize("prior", [Prior("gaussian", 0.0, math.sqrt(2)), Prior("gaussian", 0.0, 2.0),
                                       Prior("gaussian", -0.2, 2.8)])
    def test_mixture_matches_independent_quadrature(self, prior):
        r = realize(MIXTURE, prior)
        assert r.gradient_norm < 1e-8 and r.iterations <= 200
        np.testing.assert_allclose(quad_moments(prior, r.lam, 4), np.r_[1.0, MIXTURE], rtol=0, atol=1e-6)

    def test_unique_from_different_start(self):
        prior = Prior("gaussian", 0.0, 2.0)
        sigma = moment_matrix(MIXTURE)
        a = solve(sigma, prior)
        b = solve(sigma, prior, initial=np.diag([1.0, 0.5, 0.2]))
        np.testing.assert_allclose(lambda_to_coefficients(a.lam), lambda_to_coefficients(b.lam), atol=1e-7)

    def test_objective_convex_along_segment(self):
        rng = np.random.default_rng(5)
        sigma, prior = moment_matrix(MIXTURE), Prior("gaussian", 0.0, 2.0)
        for _ in range(10):
            l1, l2 = random_lplus(rng, 2), random_lplus(rng, 2)
            mid = objective(0.5 * (l1 + l2), sigma, prior)
            assert mid <= 0.5 * (objective(l1, sigma, prior) + objective(l2, sigma, prior)) + 1e-12

    def test_minimum_beats_neighbours(self):
        sigma, prior = moment_matrix(MIXTURE), Prior("gaussian", 0.0, 2.0)
        lam = solve(sigma, prior).lam
        best = objective(lam, sigma, prior)
        rng = np.random.default_rng(8)
        for _ in range(10):
            E = rng.standard_normal((3, 3))
            trial = lam + 1e-3 * (E + E.T)
            if in_lplus(trial):
                assert objective(trial, sigma, prior) >= best - 1e-12

    def test_iteration_limit(self):
        with pytest.raises(IterationLimit):
            solve(moment_matrix(MIXTURE), Prior("gaussian", 0.0, 2.0), max_iterations=1)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            solve(moment_matrix([0.0, 1.0, 0.0, 1.0]), Prior())
        with pytest.raises(NotInLPlus):
            solve(moment_matrix(MIXTURE), Prior(), initial=-np.eye(3))

    def test_cauchy_prior(self):
        prior = Prior("cauchy", 0.0, 1.0)
        r = realize(NORMAL, prior)
        assert r.gradient_norm < 1e-8
        np.testing.assert_allclose(quad_moments(prior, r.lam, 4), np.r_[1.0, NORMAL], atol=1e-6)


class TestRealizedDensity:
    def test_default_prior(self):
        p = default_prior(MIXTURE)
        assert p.kind == "gaussian"
        assert p.location == pytest.approx(-0.2)
        assert p.scale == pytest.approx(math.sqrt(4 * (2.0 - 0.04)))

    def test_fixed_point_reproduces_prior(self):
        r = realize(NORMAL, Prior())
        u = np.linspace(-6, 6, 101)
        np.testing.assert_allclose(r.pdf(u), Prior().pdf(u), atol=1e-6)
        assert abs(kl_diagnostic(r)) < 1e-10

    def test_kl_positive_away_from_prior(self):
        assert kl_diagnostic(realize(MIXTURE)) > 0

    def test_moments_and_normalization(self):
        r = realize(MIXTURE)
        np.testing.assert_allclose(r.moments(), np.r_[1.0, MIXTURE], atol=1e-8)
        u, p = r.curve()
        assert integrate.trapezoid(p, u) == pytest.approx(1.0, abs=1e-6)
        assert np.all(p > 0)

    def test_samples_match_moments(self):
        r = realize(MIXTURE)
        x = r.sample(200_000, seed=1)
        for l in range(1, 5):
            xl = x**l
            assert abs(xl.mean() - MIXTURE[l - 1]) < 5 * xl.std() / math.sqrt(x.size)

    def test_sampling_deterministic(self):
        r = realize(MIXTURE)
        np.testing.assert_array_equal(r.sample(1000, seed=4), r.sample(1000, seed=4))
        with pytest.raises(ValueError):
            r.sample(0)

    def test_rejects_moments_outside_cone(self):
        with pytest.raises(ValueError):
            realize([0.0, 1.0, 0.0, 0.5])

    def test_rebuild_from_lambda(self):
        r = realize(MIXTURE)
        again = RealizedDensity(r.prior, r.lam, r.target)
        u = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(again.pdf(u), r.pdf(u), rtol=1e-9)
