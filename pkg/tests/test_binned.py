"""Binned densities, Gaussian smoothing, and their exact calculus."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.stats import norm

from flowpoe.binned import (BinnedDensity, factorized_grad, gaussian_bins,
                            normalize, sample_binned, smoothed_cdf,
                            smoothed_cdf_mc_check, smoothed_logpdf_grad,
                            smoothed_pdf, uniform_bins)
from flowpoe.errors import ContractError, DegenerateDensityError, DomainError


def random_density(rng, n_bins=None):
    n_bins = n_bins or int(rng.integers(2, 12))
    edges = np.sort(rng.uniform(-3, 3, n_bins + 1))
    edges += np.arange(n_bins + 1) * 1e-3  # guarantee strict increase
    masses = rng.uniform(0.0, 1.0, n_bins)
    masses[rng.integers(n_bins)] = 0.0  # exercise empty bins
    masses[0] = max(masses[0], 0.1)
    return normalize(BinnedDensity(edges=edges, masses=masses))


class TestContainer:
    def test_validation(self):
        with pytest.raises(ContractError):
            BinnedDensity(edges=[0.0, 0.0, 1.0], masses=[0.5, 0.5])
        with pytest.raises(ContractError):
            BinnedDensity(edges=[0.0, 1.0], masses=[0.5, 0.5])
        with pytest.raises(ContractError):
            BinnedDensity(edges=[0.0, 1.0], masses=[-0.1])
        with pytest.raises(ContractError):
            BinnedDensity(edges=[0.0, np.inf], masses=[1.0])

    def test_normalize(self):
        q = normalize(BinnedDensity(edges=[0.0, 1.0, 2.0], masses=[2.0, 6.0]))
        assert_allclose(q.masses, [0.25, 0.75])
        with pytest.raises(DegenerateDensityError):
            normalize(BinnedDensity(edges=[0.0, 1.0], masses=[0.0]))

    def test_moments_exact(self):
        # Uniform on [0, 2): mean 1, variance 4/12.
        q = BinnedDensity(edges=[0.0, 2.0], masses=[1.0])
        assert_allclose(q.mean(), 1.0)
        assert_allclose(q.variance(), 4.0 / 12.0)
        # Two point-like bins at -1 and +1 -> mean 0, variance ~1.
        q2 = BinnedDensity(edges=[-1.0005, -0.9995, 0.9995, 1.0005],
                           masses=[0.5, 0.0, 0.5])
        assert_allclose(q2.mean(), 0.0, atol=1e-12)
        assert_allclose(q2.variance(), 1.0, atol=1e-3)

    def test_json_roundtrip(self):
        q = random_density(np.random.default_rng(0))
        back = BinnedDensity.from_json(q.to_json())
        assert_allclose(back.edges, q.edges)
        assert_allclose(back.masses, q.masses)


class TestSmoothedPdf:
    def test_integrates_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            q = random_density(rng)
            for r in (0.01, 0.1, 1.0):
                lo, hi = q.support
                val, _ = quad(lambda y: smoothed_pdf(q, r, y),
                              lo - 8 * r, hi + 8 * r, limit=200)
                assert abs(val - 1.0) < 1e-6

    def test_small_r_recovers_heights(self):
        q = BinnedDensity(edges=[0.0, 1.0, 3.0], masses=[0.5, 0.5])
        heights = [0.5, 0.25]
        for center, h in ((0.5, heights[0]), (2.0, heights[1])):
            assert_allclose(smoothed_pdf(q, 1e-4, center), h, rtol=1e-6)

    def test_positive_far_outside_support(self):
        q = uniform_bins(-1.0, 1.0, 4)
        r = 0.1
        logpdf, grad = smoothed_logpdf_grad(q, r, 1.0 + 10 * r)
        assert np.isfinite(logpdf)
        assert np.isfinite(grad)
        assert logpdf < np.log(smoothed_pdf(q, r, 0.0))

    def test_extreme_tail_matches_gaussian_decay(self):
        # At distance z from the support edge, log pdf ~ -z^2/(2 r^2).
        q = uniform_bins(-1.0, 1.0, 2)
        r = 0.05
        y = 1.0 + 40 * r  # 40 sigma out; naive evaluation underflows
        logpdf, grad = smoothed_logpdf_grad(q, r, y)
        assert np.isfinite(logpdf)
        assert logpdf < -700  # past float64 exp underflow
        assert grad < 0
        assert_allclose(grad, -(y - 1.0) / r**2, rtol=0.05)

    def test_large_r_approaches_gaussian_at_bin_center(self):
        # r much wider than the support: density ~ N(center of mass, r^2).
        q = BinnedDensity(edges=[-0.01, 0.01], masses=[1.0])
        r = 3.0
        ys = np.linspace(-6, 6, 7)
        assert_allclose(smoothed_pdf(q, r, ys), norm.pdf(ys, 0.0, r), rtol=1e-3)

    def test_vectorized_matches_scalar(self):
        q = random_density(np.random.default_rng(2))
        ys = np.linspace(-4, 4, 9).reshape(3, 3)
        logpdf, grad = smoothed_logpdf_grad(q, 0.2, ys)
        assert logpdf.shape == (3, 3)
        for i in range(3):
            for j in range(3):
                lp, g = smoothed_logpdf_grad(q, 0.2, ys[i, j])
                assert_allclose(logpdf[i, j], lp, atol=1e-12)
                assert_allclose(grad[i, j], g, atol=1e-12)

    def test_bad_r_rejected(self):
        q = uniform_bins(0.0, 1.0, 2)
        for r in (0.0, -1.0, np.inf, np.nan):
            with pytest.raises(DomainError):
                smoothed_pdf(q, r, 0.5)


class TestSmoothedGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        q = random_density(rng)
        lo, hi = q.support
        # Include bin edges, where the unsmoothed density jumps.
        ys = np.concatenate([rng.uniform(lo - 0.5, hi + 0.5, 20), q.edges])
        h = 1e-6
        for r in (0.05, 0.3, 1.0):
            _, grad = smoothed_logpdf_grad(q, r, ys)
            lp_hi, _ = smoothed_logpdf_grad(q, r, ys + h)
            lp_lo, _ = smoothed_logpdf_grad(q, r, ys - h)
            assert_allclose(grad, (lp_hi - lp_lo) / (2 * h), atol=1e-4)

    def test_symmetry_gives_zero_gradient_at_center(self):
        q = uniform_bins(-1.0, 1.0, 4)
        _, grad = smoothed_logpdf_grad(q, 0.3, 0.0)
        assert abs(grad) < 1e-12

    def test_factorized_stacks_columns(self):
        rng = np.random.default_rng(4)
        qs = [random_density(rng) for _ in range(3)]
        Y = rng.standard_normal((5, 3))
        out = factorized_grad(qs, Y, 0.2)
        assert out.shape == (5, 3)
        for i, q in enumerate(qs):
            _, g = smoothed_logpdf_grad(q, 0.2, Y[:, i])
            assert_allclose(out[:, i], g, atol=1e-12)

    def test_factorized_length_mismatch_rejected(self):
        with pytest.raises(ContractError):
            factorized_grad([uniform_bins(0, 1, 2)], np.zeros((4, 2)), 0.1)


class TestSmoothedCdf:
    def test_limits_and_monotone(self):
        q = random_density(np.random.default_rng(5))
        lo, hi = q.support
        ys = np.linspace(lo - 3, hi + 3, 200)
        cdf = smoothed_cdf(q, 0.2, ys)
        assert cdf[0] < 1e-6
        assert cdf[-1] > 1 - 1e-6
        assert np.all(np.diff(cdf) >= -1e-12)

    def test_derivative_is_pdf(self):
        q = random_density(np.random.default_rng(6))
        ys = np.linspace(*q.support, 11)
        h = 1e-5
        fd = (smoothed_cdf(q, 0.25, ys + h) - smoothed_cdf(q, 0.25, ys - h)) / (2 * h)
        assert_allclose(fd, smoothed_pdf(q, 0.25, ys), atol=1e-6)

    def test_mc_agreement(self):
        rng = np.random.default_rng(7)
        for seed in range(3):
            q = random_density(rng)
            r = (0.01, 0.1, 1.0)[seed]
            ks = smoothed_cdf_mc_check(q, r, seed=seed, n_draws=100_000)
            assert ks <= 0.01


class TestSampling:
    def test_in_support_and_proportions(self):
        q = BinnedDensity(edges=[0.0, 1.0, 2.0], masses=[0.25, 0.75])
        draws = sample_binned(q, np.random.default_rng(8), 40000)
        assert draws.min() >= 0.0
        assert draws.max() <= 2.0
        frac_hi = np.mean(draws >= 1.0)
        assert abs(frac_hi - 0.75) < 0.01

    def test_zero_mass_rejected(self):
        q = BinnedDensity(edges=[0.0, 1.0], masses=[0.0])
        with pytest.raises(DegenerateDensityError):
            sample_binned(q, np.random.default_rng(0), 10)


class TestConstructors:
    def test_gaussian_bins_moments(self):
        q = gaussian_bins(mean=1.0, variance=0.25, lo=-2.0, hi=4.0, n_bins=400)
        assert_allclose(q.mean(), 1.0, atol=1e-3)
        assert_allclose(q.variance(), 0.25, atol=1e-3)
        assert_allclose(q.masses.sum(), 1.0, atol=1e-12)

    def test_gaussian_bins_validation(self):
        with pytest.raises(DomainError):
            gaussian_bins(0.0, 0.0, -1.0, 1.0, 10)

    def test_uniform_bins(self):
        q = uniform_bins(-1.0, 1.0, 5)
        assert_allclose(q.masses, np.full(5, 0.2))
        assert_allclose(q.mean(), 0.0, atol=1e-12)
