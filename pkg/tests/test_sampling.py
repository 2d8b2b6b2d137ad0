import math

import numpy as np
import pytest
from scipy import integrate, stats

from bifs.densities import LikelihoodSpec, PriorSpec, rician_loglik
from bifs.kspace import KGrid, forward_transform
from bifs.map import map_modulus_exponential, reconstruct_map
from bifs.paramfn import Constant, InversePower, scale_to_data_power
from bifs.sampling import (
    SampleConfig,
    argument_cosine_mean,
    mmse_estimate,
    posterior_mean_modulus,
    posterior_table,
    sample_posterior_image,
    sample_posterior_images,
    sample_posterior_k,
    sample_prior_image,
    sample_prior_images,
)
from bifs.synth import GaussianNoise, add_noise, demo_scene


def quad_posterior_mean(r, s, m=None, power=1):
    """Posterior mean of rho**power under Exponential(m) (flat if m is None) x Rician, by adaptive quadrature."""
    lp = lambda x: rician_loglik(x, r, s) - (0.0 if m is None else x / m)  # noqa: E731
    peak = max(lp(x) for x in np.linspace(0, r + 10 * s, 2001))
    f = lambda x: math.exp(lp(x) - peak)  # noqa: E731
    hi = r + 12 * s
    z, _ = integrate.quad(f, 0, hi, epsabs=1e-14, limit=200)
    num, _ = integrate.quad(lambda x: x**power * f(x), 0, hi, epsabs=1e-14, limit=200)
    return num / z


class TestPerK:
    def test_tiny_sigma(self):
        prior = PriorSpec("exponential", Constant(3.0))
        out = sample_posterior_k(prior, LikelihoodSpec("rician", 1e-6), 4.0 + 3.0j, 2.0, SampleConfig(500))
        assert np.all(np.abs(np.abs(out) - 5.0) < 1e-3)
        np.testing.assert_allclose(np.angle(out), math.atan2(3, 4))

    def test_mean_vs_quadrature(self):
        r, s, m = 5.0, 1.0, 2.0
        n = 100_000
        prior = PriorSpec("exponential", Constant(m))
        rho = np.abs(sample_posterior_k(prior, LikelihoodSpec("rician", s), r, 1.0, SampleConfig(n, rng_seed=11)))
        expected = quad_posterior_mean(r, s, m)
        se = rho.std(ddof=1) / math.sqrt(n)
        assert abs(rho.mean() - expected) < 3 * se

    def test_ks_against_table(self):
        prior = PriorSpec("exponential", Constant(2.0))
        lik = LikelihoodSpec("rician", 1.0)
        rho = np.abs(sample_posterior_k(prior, lik, 3.0, 1.0, SampleConfig(10_000, rng_seed=5)))
        grid, _, cdf = posterior_table(np.array([3.0]), 1.0, prior, lik)
        d = stats.kstest(rho, lambda x: np.interp(x, grid[0], cdf[0])).statistic
        assert d < 0.02

    def test_rician_argument_draws(self):
        prior = PriorSpec("sqrt_exponential", Constant(4.0))
        lik = LikelihoodSpec("rician", 1.0, argument="rician")
        out = sample_posterior_k(prior, lik, 2.0j, 1.0, SampleConfig(20_000, rng_seed=2))
        offs = np.angle(out / 1j)
        assert abs(np.mean(offs)) < 0.02  # symmetric about the data argument
        assert np.std(offs) > 0.1

    def test_table_normalized(self):
        prior = PriorSpec("sqrt_exponential", Constant(1e-6))
        grid, pdf, cdf = posterior_table(np.array([0.0, 1e3]), np.array([1.0, 1.0]), prior, LikelihoodSpec("rician", 1.0))
        np.testing.assert_allclose(cdf[:, -1], 1.0)
        assert np.all(np.diff(cdf, axis=1) >= 0)
        # the narrow posterior got a zoomed grid
        assert grid[0, -1] < 1.0


def noisy_scene(n=32, sd=5.0, seed=1):
    clean = demo_scene(n)
    return clean, add_noise(clean, GaussianNoise(sd), seed)


class TestImages:
    def setup_method(self):
        self.clean, self.y = noisy_scene()
        data = forward_transform(self.y)
        self.prior = PriorSpec("exponential", scale_to_data_power(InversePower(1, 2), data))
        self.lik = LikelihoodSpec("rician", 5.0 / math.sqrt(2))

    def test_same_seed_identical(self):
        a = sample_posterior_image(self.y, self.prior, self.lik, SampleConfig(rng_seed=4))
        b = sample_posterior_image(self.y, self.prior, self.lik, SampleConfig(rng_seed=4))
        c = sample_posterior_image(self.y, self.prior, self.lik, SampleConfig(rng_seed=5))
        assert a.tobytes() == b.tobytes()
        assert a.tobytes() != c.tobytes()

    def test_thread_independent(self):
        cfg1 = SampleConfig(3, rng_seed=9, threads=1)
        cfg4 = SampleConfig(3, rng_seed=9, threads=4)
        a = sample_posterior_images(self.y, self.prior, self.lik, cfg1)
        b = sample_posterior_images(self.y, self.prior, self.lik, cfg4)
        assert a.tobytes() == b.tobytes()

    def test_tiny_sigma(self):
        img = sample_posterior_image(self.y, self.prior, LikelihoodSpec("rician", 1e-7))
        assert np.max(np.abs(img - self.y)) < 1e-3

    def test_sample_mean_approaches_mmse(self):
        mmse = mmse_estimate(self.y, self.prior, self.lik).image
        stack = sample_posterior_images(self.y, self.prior, self.lik, SampleConfig(500, rng_seed=3))
        err_small = np.max(np.abs(stack[:50].mean(axis=0) - mmse))
        err_big = np.max(np.abs(stack.mean(axis=0) - mmse))
        ratio = err_small / err_big
        # sqrt(10) expected
        assert 1.8 < ratio < 5.5

    def test_mmse_tiny_sigma(self):
        out = mmse_estimate(self.y, self.prior, LikelihoodSpec("rician", 1e-7)).image
        assert np.max(np.abs(out - self.y)) < 1e-3

    def test_rician_argument_mmse_shrinks_more(self):
        lik_r = LikelihoodSpec("rician", self.lik.sigma, argument="rician")
        fixed = mmse_estimate(self.y, self.prior, self.lik).field
        rot = mmse_estimate(self.y, self.prior, lik_r).field
        g = fixed.grid
        off = ~g.origin_mask & ~g.self_conjugate
        assert np.all(np.abs(rot.values[off]) <= np.abs(fixed.values[off]) + 1e-12)


class TestMMSE:
    def test_flat_prior(self):
        r, s = 2.0, 1.0
        prior = PriorSpec("exponential", Constant(1e12))
        got = posterior_mean_modulus(np.array([r]), 1.0, prior, LikelihoodSpec("rician", s))[0]
        assert got == pytest.approx(quad_posterior_mean(r, s), rel=1e-6)

    def test_mmse_exceeds_map_when_skewed(self):
        r, s, m = 1.0, 1.0, 0.5
        prior = PriorSpec("exponential", Constant(m))
        lik = LikelihoodSpec("rician", s)
        exact = quad_posterior_mean(r, s, m)
        mean = posterior_mean_modulus(np.array([r]), 1.0, prior, lik)[0]
        assert mean == pytest.approx(exact, rel=1e-4)
        # trapezoid error falls with the square of the spacing
        fine = posterior_mean_modulus(np.array([r]), 1.0, prior, lik, n_points=65536)[0]
        assert abs(fine - exact) < abs(mean - exact) / 100
        assert mean > map_modulus_exponential(r, s, m)

    def test_cosine_mean_limits(self):
        assert argument_cosine_mean(0.0) == pytest.approx(0.0, abs=1e-9)
        assert argument_cosine_mean(1e4) == pytest.approx(1.0, abs=1e-8)
        s = np.array([0.5, 2.0, 10.0])
        c = argument_cosine_mean(s)
        assert np.all(np.diff(c) > 0) and np.all((c > 0) & (c < 1))
        # E[cos] = sqrt(pi/2)/2 * s * exp(-s^2/4) * (I0 + I1)(s^2/4) for the argument of a Rician variable
        from scipy.special import i0e, i1e

        z = s**2 / 4
        exact = math.sqrt(math.pi) / 2 * (s / math.sqrt(2)) * (i0e(z) + i1e(z))
        np.testing.assert_allclose(c, exact, rtol=1e-5)

    def test_mmse_vs_map_image(self):
        _, y = noisy_scene()
        data = forward_transform(y)
        prior = PriorSpec("exponential", scale_to_data_power(InversePower(1, 2), data))
        lik = LikelihoodSpec("rician", 5.0 / math.sqrt(2))
        a = mmse_estimate(y, prior, lik).image
        b = reconstruct_map(y, prior, lik).image
        assert not np.allclose(a, b)
        assert a.mean() == pytest.approx(y.mean(), abs=1e-10)


class TestPrior:
    def test_zero_prior(self):
        g = KGrid(16, 16)
        img = sample_prior_image(PriorSpec("exponential", Constant(0.0)), g)
        assert np.all(img == 0)

    def test_stationary_mean(self):
        g = KGrid(16, 16)
        stack = sample_prior_images(PriorSpec("sqrt_exponential", InversePower(1, 2)), g, 1000, seed=3)
        mean = stack.mean(axis=0)
        se = stack.std(axis=0, ddof=1) / math.sqrt(1000)
        assert np.all(np.abs(mean) < 4.5 * se)
        assert np.all(np.abs(stack.mean(axis=(1, 2))) < 1e-12)  # DC pinned to 0

    def test_power_matches_prior(self):
        g = KGrid(16, 16)
        prior = PriorSpec("sqrt_exponential", InversePower(1, 2))
        stack = sample_prior_images(prior, g, 2000, seed=4)
        p = np.mean([np.abs(forward_transform(x).values) ** 2 for x in stack], axis=0)
        iy, ix = g.origin
        for kx, ky in [(1, 0), (2, 3), (-5, 4)]:
            assert p[iy + ky, ix + kx] == pytest.approx(prior.mean_at(math.hypot(kx, ky)), rel=0.1)
