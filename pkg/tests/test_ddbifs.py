import math

import numpy as np
import pytest

from bifs.ddbifs import (
    TAU_FLOOR_REL,
    EmpiricalPrior,
    ddbifs_reconstruct,
    estimate_empirical_prior,
    load_empirical_prior,
    save_empirical_prior,
)
from bifs.exceptions import DimensionError, EstimationError, FormatError, ParameterError
from bifs.io import write_raw
from bifs.kspace import KGrid, forward_transform
from bifs.synth import BumpConfig, GaussianNoise, add_noise, simulate_bump_database


@pytest.fixture(scope="module")
def bumps():
    return simulate_bump_database(200, BumpConfig(rate=10.0, n_y=32, n_x=32), seed=1)


class TestEstimate:
    def test_identical_images_hit_floor(self):
        img = np.random.default_rng(0).normal(size=(16, 16))
        p = estimate_empirical_prior([img] * 5)
        np.testing.assert_allclose(p.mu, np.abs(forward_transform(img).values), atol=1e-12)
        assert np.all(p.tau == pytest.approx(TAU_FLOOR_REL * p.mu.mean()))

    def test_white_noise_flat_mean(self):
        db = np.random.default_rng(1).normal(0, 2.0, size=(400, 16, 16))
        p = estimate_empirical_prior(db)
        g = p.grid
        plain = ~g.origin_mask & ~g.self_conjugate
        # complex Gaussian with per-component SD sqrt(2): Rayleigh mean sqrt(2) sqrt(pi/2)
        expected = math.sqrt(2) * math.sqrt(math.pi / 2)
        assert np.abs(p.mu[plain] / expected - 1).max() < 0.1

    def test_bump_mean_decreases_with_radius(self, bumps):
        p = estimate_empirical_prior(bumps)
        g = p.grid
        means = [p.mu[(g.radius > r - 0.5) & (g.radius <= r + 0.5)].mean() for r in range(1, 12)]
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_threads_identical(self, bumps):
        a = estimate_empirical_prior(bumps, threads=1)
        b = estimate_empirical_prior(bumps, threads=4)
        assert a.mu.tobytes() == b.mu.tobytes() and a.tau.tobytes() == b.tau.tobytes()

    def test_list_and_stack_agree(self, bumps):
        a = estimate_empirical_prior(bumps[:20])
        b = estimate_empirical_prior(list(bumps[:20]))
        assert a.mu.tobytes() == b.mu.tobytes()

    def test_normalize(self, bumps):
        p = estimate_empirical_prior(bumps * 7 + 3, normalize=True)
        q = estimate_empirical_prior(bumps, normalize=True)
        np.testing.assert_allclose(p.mu, q.mu, atol=1e-10)
        assert p.mu[p.grid.origin] < 1e-9

    def test_errors(self):
        with pytest.raises(EstimationError):
            estimate_empirical_prior([np.zeros((8, 8))])
        with pytest.raises(DimensionError):
            estimate_empirical_prior([np.zeros((8, 8)), np.zeros((8, 10))])
        g = KGrid(8, 8)
        with pytest.raises(ParameterError):
            EmpiricalPrior(g, np.ones(g.shape), np.zeros(g.shape), 1.0, 2)


class TestReconstruct:
    def setup_method(self):
        self.db = simulate_bump_database(100, BumpConfig(rate=10.0, n_y=32, n_x=32), seed=2)
        self.prior = estimate_empirical_prior(self.db)
        self.truth = simulate_bump_database(1, BumpConfig(rate=10.0, n_y=32, n_x=32), seed=99)[0]
        self.sd = 0.5
        self.y = add_noise(self.truth, GaussianNoise(self.sd), seed=5)
        self.sigma = self.sd / math.sqrt(2)

    def test_zero_weight_returns_data(self):
        out = ddbifs_reconstruct(self.y, self.prior, self.sigma, m=1e-14).image
        np.testing.assert_allclose(out, self.y, atol=1e-8)

    def test_huge_weight_returns_prior_mean(self):
        res = ddbifs_reconstruct(self.y, self.prior, self.sigma, m=1e12)
        g = res.field.grid
        off = ~g.origin_mask
        np.testing.assert_allclose(np.abs(res.field.values[off]), self.prior.mu[off], rtol=1e-6, atol=1e-9)
        # arguments still come from the data
        data = forward_transform(self.y).values
        nz = off & (np.abs(data) > 0) & ~g.self_conjugate
        np.testing.assert_allclose(np.angle(res.field.values[nz]), np.angle(data[nz]), atol=1e-9)

    def test_precision_weighted_average(self):
        m = 3.0
        res = ddbifs_reconstruct(self.y, self.prior, self.sigma, m=m)
        data = forward_transform(self.y).values
        iy, ix = res.field.grid.origin
        k = (iy + 2, ix - 5)
        r, mu, tau = abs(data[k]), self.prior.mu[k], self.prior.tau[k]
        expected = (r / self.sigma**2 + m * mu / tau**2) / (1 / self.sigma**2 + m / tau**2)
        assert abs(res.field.values[k]) == pytest.approx(expected, rel=1e-12)

    def test_linear_in_data_when_weight_zero_limit(self):
        # with the prior switched off the estimator is the identity, so it superposes
        a = self.y
        b = np.random.default_rng(3).normal(size=a.shape)
        f = lambda x: ddbifs_reconstruct(x, self.prior, self.sigma, m=0.0).image  # noqa: E731
        np.testing.assert_allclose(f(a + b), f(a) + f(b), atol=1e-10)

    def test_residual_variance_decreases_with_weight(self):
        reps = [add_noise(self.truth, GaussianNoise(self.sd), seed=100 + i) for i in range(60)]
        out = []
        # at large m the modulus is pinned to mu but the data argument still varies, so stop at 1
        for m in (0.0, 0.1, 1.0):
            stack = np.stack([ddbifs_reconstruct(y, self.prior, self.sigma, m=m).image for y in reps])
            out.append(stack.var(axis=0, ddof=1).mean())
        assert out[0] == pytest.approx(self.sd**2, rel=0.1)
        assert all(a > b for a, b in zip(out, out[1:]))

    def test_improves_rmse(self):
        plain = ddbifs_reconstruct(self.y, self.prior, self.sigma, m=0.0, truth=self.truth).diagnostics["rmse"]
        fitted = ddbifs_reconstruct(self.y, self.prior, self.sigma, m=1.0, truth=self.truth).diagnostics["rmse"]
        assert fitted < plain

    def test_shape_and_sigma_checks(self):
        with pytest.raises(DimensionError):
            ddbifs_reconstruct(np.zeros((16, 16)), self.prior, 1.0)
        with pytest.raises(ParameterError):
            ddbifs_reconstruct(self.y, self.prior, 0.0)


class TestPersistence:
    def test_round_trip(self, tmp_path, bumps):
        p = estimate_empirical_prior(bumps, m=2.5)
        path = tmp_path / "prior.raw"
        save_empirical_prior(p, path)
        q = load_empirical_prior(path)
        assert q.m == 2.5 and q.count == 200
        np.testing.assert_array_equal(q.mu, p.mu.astype(np.float32))
        np.testing.assert_array_equal(q.tau, p.tau.astype(np.float32))

    def test_wrong_kind(self, tmp_path):
        path = tmp_path / "x.raw"
        write_raw(path, np.zeros((2, 8, 8)))
        with pytest.raises(FormatError):
            load_empirical_prior(path)
