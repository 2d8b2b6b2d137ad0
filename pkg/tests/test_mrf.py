import math

import numpy as np
import pytest
from scipy import stats

from bifs.densities import PriorSpec
from bifs.exceptions import ConvergenceError, EstimationError, ParameterError
from bifs.kspace import KGrid, forward_transform
from bifs.mrf import (
    MRFSpec,
    acf_by_distance,
    expected_acf_by_distance,
    fit_bifs_to_mrf,
    igmrf_eigenvalues,
    igmrf_map_cg,
    igmrf_precision_dense,
    laplacian,
    mean_modulus_by_k,
    modulus_power_factor,
    pairwise_energy,
    simulate_igmrf,
    simulate_igmrf_batch,
)
from bifs.paramfn import Powered, RationalCubic
from bifs.sampling import sample_prior_images


def dft_basis(grid, kx, ky):
    y, x = np.mgrid[0 : grid.n_y, 0 : grid.n_x]
    return np.exp(2j * np.pi * (kx * x / grid.n_x + ky * y / grid.n_y)).ravel()


class TestEigen:
    def test_values(self):
        g = KGrid(8, 8)
        lam = igmrf_eigenvalues(g, 1.0)
        assert lam[g.origin] == 0
        assert lam[0, 0] == pytest.approx(8.0)  # (-N/2, -N/2)
        assert igmrf_eigenvalues(g, 2.5)[0, 0] == pytest.approx(20.0)

    def test_dense_eigenvectors(self):
        g = KGrid(8, 8)
        q = igmrf_precision_dense(8, 8, 1.3)
        lam = igmrf_eigenvalues(g, 1.3)
        for iy in range(8):
            for ix in range(8):
                v = dft_basis(g, g.kx[iy, ix], g.ky[iy, ix])
                np.testing.assert_allclose(q @ v, lam[iy, ix] * v, atol=1e-10)

    def test_dense_spectrum(self):
        g = KGrid(8, 8)
        q = igmrf_precision_dense(8, 8, 1.0)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(q)), np.sort(igmrf_eigenvalues(g).ravel()), atol=1e-10)

    def test_laplacian_matches_dense(self):
        x = np.random.default_rng(0).normal(size=(8, 8))
        np.testing.assert_allclose(laplacian(x).ravel(), igmrf_precision_dense(8, 8, 1.0) @ x.ravel(), atol=1e-12)


class TestSimulation:
    def test_moments_match_dense_pseudoinverse(self):
        # covariance of linear functionals, including the self-conjugate (Nyquist) patterns
        g = KGrid(8, 8)
        cov = np.linalg.pinv(igmrf_precision_dense(8, 8, 1.0))
        n = 40_000
        x = simulate_igmrf_batch(MRFSpec(1.0), g, n, seed=1).reshape(n, -1)
        yy, xx = np.mgrid[0:8, 0:8]
        rng = np.random.default_rng(2)
        funcs = [
            ((-1.0) ** (xx + yy)).ravel(),
            ((-1.0) ** xx).ravel(),
            ((-1.0) ** yy).ravel(),
            np.cos(2 * np.pi * xx / 8).ravel(),
        ] + [rng.normal(size=64) for _ in range(4)]
        for a in funcs:
            a = a - a.mean()
            expected = a @ cov @ a
            got = np.var(x @ a)
            assert got == pytest.approx(expected, rel=4 * math.sqrt(2 / n))
        assert np.abs(x.mean(axis=0)).max() < 5 * math.sqrt(np.diag(cov).max() / n)
        emp = np.cov(x[:, :8], rowvar=False)
        np.testing.assert_allclose(emp, cov[:8, :8], atol=0.03)

    def test_power_is_exponential(self):
        g = KGrid(16, 16)
        lam = igmrf_eigenvalues(g)
        x = simulate_igmrf_batch(MRFSpec(1.0), g, 5000, seed=3)
        p = np.abs(np.fft.fftshift(np.fft.fft2(x, norm="ortho"), axes=(1, 2))) ** 2
        iy, ix = g.origin
        for dy, dx in [(1, 0), (3, -5), (7, 7)]:
            k = (iy + dy, ix + dx)
            assert stats.kstest(p[:, k[0], k[1]], "expon", args=(0, 1 / lam[k])).pvalue > 0.01

    def test_energy_mean(self):
        n = 16
        x = simulate_igmrf_batch(MRFSpec(2.0), KGrid(n, n), 2000, seed=4)
        e = pairwise_energy(x, 2.0)
        # E[x'Qx]/2 = trace(Q Q^+)/2 = (N^2 - 1)/2
        expected = (n * n - 1) / 2
        assert e.mean() == pytest.approx(expected, abs=4 * e.std(ddof=1) / math.sqrt(e.size))

    def test_kappa_scaling(self):
        g = KGrid(32, 32)
        a = simulate_igmrf_batch(MRFSpec(1.0), g, 200, seed=5).std()
        b = simulate_igmrf_batch(MRFSpec(4.0), g, 200, seed=6).std()
        assert b / a == pytest.approx(0.5, rel=0.05)

    def test_zero_mean_and_deterministic(self):
        g = KGrid(16, 16)
        a = simulate_igmrf(MRFSpec(1.0), g, seed=8)
        assert abs(a.mean()) < 1e-12
        b = simulate_igmrf_batch(MRFSpec(1.0), g, 5, seed=8, threads=3)
        assert a.tobytes() == b[0].tobytes()


class TestFit:
    def test_modulus_factor(self):
        assert modulus_power_factor() == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-15)

    def test_round_trip_from_known_prior(self):
        g = KGrid(32, 32)
        gen = RationalCubic(2.0, 0.2, 0.5, 0.1, 0.01)
        prior = PriorSpec("sqrt_exponential", Powered(gen, 2.0))
        samples = sample_prior_images(prior, g, 400, seed=1)
        fitted = fit_bifs_to_mrf(samples)
        r = np.linspace(1.0, 15.0, 40)
        c = modulus_power_factor()
        # fitted mean modulus against the generating mean modulus
        np.testing.assert_allclose(c * np.sqrt(fitted.mean_at(r)), c * gen(r), rtol=0.05)

    def test_fit_on_igmrf_beats_inverse_power(self):
        g = KGrid(32, 32)
        x = simulate_igmrf_batch(MRFSpec(1.0), g, 300, seed=2)
        prior, det = fit_bifs_to_mrf(x, return_details=True)
        assert prior.family == "sqrt_exponential"
        assert det["report"].residual_norm < det["inverse_power_report"].residual_norm
        vals = prior.mean_fn.on_grid(g)
        for r in np.unique(g.radius[g.radius > 0]):
            assert np.ptp(vals[g.radius == r]) == 0

    def test_power_target(self):
        g = KGrid(16, 16)
        x = simulate_igmrf_batch(MRFSpec(1.0), g, 200, seed=3)
        prior = fit_bifs_to_mrf(x, target="power")
        per_k = mean_modulus_by_k(x, "power")
        iy, ix = g.origin
        assert prior.mean_at(3.0) == pytest.approx(per_k[iy, ix + 3], rel=0.25)

    def test_needs_samples(self):
        with pytest.raises(EstimationError):
            fit_bifs_to_mrf(np.zeros((10, 8, 8)))
        with pytest.raises(ParameterError):
            fit_bifs_to_mrf(np.random.default_rng(0).normal(size=(100, 8, 8)), target="median")


class TestCG:
    def test_small_kappa(self):
        y = np.random.default_rng(0).normal(size=(16, 16))
        np.testing.assert_allclose(igmrf_map_cg(y, MRFSpec(1e-12), 1.0), y, atol=1e-9)

    def test_constant(self):
        y = np.full((16, 16), 3.25)
        assert np.all(igmrf_map_cg(y, MRFSpec(5.0), 0.5) == 3.25)

    def test_dense_solve(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=(16, 16)) * 4
        s, k = 1.7, 0.8
        a = np.eye(256) / s**2 + igmrf_precision_dense(16, 16, k)
        direct = np.linalg.solve(a, y.ravel() / s**2).reshape(16, 16)
        np.testing.assert_allclose(igmrf_map_cg(y, MRFSpec(k), s), direct, atol=1e-6)

    def test_matches_fourier_filter(self):
        # on the torus the same system is diagonal in k
        rng = np.random.default_rng(2)
        y = rng.normal(size=(32, 32))
        s, k = 1.2, 2.0
        g = KGrid(32, 32)
        f = forward_transform(y)
        lam = igmrf_eigenvalues(g, k)
        from bifs.kspace import ComplexField, inverse_transform

        expected = inverse_transform(ComplexField(g, f.values / (1 + s * s * lam), hermitian=True))
        np.testing.assert_allclose(igmrf_map_cg(y, MRFSpec(k), s), expected, atol=1e-6)

    def test_iteration_cap(self):
        y = np.random.default_rng(3).normal(size=(16, 16))
        with pytest.raises(ConvergenceError) as exc:
            igmrf_map_cg(y, MRFSpec(10.0), 1.0, max_iter=1)
        assert exc.value.best.shape == y.shape


class TestAcf:
    def test_white_noise(self):
        x = np.random.default_rng(4).normal(size=(200, 32, 32))
        t = acf_by_distance(x, max_lag=8)
        assert t.variance == pytest.approx(np.mean(x.var(axis=(1, 2))), rel=1e-12)
        se = t.realization_spread / math.sqrt(t.n_images)
        assert np.all(np.abs(t.mean[1:]) < 3 * se[1:])

    def test_shift_invariant(self):
        x = np.random.default_rng(5).normal(size=(10, 32, 32))
        a = acf_by_distance(x, max_lag=6)
        b = acf_by_distance(np.roll(x, (3, -7), axis=(1, 2)), max_lag=6)
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-13)

    def test_igmrf_decreasing(self):
        x = simulate_igmrf_batch(MRFSpec(1.0), KGrid(64, 64), 100, seed=6)
        t = acf_by_distance(x, max_lag=10)
        assert np.all(np.diff(t.mean) < 0)

    def test_direction_spread_detects_anisotropy(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(200, 32, 32))
        stretched = x + np.roll(x, 1, axis=2) + np.roll(x, 2, axis=2)  # correlated along x only
        iso = acf_by_distance(x, max_lag=4)
        aniso = acf_by_distance(stretched, max_lag=4)
        assert aniso.direction_spread[1] > 10 * iso.direction_spread[1]

    def test_bad_input(self):
        with pytest.raises(EstimationError):
            acf_by_distance(np.zeros((1, 8, 8)))
        with pytest.raises(ParameterError):
            acf_by_distance(np.zeros((3, 8, 8)), max_lag=4)


class TestExpectedAcf:
    def test_sampled_acf_converges(self):
        g = KGrid(32, 32)
        lam = igmrf_eigenvalues(g)
        power = np.where(g.origin_mask, 0.0, 1 / np.where(g.origin_mask, 1.0, lam))
        exact = expected_acf_by_distance(power, max_lag=6)
        t = acf_by_distance(simulate_igmrf_batch(MRFSpec(1.0), g, 2000, seed=9), max_lag=6)
        se = t.realization_spread / math.sqrt(t.n_images)
        assert np.all(np.abs(t.mean - exact.mean) < 4 * se)

    def test_white_spectrum(self):
        exact = expected_acf_by_distance(np.ones((16, 16)), max_lag=4)
        # flat power minus the removed origin: variance 1 - 1/N, covariance -1/N elsewhere
        assert exact.mean[0] == pytest.approx(1 - 1 / 256, abs=1e-15)
        np.testing.assert_allclose(exact.mean[1:], -1 / 256, atol=1e-15)
        np.testing.assert_allclose(exact.direction_spread, 0, atol=1e-15)

    def test_fitted_bifs_no_more_anisotropic_than_igmrf(self):
        # the noise-free version of the band comparison in the acceptance suite
        g = KGrid(64, 64)
        lam = igmrf_eigenvalues(g)
        off = ~g.origin_mask
        p_mrf = np.zeros(g.shape)
        p_mrf[off] = 1 / lam[off]
        prior = fit_bifs_to_mrf(simulate_igmrf_batch(MRFSpec(1.0), g, 1000, seed=1))
        p_bifs = np.zeros(g.shape)
        p_bifs[off] = prior.mean_at(g.radius[off])
        a = expected_acf_by_distance(p_mrf, 10)
        b = expected_acf_by_distance(p_bifs, 10)
        np.testing.assert_allclose(b.mean[1:], a.mean[1:], rtol=0.1)
        assert np.all(b.direction_spread[5:] <= a.direction_spread[5:])
