"""
First-order intrinsic Gaussian MRF on the torus, and its BIFS approximation.

The IG-MRF density is ``exp(-(kappa/2) sum_{i~j} (x_i - x_j)**2)`` over the
4-neighbour torus graph. Its precision ``kappa L`` is circulant, so the
unitary DFT diagonalizes it and each Fourier coefficient is independent with
``E|z_k|**2 = 1 / lambda_k``. That makes spectral simulation exact and lets a
radially-parameterized sqrt-exponential prior imitate the field.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _parallel
from .densities import PriorSpec
from .exceptions import ConvergenceError, DimensionError, EstimationError, NumericalError, ParameterError
from .kspace import KGrid, _check_image, reflect
from .paramfn import Powered, Scaled, fit_inverse_power, fit_rational_cubic

__all__ = [
    "MRFSpec",
    "AcfTable",
    "igmrf_eigenvalues",
    "igmrf_precision_dense",
    "simulate_igmrf",
    "simulate_igmrf_batch",
    "mean_modulus_by_k",
    "radial_bins",
    "fit_bifs_to_mrf",
    "modulus_power_factor",
    "laplacian",
    "igmrf_map_cg",
    "acf_by_distance",
    "expected_acf_by_distance",
    "pairwise_energy",
]


@dataclass(frozen=True)
class MRFSpec:
    kappa: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ParameterError("kappa must be positive")


def igmrf_eigenvalues(grid, kappa=1.0):
    """``2 kappa (2 - cos(2 pi k_x/N_x) - cos(2 pi k_y/N_y))`` in centered layout."""
    return 2.0 * kappa * (
        2.0 - np.cos(2 * np.pi * grid.kx / grid.n_x) - np.cos(2 * np.pi * grid.ky / grid.n_y)
    )


def igmrf_precision_dense(n_x, n_y, kappa=1.0):
    """Assembled ``kappa L`` for the torus 4-neighbour graph, pixels in row-major order."""
    n = n_x * n_y
    q = np.zeros((n, n))
    idx = np.arange(n).reshape(n_y, n_x)
    for shift, axis in ((1, 0), (1, 1)):
        nb = np.roll(idx, -shift, axis=axis)
        for a, b in zip(idx.ravel(), nb.ravel()):
            q[a, a] += kappa
            q[b, b] += kappa
            q[a, b] -= kappa
            q[b, a] -= kappa
    return q


def _rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) % 2**63, int(index)])))


def _spectral_draw(lam_rep, selfc, rng):
    k = lam_rep.size
    power = rng.exponential(1.0, k) / lam_rep
    arg = rng.uniform(-np.pi, np.pi, k)
    z = np.sqrt(power) * np.exp(1j * arg)
    # a real coefficient with E z^2 = 1/lambda keeps the unitary covariance exact there
    real = rng.standard_normal(k) / np.sqrt(lam_rep)
    return np.where(selfc, real + 0j, z)


def _to_image(grid, rep, values_rep):
    values = np.zeros(grid.shape, dtype=np.complex128)
    values[rep] = values_rep
    values = np.where(grid.half_plane, values, np.conj(reflect(values)))
    return np.fft.ifft2(np.fft.ifftshift(values), norm="ortho").real


def simulate_igmrf_batch(spec, grid, n, seed=0, threads=None):
    """``n`` zero-mean IG-MRF draws, shape ``(n, n_y, n_x)``.

    Draw ``i`` uses its own generator keyed by ``(seed, i)``, so the stack does
    not depend on how the work is split across threads.
    """
    if not isinstance(grid, KGrid):
        raise DimensionError("grid must be a KGrid")
    lam = igmrf_eigenvalues(grid, spec.kappa)
    rep = grid.half_plane & ~grid.origin_mask
    lam_rep = lam[rep]
    selfc = grid.self_conjugate[rep]
    out = np.empty((n,) + grid.shape)

    def work(sl):
        for i in range(sl.start, sl.stop):
            out[i] = _to_image(grid, rep, _spectral_draw(lam_rep, selfc, _rng(seed, i)))

    _parallel.run_chunks(work, n, threads, chunk=16)
    return out


def simulate_igmrf(spec, grid, seed=0):
    return simulate_igmrf_batch(spec, grid, 1, seed)[0]


def pairwise_energy(x, kappa=1.0):
    """``(kappa/2) sum_{i~j} (x_i - x_j)**2`` over torus neighbours; batched on leading axes."""
    x = np.asarray(x, dtype=np.float64)
    dx = x - np.roll(x, 1, axis=-1)
    dy = x - np.roll(x, 1, axis=-2)
    return 0.5 * kappa * (np.sum(dx**2, axis=(-2, -1)) + np.sum(dy**2, axis=(-2, -1)))


# -- fitting a BIFS prior -------------------------------------------------------------


@lru_cache(maxsize=1)
def modulus_power_factor():
    """``E[sqrt(P)] / sqrt(E[P])`` for exponential ``P``, by quadrature.

    Equal to ``Gamma(3/2) = sqrt(pi)/2``; the quadrature guards the closed form.
    """
    val, err = integrate.quad(lambda p: math.sqrt(p) * math.exp(-p), 0.0, np.inf, epsabs=1e-13, epsrel=1e-13)
    closed = math.sqrt(math.pi) / 2
    if abs(val - closed) > 1e-9:
        raise NumericalError(f"modulus/power factor check failed: quadrature {val!r} vs {closed!r}")
    return closed


def mean_modulus_by_k(samples, target="modulus"):
    """Per-k mean of ``|F x|`` (or ``|F x|**2``) over a stack of images, centered layout."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3:
        raise DimensionError("samples must be a (count, n_y, n_x) stack")
    for img in samples[:1]:
        _check_image(img)
    acc = np.zeros(samples.shape[1:])
    for img in samples:
        z = np.abs(np.fft.fftshift(np.fft.fft2(img, norm="ortho")))
        acc += z if target == "modulus" else z**2
    return acc / samples.shape[0]


def radial_bins(values, radius, bin_width=0.5, exclude_origin=True):
    """Average ``values`` within radius bins; returns ``(bin mean radius, bin mean value)``."""
    values = np.ravel(values)
    radius = np.ravel(radius)
    keep = radius > 0 if exclude_origin else np.ones(radius.shape, bool)
    idx = np.floor(radius[keep] / bin_width).astype(np.int64)
    counts = np.bincount(idx)
    used = counts > 0
    r_mean = np.bincount(idx, weights=radius[keep])[used] / counts[used]
    v_mean = np.bincount(idx, weights=values[keep])[used] / counts[used]
    return r_mean, v_mean


def fit_bifs_to_mrf(samples, target="modulus", bin_width=0.5, min_samples=100, return_details=False):
    """Fit a sqrt-exponential BIFS prior to a stack of IG-MRF (or any) samples.

    ``target="modulus"`` fits a rational cubic to the radially binned mean
    modulus ``g`` and converts to mean power ``m = (g / (sqrt(pi)/2))**2``;
    ``target="power"`` fits the binned mean power directly.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[0] < min_samples:
        raise EstimationError(f"need at least {min_samples} sample images, got {samples.shape[0] if samples.ndim == 3 else 0}")
    if target not in ("modulus", "power"):
        raise ParameterError(f"target must be 'modulus' or 'power', got {target!r}")
    grid = KGrid(samples.shape[2], samples.shape[1])
    per_k = mean_modulus_by_k(samples, target)
    radii, means = radial_bins(per_k, grid.radius, bin_width)
    report = fit_rational_cubic(radii, means, return_report=True)
    fn = report.fn
    if target == "modulus":
        c = modulus_power_factor()
        mean_power = Scaled(Powered(fn, 2.0), 1.0 / c**2)
    else:
        mean_power = fn
    prior = PriorSpec("sqrt_exponential", mean_power)
    if not return_details:
        return prior
    ip_report = fit_inverse_power(radii, means, return_report=True)
    return prior, {
        "radii": radii,
        "targets": means,
        "fit": fn,
        "report": report,
        "inverse_power_fit": ip_report.fn,
        "inverse_power_report": ip_report,
    }


# -- conjugate-gradient MAP baseline ---------------------------------------------------


def laplacian(x):
    """Torus graph Laplacian ``L x`` (4-neighbour); batched on leading axes."""
    return (
        4.0 * x
        - np.roll(x, 1, axis=-1)
        - np.roll(x, -1, axis=-1)
        - np.roll(x, 1, axis=-2)
        - np.roll(x, -1, axis=-2)
    )


def igmrf_map_cg(y, spec, sigma, tol=1e-8, max_iter=None):
    """MAP image under Gaussian noise and the IG-MRF prior, by conjugate gradients.

    Solves ``(I/sigma**2 + kappa L) x = y/sigma**2`` from ``x0 = y``; stops when
    ``||b - A x|| / ||b|| < tol``.
    """
    y = _check_image(y)
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    w = 1.0 / sigma**2
    kappa = spec.kappa

    def apply(v):
        return w * v + kappa * laplacian(v)

    b = w * y
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(y)
    cap = 10 * y.size if max_iter is None else max_iter
    x = y.copy()
    res = b - apply(x)
    p = res.copy()
    rr = float(np.vdot(res, res))
    for _ in range(cap + 1):
        if math.sqrt(rr) < tol * bnorm:
            return x
        ap = apply(p)
        alpha = rr / float(np.vdot(p, ap))
        x += alpha * p
        res -= alpha * ap
        rr_new = float(np.vdot(res, res))
        p = res + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(
        f"CG did not reach relative residual {tol} in {cap} iterations", best=x, location=None
    )


# -- autocovariance by distance --------------------------------------------------------


@dataclass(frozen=True)
class AcfTable:
    """Autocovariance binned by rounded Euclidean lag distance.

    ``mean``: average over lag vectors in the bin and over images.
    ``direction_spread``: SD across the bin's lag vectors of the image-averaged
    ACF after a linear trend in exact lag distance is removed.
    ``realization_spread``: SD across images of each image's bin average.
    """

    distance: np.ndarray
    mean: np.ndarray
    direction_spread: np.ndarray
    realization_spread: np.ndarray
    n_images: int

    @property
    def variance(self):
        return float(self.mean[0])

    def rows(self):
        return list(zip(self.distance.tolist(), self.mean.tolist(), self.direction_spread.tolist()))


def _autocov(images):
    x = images - images.mean(axis=(-2, -1), keepdims=True)
    f = np.fft.fft2(x)
    n = x.shape[-1] * x.shape[-2]
    return np.fft.ifft2(np.abs(f) ** 2).real / n


def _direction_spread(values, exact, bins, max_lag):
    # rounding to integer distance mixes radii within +-0.5 of the bin centre; a
    # straight-line fit on exact distance absorbs that, so the residual SD is
    # left to measure how the ACF varies with direction
    out = np.zeros(max_lag + 1)
    for d in range(1, max_lag + 1):
        sel = bins == d
        v, x = values[sel], exact[sel]
        if v.size <= 2 or np.ptp(x) == 0:
            out[d] = v.std(ddof=1) if v.size > 1 else 0.0
            continue
        coef = np.polyfit(x, v, 1)
        resid = v - np.polyval(coef, x)
        out[d] = math.sqrt(np.sum(resid**2) / (v.size - 2))
    return out


def _lag_geometry(nx, ny, max_lag):
    if max_lag >= min(nx, ny) // 2:
        raise ParameterError("max_lag must be below half the image size")
    lx = np.fft.fftfreq(nx, 1.0 / nx)
    ly = np.fft.fftfreq(ny, 1.0 / ny)
    exact = np.hypot(lx[None, :], ly[:, None])
    dist = np.rint(exact).astype(np.int64)
    sel = dist <= max_lag
    return sel, dist[sel], exact[sel]


def acf_by_distance(images, max_lag=10, chunk=64):
    """Circular autocovariance of mean-removed images, binned by ``round(|lag|)``."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] < 2:
        raise EstimationError("need a stack of at least 2 images")
    n, ny, nx = images.shape
    sel, bins, exact = _lag_geometry(nx, ny, max_lag)
    counts = np.bincount(bins, minlength=max_lag + 1)
    total = np.zeros(sel.sum())
    per_image = np.empty((n, max_lag + 1))
    for start in range(0, n, chunk):
        ac = _autocov(images[start : start + chunk])[:, sel]
        total += ac.sum(axis=0)
        for j, row in enumerate(ac):
            per_image[start + j] = np.bincount(bins, weights=row, minlength=max_lag + 1) / counts
    avg = total / n
    mean = np.bincount(bins, weights=avg, minlength=max_lag + 1) / counts
    direction = _direction_spread(avg, exact, bins, max_lag)
    return AcfTable(
        distance=np.arange(max_lag + 1, dtype=np.float64),
        mean=mean,
        direction_spread=direction,
        realization_spread=per_image.std(axis=0, ddof=1),
        n_images=n,
    )


def expected_acf_by_distance(power, max_lag=10):
    """The table :func:`acf_by_distance` converges to for a zero-mean stationary field.

    ``power`` is the expected unitary-FFT power per k in the centered layout
    (for the IG-MRF, ``1/lambda_k``). The origin is ignored, matching the mean
    removal. ``realization_spread`` is zero and ``n_images`` is 0.
    """
    power = np.array(power, dtype=np.float64)
    if power.ndim != 2:
        raise DimensionError(f"power must be 2-D, got shape {power.shape}")
    ny, nx = power.shape
    power[ny // 2, nx // 2] = 0.0
    sel, bins, exact = _lag_geometry(nx, ny, max_lag)
    ac = np.fft.ifft2(np.fft.ifftshift(power)).real[sel]
    counts = np.bincount(bins, minlength=max_lag + 1)
    return AcfTable(
        distance=np.arange(max_lag + 1, dtype=np.float64),
        mean=np.bincount(bins, weights=ac, minlength=max_lag + 1) / counts,
        direction_spread=_direction_spread(ac, exact, bins, max_lag),
        realization_spread=np.zeros(max_lag + 1),
        n_images=0,
    )
