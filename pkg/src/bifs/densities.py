"""
Per-frequency prior and likelihood densities.

Priors act on the modulus ``rho`` of the true Fourier coefficient at one k.
The argument prior is uniform on the circle everywhere, and the origin gets
an improper flat prior on both modulus and argument.

Likelihoods act on the observed modulus ``r`` (and optionally argument
``psi``) given the true ``rho`` (and ``theta``). ``sigma`` is always the SD of
each of the real and imaginary noise components in Fourier space.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfcx, i0e, i1e, log_ndtr

from .exceptions import DomainError, EstimationError, ParameterError
from .paramfn import ParamFn

__all__ = [
    "PriorSpec",
    "LikelihoodSpec",
    "PRIOR_FAMILIES",
    "LIKELIHOOD_FAMILIES",
    "log_i0",
    "bessel_ratio",
    "rician_logpdf",
    "rician_loglik",
    "rician_argument_logpdf",
    "gaussian_modulus_logpdf",
    "exponential_logpdf",
    "sqrt_exponential_logpdf",
    "trunc_gaussian_logpdf",
    "prior_logpdf",
    "image_sd_to_fourier_sigma",
    "estimate_noise_sigma",
]

PRIOR_FAMILIES = ("exponential", "sqrt_exponential", "trunc_gaussian")
LIKELIHOOD_FAMILIES = ("rician", "gaussian_modulus")
ARGUMENT_MODELS = ("fixed", "rician")

_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Modulus prior family plus its parameter functions.

    ``mean_fn`` is the exponential mean ``m(|k|)`` for ``"exponential"``, the
    mean *power* ``m(|k|)`` (mean of ``rho**2``) for ``"sqrt_exponential"``, and
    the location ``mu(|k|)`` for ``"trunc_gaussian"``. The truncated Gaussian
    scale is ``sd_fn`` when given, otherwise ``scale_ratio * mean_fn``.
    ``weight`` is the pseudo-observation count used by the conjugate solver.
    """

    family: str
    mean_fn: ParamFn
    sd_fn: Optional[ParamFn] = None
    scale_ratio: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.family not in PRIOR_FAMILIES:
            raise ParameterError(f"unknown prior family {self.family!r}; expected one of {PRIOR_FAMILIES}")
        if self.scale_ratio < 0 or self.weight <= 0:
            raise ParameterError("scale_ratio must be >= 0 and weight > 0")

    def mean_at(self, radius):
        return np.asarray(self.mean_fn._eval(np.asarray(radius, dtype=np.float64)))

    def sd_at(self, radius):
        radius = np.asarray(radius, dtype=np.float64)
        if self.sd_fn is not None:
            return np.asarray(self.sd_fn._eval(radius))
        return self.scale_ratio * self.mean_at(radius)

    def scale_at(self, radius):
        """Rough spread of the modulus prior, used to size search ranges."""
        m = self.mean_at(radius)
        if self.family == "exponential":
            return m
        if self.family == "sqrt_exponential":
            return np.sqrt(m)
        return m + self.sd_at(radius)

    def logpdf(self, rho, radius):
        m = self.mean_at(radius)
        if self.family == "exponential":
            return exponential_logpdf(rho, m)
        if self.family == "sqrt_exponential":
            return sqrt_exponential_logpdf(rho, m)
        return trunc_gaussian_logpdf(rho, m, self.sd_at(radius))

    def sample(self, radius, rng, size=None):
        """Draw moduli from the prior at the given radii."""
        m = np.asarray(self.mean_at(radius), dtype=np.float64)
        shape = np.shape(m) if size is None else size
        if self.family == "exponential":
            return rng.exponential(1.0, shape) * m
        if self.family == "sqrt_exponential":
            return np.sqrt(rng.exponential(1.0, shape) * m)
        from scipy.stats import truncnorm

        tau = np.asarray(self.sd_at(radius))
        u = rng.uniform(size=shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(tau > 0, -m / np.where(tau > 0, tau, 1.0), -np.inf)
            draw = truncnorm.ppf(u, a, np.inf, loc=m, scale=np.where(tau > 0, tau, 1.0))
        return np.where(tau > 0, draw, m)


@dataclass(frozen=True)
class LikelihoodSpec:
    """Noise model in Fourier space.

    ``argument="fixed"`` pins the posterior argument at the data argument
    (exact for a uniform prior and a likelihood symmetric in the argument);
    ``"rician"`` samples it from the Rician argument density instead.
    """

    family: str = "rician"
    sigma: float = 1.0
    argument: str = "fixed"

    def __post_init__(self):
        if self.family not in LIKELIHOOD_FAMILIES:
            raise ParameterError(f"unknown likelihood family {self.family!r}; expected one of {LIKELIHOOD_FAMILIES}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be finite and positive, got {self.sigma}")
        if self.argument not in ARGUMENT_MODELS:
            raise ParameterError(f"unknown argument model {self.argument!r}")

    def loglik(self, rho, r):
        """Log likelihood in ``rho`` up to terms constant in ``rho``."""
        if self.family == "rician":
            return rician_loglik(rho, r, self.sigma)
        return -((r - rho) ** 2) / (2 * self.sigma**2)


def _nonneg(name, x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError(f"{name} must be nonnegative")
    return x


def _positive(name, x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise DomainError(f"{name} must be positive")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def log_i0(z):
    """``log I_0(z)`` without overflow, via the exponentially scaled Bessel function."""
    z = np.abs(np.asarray(z, dtype=np.float64))
    return z + np.log(i0e(z))


def bessel_ratio(z):
    """``I_1(z) / I_0(z)``, stable for large ``z``."""
    z = np.asarray(z, dtype=np.float64)
    return i1e(z) / i0e(z)


def rician_logpdf(r, rho, sigma):
    """Log density of the observed modulus ``r`` given true modulus ``rho``."""
    r = _nonneg("r", r)
    rho = _nonneg("rho", rho)
    sigma = _positive("sigma", sigma)
    s2 = sigma**2
    with np.errstate(divide="ignore"):
        out = np.log(r / s2) - (r - rho) ** 2 / (2 * s2) + np.log(i0e(r * rho / s2))
    return _out(out)


def rician_loglik(rho, r, sigma):
    """Rician log likelihood as a function of ``rho``, dropping ``rho``-free terms."""
    s2 = sigma**2
    # centred form keeps values O(1) near the mode, which matters for argmax precision
    return -((rho - r) ** 2) / (2 * s2) + np.log(i0e(r * rho / s2))


def rician_argument_logpdf(psi, rho, theta, sigma):
    """Log density of the observed argument ``psi`` given ``(rho, theta)``.

    Uses ``int_{-inf}^{a} exp(-z**2/2) dz = sqrt(2 pi) Phi(a)``.
    """
    rho = _nonneg("rho", rho)
    sigma = _positive("sigma", sigma)
    psi = np.asarray(psi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    a = rho * np.cos(psi - theta) / sigma
    snr2 = (rho / sigma) ** 2
    # log[1 + sqrt(2pi) a exp(a^2/2) Phi(a)] - snr2/2 - log(2pi), arranged to avoid overflow
    big = a > 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # exp(a^2/2) Phi(a) == erfcx(-a/sqrt2) / 2, finite for every a <= 0
        na = np.where(big, 0.0, a)
        small_branch = np.log1p(math.sqrt(math.pi / 2) * na * erfcx(-na / math.sqrt(2)))
        # for a > 0: log(sqrt(2pi) a Phi(a)) + a^2/2 + log1p(exp(-a^2/2) / (sqrt(2pi) a Phi(a)))
        la = np.where(big, a, 1.0)
        lead = 0.5 * _LOG_2PI + np.log(la) + log_ndtr(la) + la**2 / 2
        large_branch = lead + np.log1p(np.exp(-(la**2) / 2 - (0.5 * _LOG_2PI + np.log(la) + log_ndtr(la))))
    bracket = np.where(big, large_branch, small_branch)
    return _out(bracket - snr2 / 2 - _LOG_2PI)


def gaussian_modulus_logpdf(r, rho, sigma):
    sigma = _positive("sigma", sigma)
    r = np.asarray(r, dtype=np.float64)
    return _out(-((r - rho) ** 2) / (2 * sigma**2) - np.log(sigma) - 0.5 * _LOG_2PI)


def exponential_logpdf(rho, m):
    if not np.all(np.asarray(m) > 0):
        _raise_param("exponential mean m must be positive")
    return _out(-np.asarray(rho, dtype=np.float64) / m - np.log(m))


def sqrt_exponential_logpdf(rho, m):
    """Density of ``sqrt(X)`` with ``X ~ Exponential(mean m)``: ``(2 rho / m) exp(-rho**2 / m)``."""
    if not np.all(np.asarray(m) > 0):
        _raise_param("sqrt-exponential mean power m must be positive")
    rho = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return _out(np.log(2 * rho / m) - rho**2 / m)


def trunc_gaussian_logpdf(rho, mu, tau):
    """Gaussian ``N(mu, tau**2)`` renormalized to ``[0, inf)``."""
    if not np.all(np.asarray(tau) > 0):
        _raise_param("truncated-Gaussian sd must be positive")
    rho = np.asarray(rho, dtype=np.float64)
    z = (rho - mu) / tau
    return _out(-0.5 * z**2 - np.log(tau) - 0.5 * _LOG_2PI - log_ndtr(np.asarray(mu) / tau))


def _raise_param(msg):
    raise ParameterError(msg)


def prior_logpdf(spec, rho, k, grid=None):
    """Prior log density of modulus ``rho`` at grid point ``k = (k_x, k_y)``.

    The origin carries an improper flat prior; its log density is 0 by convention.
    ``grid`` is needed only for physical-radius parameter functions.
    """
    kx, ky = k
    if kx == 0 and ky == 0:
        return _out(np.zeros_like(np.asarray(rho, dtype=np.float64)))
    if spec.mean_fn.radius_mode == "physical":
        if grid is None:
            raise DomainError("physical-radius prior needs the grid for its field of view")
        radius = math.hypot(kx / grid.fov_x, ky / grid.fov_y)
    else:
        radius = math.hypot(kx, ky)
    return spec.logpdf(rho, radius)


def image_sd_to_fourier_sigma(sd):
    """White image noise SD -> per-component Fourier SD under the unitary FFT."""
    return float(sd) / math.sqrt(2.0)


def estimate_noise_sigma(image, noise_mask=None, min_pixels=100):
    """Fourier-domain noise scale from pixels known to contain only noise.

    Returns the per-component ``sigma`` for the Rician likelihood: the masked
    pixels' sample SD divided by ``sqrt(2)``.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.ones(image.shape, dtype=bool) if noise_mask is None else np.asarray(noise_mask, dtype=bool)
    if mask.shape != image.shape:
        raise EstimationError("mask shape does not match image")
    n = int(mask.sum())
    if n < min_pixels:
        raise EstimationError(f"noise mask selects {n} pixels; need at least {min_pixels}")
    return image_sd_to_fourier_sigma(np.std(image[mask], ddof=1))
