"""
Data-driven BIFS: per-frequency priors estimated from a database of images.

Each k gets a truncated-Gaussian modulus prior whose mean and SD are the
sample mean and SD of the database moduli there. The prior counts as ``m``
pseudo-observations, and with a Gaussian modulus likelihood the MAP modulus
is the precision-weighted average of data and prior mean.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import _parallel
from .exceptions import DimensionError, EstimationError, FormatError, ParameterError
from .io import read_raw, write_raw
from .kspace import KGrid, _check_image, forward_transform, inverse_transform
from .map import apply_moduli, map_modulus_gaussian_conjugate
from .metrics import ReconstructionResult, metrics

__all__ = [
    "EmpiricalPrior",
    "estimate_empirical_prior",
    "ddbifs_reconstruct",
    "save_empirical_prior",
    "load_empirical_prior",
    "TAU_FLOOR_REL",
]

TAU_FLOOR_REL = 1e-6


@dataclass(frozen=True, eq=False)
class EmpiricalPrior:
    """Per-k modulus mean ``mu`` and SD ``tau`` (centered layout) and prior weight ``m``."""

    grid: KGrid
    mu: np.ndarray
    tau: np.ndarray
    m: float
    count: int

    def __post_init__(self):
        for name in ("mu", "tau"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != self.grid.shape or not np.all(np.isfinite(a)):
                raise DimensionError(f"{name} must be a finite array of shape {self.grid.shape}")
            object.__setattr__(self, name, a)
        if np.any(self.mu < 0) or np.any(self.tau <= 0):
            raise ParameterError("mu must be >= 0 and tau > 0")
        if not self.m >= 0:
            raise ParameterError("prior weight m must be nonnegative")

    def with_weight(self, m):
        return EmpiricalPrior(self.grid, self.mu, self.tau, float(m), self.count)


def _moduli(images, normalize):
    out = np.empty(images.shape)
    for i, img in enumerate(images):
        img = _check_image(img)
        if normalize:
            sd = img.std()
            img = (img - img.mean()) / (sd if sd > 0 else 1.0)
        out[i] = np.abs(np.fft.fftshift(np.fft.fft2(img, norm="ortho")))
    return out


def estimate_empirical_prior(db, m=1.0, normalize=False, threads=None):
    """Estimate ``mu_k`` and ``tau_k`` from a database of images.

    ``db`` is a sequence of equally sized images or a ``(count, n_y, n_x)``
    stack. ``tau`` is floored at ``1e-6`` times the grid mean of ``mu`` so a
    degenerate database cannot give infinite prior precision. With
    ``normalize`` each image is standardized to zero mean and unit SD first.
    """
    if isinstance(db, np.ndarray) and db.ndim == 3:
        stack = np.asarray(db, dtype=np.float64)
    else:
        imgs = [np.asarray(im, dtype=np.float64) for im in db]
        if len({im.shape for im in imgs}) > 1:
            raise DimensionError("database images differ in size")
        stack = np.stack(imgs) if imgs else np.empty((0, 0, 0))
    if stack.shape[0] < 2:
        raise EstimationError(f"need at least 2 database images, got {stack.shape[0]}")
    mods = np.empty(stack.shape)

    def work(sl):
        mods[sl] = _moduli(stack[sl], normalize)

    _parallel.run_chunks(work, stack.shape[0], threads, chunk=32)
    mu = mods.mean(axis=0)
    tau = mods.std(axis=0, ddof=1)
    floor = TAU_FLOOR_REL * float(mu.mean())
    if floor <= 0:
        floor = TAU_FLOOR_REL
    tau = np.maximum(tau, floor)
    grid = KGrid(stack.shape[2], stack.shape[1])
    return EmpiricalPrior(grid, mu, tau, float(m), int(stack.shape[0]))


def ddbifs_reconstruct(y, prior, sigma, m=None, truth=None, labels=None, label_names=None):
    """MAP reconstruction under an empirical prior; ``m`` overrides ``prior.m``.

    ``sigma`` is the per-component Fourier noise SD. The origin keeps its
    data value and every argument comes from the data.
    """
    t0 = time.perf_counter()
    data = forward_transform(y)
    g = data.grid
    if g.shape != prior.grid.shape:
        raise DimensionError(f"image shape {g.shape} does not match prior grid {prior.grid.shape}")
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    weight = prior.m if m is None else float(m)
    rep = g.half_plane & ~g.origin_mask
    moduli = map_modulus_gaussian_conjugate(
        np.abs(data.values[rep]), prior.mu[rep], prior.tau[rep], sigma, weight
    )
    post = apply_moduli(data, moduli, rep)
    image = inverse_transform(post)
    diag = {"seconds": time.perf_counter() - t0, "estimator": "ddbifs", "m": weight}
    if truth is not None:
        diag.update(metrics(image, truth, labels, label_names))
    return ReconstructionResult(image, post, diag)


def save_empirical_prior(prior, path):
    """Two float32 planes (``mu``, ``tau``) plus ``m`` and the source count in the header.

    float32 storage rounds the planes; reload gives the rounded values.
    """
    write_raw(path, np.stack([prior.mu, prior.tau]), kind="empirical_prior", m=repr(float(prior.m)), source_count=prior.count)


def load_empirical_prior(path):
    stack, meta = read_raw(path)
    if meta.get("kind") != "empirical_prior" or stack.shape[0] != 2:
        raise FormatError(f"{path}: not an empirical prior file")
    try:
        m = float(meta["m"])
        count = int(meta["source_count"])
    except (KeyError, ValueError):
        raise FormatError(f"{path}: header needs numeric m and source_count") from None
    grid = KGrid(stack.shape[2], stack.shape[1])
    tau = np.maximum(stack[1], np.finfo(np.float32).tiny)
    return EmpiricalPrior(grid, stack[0], tau, m, count)
