"""Reconstruction results and accuracy diagnostics."""

from dataclasses import dataclass
from dataclasses import field as dc_field
from typing import Optional

import numpy as np

from .exceptions import DimensionError
from .kspace import ComplexField, forward_transform

__all__ = ["ReconstructionResult", "metrics", "rmse", "region_means", "power_by_radius", "high_frequency_fraction"]


@dataclass(eq=False)
class ReconstructionResult:
    """Estimated image plus the Fourier field it came from and diagnostics."""

    image: np.ndarray
    field: Optional[ComplexField] = None
    diagnostics: dict = dc_field(default_factory=dict)


def _match(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse(estimate, truth):
    estimate, truth = _match(estimate, truth)
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))


def region_means(image, labels, names=None):
    """Mean of ``image`` over each integer label; keys are ``names[label]`` if given."""
    image, labels = _match(image, labels)
    labels = labels.astype(int)
    out = {}
    for lab in np.unique(labels):
        key = names.get(int(lab), str(int(lab))) if names else str(int(lab))
        out[key] = float(image[labels == lab].mean())
    return out


def power_by_radius(image, bin_width=1.0):
    """Mean Fourier power in radial bins; returns ``(bin_centres, mean_power)``."""
    f = forward_transform(image)
    r = f.grid.radius
    idx = np.floor(r / bin_width + 0.5).astype(int)
    p = np.abs(f.values) ** 2
    counts = np.bincount(idx.ravel())
    sums = np.bincount(idx.ravel(), weights=p.ravel())
    keep = counts > 0
    centres = np.arange(counts.size)[keep] * bin_width
    return centres, sums[keep] / counts[keep]


def high_frequency_fraction(image, cutoff=None):
    """Share of off-origin Fourier power at ``|k| > cutoff`` (default ``N/4``)."""
    f = forward_transform(image)
    g = f.grid
    if cutoff is None:
        cutoff = min(g.n_x, g.n_y) / 4
    p = np.abs(f.values) ** 2
    off = ~g.origin_mask
    total = p[off].sum()
    return float(p[off & (g.radius > cutoff)].sum() / total) if total > 0 else 0.0


def metrics(estimate, truth, labels=None, names=None):
    """RMSE, optional per-region means and the residual power profile."""
    estimate, truth = _match(estimate, truth)
    out = {"rmse": rmse(estimate, truth)}
    if labels is not None:
        out["region_means"] = region_means(estimate, labels, names)
    radii, power = power_by_radius(estimate - truth)
    out["residual_power_radius"] = radii
    out["residual_power"] = power
    return out
