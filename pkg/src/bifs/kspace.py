"""
k-space geometry and the unitary Fourier transform.

Images are plain 2-D float arrays of shape ``(n_y, n_x)``. Fourier data live in
a :class:`ComplexField` stored in *centered* layout: array element ``[iy, ix]``
holds frequency ``(k_x, k_y) = (ix - n_x/2, iy - n_y/2)``, so each axis runs over
``-N/2, ..., 0, ..., N/2 - 1`` and the zero frequency sits at ``[n_y/2, n_x/2]``.

The transform is orthonormal (``norm="ortho"``): total power is preserved and
white image noise of SD ``s`` gives Fourier coefficients with real and
imaginary parts of SD ``s / sqrt(2)`` each.

Half-plane convention
---------------------
A real image is determined by one representative of every conjugate pair
``{k, -k}`` (indices wrapped). The representatives kept by
:func:`hermitian_symmetrize` are

* every point with ``k_y > 0``;
* on the rows ``k_y = 0`` and ``k_y = -N_y/2`` (each its own reflection),
  the points with ``k_x >= 0`` plus ``k_x = -N_x/2``.

The four self-conjugate points ``(0,0), (-N_x/2,0), (0,-N_y/2),
(-N_x/2,-N_y/2)`` are representatives of themselves and must be real.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import DimensionError, DomainError, NumericalError, SymmetryError

__all__ = [
    "KGrid",
    "ComplexField",
    "forward_transform",
    "inverse_transform",
    "hermitian_symmetrize",
    "is_hermitian",
    "polar_decompose",
    "from_polar",
    "reflect",
]

IMAG_TOL = 1e-9


@dataclass(frozen=True)
class KGrid:
    """Geometry of a 2-D k-space.

    ``fov_x``/``fov_y`` are the physical field of view in arbitrary units and only
    enter through :attr:`physical_radius`.
    """

    n_x: int
    n_y: int
    fov_x: float = 1.0
    fov_y: float = 1.0

    def __post_init__(self):
        for name in ("n_x", "n_y"):
            n = getattr(self, name)
            if int(n) != n or n < 2 or n % 2:
                raise DimensionError(f"{name}={n} must be a positive even integer")
        if self.fov_x <= 0 or self.fov_y <= 0:
            raise DimensionError("field of view must be positive")

    @classmethod
    def for_image(cls, image, fov=(1.0, 1.0)):
        image = np.asarray(image)
        if image.ndim != 2:
            raise DimensionError(f"expected a 2-D image, got shape {image.shape}")
        n_y, n_x = image.shape
        return cls(n_x, n_y, fov[0], fov[1])

    @property
    def shape(self):
        return (self.n_y, self.n_x)

    @property
    def origin(self):
        """Array index of k = (0, 0)."""
        return (self.n_y // 2, self.n_x // 2)

    @cached_property
    def kx(self):
        return np.broadcast_to(np.arange(-(self.n_x // 2), self.n_x // 2)[None, :], self.shape)

    @cached_property
    def ky(self):
        return np.broadcast_to(np.arange(-(self.n_y // 2), self.n_y // 2)[:, None], self.shape)

    @cached_property
    def radius(self):
        """Index-space radius ``sqrt(k_x**2 + k_y**2)``."""
        return np.hypot(self.kx, self.ky)

    @cached_property
    def physical_radius(self):
        """Radius in cycles per unit length: ``sqrt((k_x/fov_x)**2 + (k_y/fov_y)**2)``."""
        return np.hypot(self.kx / self.fov_x, self.ky / self.fov_y)

    def radius_for(self, mode):
        if mode == "index":
            return self.radius
        if mode == "physical":
            return self.physical_radius
        raise DomainError(f"unknown radius mode {mode!r}")

    @cached_property
    def self_conjugate(self):
        """Boolean mask of the four points equal to their own reflection."""
        hx, hy = self.n_x // 2, self.n_y // 2
        mask = np.zeros(self.shape, dtype=bool)
        for iy in (0, hy):
            for ix in (0, hx):
                mask[iy, ix] = True
        return mask

    @cached_property
    def half_plane(self):
        """Boolean mask selecting one representative per conjugate pair."""
        kx, ky = self.kx, self.ky
        edge_row = (ky == 0) | (ky == -(self.n_y // 2))
        keep_x = (kx >= 0) | (kx == -(self.n_x // 2))
        return (ky > 0) | (edge_row & keep_x)

    @cached_property
    def origin_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.origin] = True
        return mask


def reflect(values):
    """Return ``values`` re-indexed at ``-k`` (wrapped), for centered arrays."""
    out = values[..., ::-1, ::-1]
    return np.roll(out, (1, 1), axis=(-2, -1))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex values over a :class:`KGrid` in centered layout."""

    grid: KGrid
    values: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise DimensionError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @property
    def symmetry_state(self):
        return "hermitian" if self.hermitian else "unconstrained"

    @property
    def modulus(self):
        return np.abs(self.values)

    @property
    def argument(self):
        return _argument(self.values)

    def power(self, include_origin=True):
        p = np.abs(self.values) ** 2
        if not include_origin:
            p = np.where(self.grid.origin_mask, 0.0, p)
        return float(p.sum())

    def with_values(self, values, hermitian=False):
        return ComplexField(self.grid, values, hermitian)


def _argument(values):
    # atan2 returns (-pi, pi]; fold pi into -pi and pin zero-modulus points to 0
    arg = np.angle(values)
    arg = np.where(arg >= np.pi, -np.pi, arg)
    return np.where(values == 0, 0.0, arg)


def _check_image(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {image.shape}")
    n_y, n_x = image.shape
    if n_x % 2 or n_y % 2 or n_x < 4 or n_y < 4:
        raise DimensionError(f"image dimensions must be even and >= 4, got {image.shape}")
    if not np.all(np.isfinite(image)):
        raise DomainError("image contains non-finite values")
    return image


def forward_transform(image, fov=(1.0, 1.0)):
    """Unitary 2-D FFT of a real image into a centered, Hermitian field."""
    image = _check_image(image)
    grid = KGrid.for_image(image, fov)
    values = np.fft.fftshift(np.fft.fft2(image, norm="ortho"))
    # a real image's transform is conjugate symmetric; enforce it bit-exactly
    field_ = ComplexField(grid, values, hermitian=False)
    return hermitian_symmetrize(field_)


def inverse_transform(field_):
    """Inverse of :func:`forward_transform`; requires a Hermitian field."""
    if not field_.hermitian:
        raise SymmetryError("inverse_transform needs a Hermitian field; call hermitian_symmetrize first")
    out = np.fft.ifft2(np.fft.ifftshift(field_.values), norm="ortho")
    power = np.sum(np.abs(field_.values) ** 2)
    residual = np.sum(out.imag**2)
    if residual > IMAG_TOL * max(power, np.finfo(float).tiny):
        raise NumericalError(f"imaginary residual {residual:.3g} exceeds tolerance (field power {power:.3g})")
    return np.ascontiguousarray(out.real)


def hermitian_symmetrize(field_):
    """Keep the half-plane representatives and mirror their conjugates.

    Self-conjugate points are projected onto their real parts.
    """
    grid = field_.grid
    values = field_.values
    mirrored = np.conj(reflect(values))
    out = np.where(grid.half_plane, values, mirrored)
    out = np.where(grid.self_conjugate, out.real + 0j, out)
    return ComplexField(grid, out, hermitian=True)


def is_hermitian(values, atol=0.0):
    """Check the conjugate-symmetry invariant on a centered array."""
    values = np.asarray(values)
    n_y, n_x = values.shape
    grid = KGrid(n_x, n_y)
    ok = np.abs(values - np.conj(reflect(values))) <= atol
    real = np.abs(values[grid.self_conjugate].imag) <= atol
    return bool(ok.all() and real.all())


def polar_decompose(field_):
    """Split a field into ``(modulus, argument)`` arrays; argument in [-pi, pi)."""
    return field_.modulus, field_.argument


def from_polar(modulus, argument, grid=None, hermitian=False):
    """Rebuild complex values from polar parts.

    Returns a :class:`ComplexField` when ``grid`` is given, else a bare array.
    Zero modulus always gives complex zero whatever the argument.
    """
    modulus = np.asarray(modulus, dtype=np.float64)
    if np.any(modulus < 0):
        raise DomainError("modulus must be nonnegative")
    values = modulus * np.exp(1j * np.asarray(argument, dtype=np.float64))
    values = np.where(modulus == 0, 0j, values)
    if grid is None:
        return values
    return ComplexField(grid, values, hermitian=hermitian)
