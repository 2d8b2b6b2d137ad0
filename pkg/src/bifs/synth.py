"""Synthetic inputs: additive noise, a two-tissue phantom and random bump fields."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import DimensionError, DomainError, ParameterError

__all__ = [
    "GaussianNoise",
    "StudentTNoise",
    "add_noise",
    "noise_sd_for_range",
    "make_phantom",
    "PHANTOM_LEVELS",
    "PHANTOM_NAMES",
    "BumpConfig",
    "simulate_bumps",
    "simulate_bump_database",
    "demo_scene",
]

PHANTOM_LEVELS = {"GM": 20.0, "WM": 10.0, "CSF": 0.0}
PHANTOM_NAMES = {2: "GM", 1: "WM", 0: "CSF"}


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


@dataclass(frozen=True)
class GaussianNoise:
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DomainError("Gaussian noise sd must be positive")

    def draw(self, rng, shape):
        return rng.normal(0.0, self.sd, shape)


@dataclass(frozen=True)
class StudentTNoise:
    """Student-t noise rescaled so its SD is ``sd`` (needs ``df > 2``)."""

    df: float
    sd: float

    def __post_init__(self):
        if not self.df > 2:
            raise DomainError(f"Student-t noise needs df > 2 for a finite SD, got {self.df}")
        if not self.sd > 0:
            raise DomainError("Student-t noise sd must be positive")

    def draw(self, rng, shape):
        return rng.standard_t(self.df, shape) * self.sd * math.sqrt((self.df - 2) / self.df)


def add_noise(image, model, seed=0):
    image = np.asarray(image, dtype=np.float64)
    return image + model.draw(_rng(seed), image.shape)


def noise_sd_for_range(image, fraction=1.0 / 3.0):
    """Noise SD equal to ``fraction`` of the image's min-max range."""
    image = np.asarray(image, dtype=np.float64)
    return fraction * float(image.max() - image.min())


def make_phantom(n_y=128, n_x=None, ribbon_width=None, n_sulci=24, sulcus_depth=0.4):
    """Head-like phantom: a folded GM ribbon (20) around WM (10) on a 0 background.

    The head is an ellipse cut by ``n_sulci`` thin radial slits reaching
    ``sulcus_depth`` of the way in from the edge (varied a little per slit).
    GM is every head pixel within ``ribbon_width`` pixels of a non-head pixel
    (default ``3 * n / 128``), so the ribbon lines the outside and both banks
    of every slit and stays thin at any resolution. Background and slits
    share the CSF label. Returns ``(image, labels)`` with labels 0 = CSF,
    1 = WM, 2 = GM (see ``PHANTOM_NAMES``).
    """
    n_x = n_y if n_x is None else n_x
    if min(n_x, n_y) < 64:
        raise DimensionError("phantom needs at least 64 pixels per side")
    n = min(n_x, n_y)
    w = 3.0 * n / 128 if ribbon_width is None else float(ribbon_width)
    if w <= 0:
        raise ParameterError("ribbon_width must be positive")
    yy, xx = np.mgrid[0:n_y, 0:n_x].astype(np.float64)
    ox, oy = xx - (n_x - 1) / 2, yy - (n_y - 1) / 2
    ex, ey = ox / (0.42 * n_x), oy / (0.36 * n_y)
    rr = np.hypot(ex, ey)
    head = rr <= 1.0 + 0.04 * np.cos(2 * np.arctan2(ey, ex))
    half_width = 0.6 * n / 128
    for j in range(n_sulci):
        a = 2 * np.pi * (j + ((7 * j) % 3) / 6) / n_sulci
        across = np.abs(-ox * np.sin(a) + oy * np.cos(a))
        along = ox * np.cos(a) + oy * np.sin(a)
        inner = 1.0 - sulcus_depth * (1.0 + 0.3 * np.sin(3 * j))
        head &= ~((across <= half_width) & (along > 0) & (rr >= inner))
    depth = ndimage.distance_transform_edt(head)
    gm = head & (depth <= w)
    labels = np.zeros((n_y, n_x), dtype=np.int64)
    labels[head & ~gm] = 1
    labels[gm] = 2
    image = np.zeros((n_y, n_x))
    image[labels == 1] = PHANTOM_LEVELS["WM"]
    image[labels == 2] = PHANTOM_LEVELS["GM"]
    return image, labels


def demo_scene(n=128):
    """Smooth blobs plus sharp bars and a disc; a stand-in for natural test photographs."""
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64) / n
    img = 40 * np.exp(-((xx - 0.3) ** 2 + (yy - 0.35) ** 2) / 0.02)
    img += 25 * np.exp(-((xx - 0.7) ** 2 + (yy - 0.6) ** 2) / 0.05)
    img += 30 * (np.hypot(xx - 0.65, yy - 0.25) < 0.12)
    bars = (np.floor(xx * 24) % 2 == 0) & (yy > 0.7) & (yy < 0.9) & (xx > 0.1) & (xx < 0.5)
    img += 20 * bars
    return img


@dataclass(frozen=True)
class BumpConfig:
    """Random Gaussian-bump field on a torus.

    Bump count is Poisson with mean ``rate``. Each bump has a uniform position,
    a peak height from ``intensity``, per-axis SDs from ``sd`` (pixels) and a
    correlation in ``(-1, 0]``, which tilts every bump the same way on
    average and makes the field anisotropic.
    """

    rate: float = 10.0
    n_y: int = 64
    n_x: int = 64
    intensity: tuple = (0.5, 1.5)
    sd: tuple = (2.0, 8.0)

    def __post_init__(self):
        if not self.rate > 0:
            raise ParameterError("bump rate must be positive")
        if not (0 < self.sd[0] <= self.sd[1]) or self.intensity[0] > self.intensity[1]:
            raise ParameterError("bump sd and intensity ranges must be ordered, sd > 0")


def simulate_bumps(cfg=BumpConfig(), seed=0):
    rng = _rng(seed)
    count = int(rng.poisson(cfg.rate))
    yy, xx = np.mgrid[0 : cfg.n_y, 0 : cfg.n_x].astype(np.float64)
    out = np.zeros((cfg.n_y, cfg.n_x))
    for _ in range(count):
        px, py = rng.uniform(0, cfg.n_x), rng.uniform(0, cfg.n_y)
        height = rng.uniform(*cfg.intensity)
        sx, sy = rng.uniform(*cfg.sd), rng.uniform(*cfg.sd)
        corr = -rng.uniform(0.0, 1.0)
        # nearest periodic image of each pixel relative to the bump centre
        ddx = (xx - px + cfg.n_x / 2) % cfg.n_x - cfg.n_x / 2
        ddy = (yy - py + cfg.n_y / 2) % cfg.n_y - cfg.n_y / 2
        u, v = ddx / sx, ddy / sy
        q = (u * u - 2 * corr * u * v + v * v) / (1 - corr * corr)
        out += height * np.exp(-0.5 * q)
    return out


def simulate_bump_database(n, cfg=BumpConfig(), seed=0):
    """``n`` independent bump fields; image ``i`` is seeded from ``(seed, i)``."""
    base = np.random.SeedSequence(int(seed) % 2**63)
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in base.spawn(n)]
    return np.stack([simulate_bumps(cfg, s) for s in seeds])
