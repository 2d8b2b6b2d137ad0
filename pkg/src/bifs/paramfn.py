"""
Parameter functions: maps from k-space radius to a prior parameter value.

Every function is an immutable object evaluated with ``fn(radius)`` on scalars
or arrays. ``radius_mode`` selects whether :meth:`ParamFn.on_grid` feeds it the
index radius or the physical radius (cycles per unit field of view); the
latter keeps a prior fixed across image resolutions.
"""

from dataclasses import MISSING, dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .exceptions import DomainError, FitError, ParameterError, ScalingError

__all__ = [
    "ParamFn",
    "InversePower",
    "SmoothedBand",
    "RationalCubic",
    "Mixture",
    "EmpiricalTable",
    "Scaled",
    "Powered",
    "Constant",
    "mix",
    "scale_to_data_power",
    "data_power_scale",
    "fit_rational_cubic",
    "fit_inverse_power",
    "FitReport",
    "to_dict",
    "from_dict",
]


class ParamFn:
    """Base class; subclasses implement :meth:`_eval` on float arrays."""

    radius_mode = "index"

    def __call__(self, radius):
        r = np.asarray(radius, dtype=np.float64)
        if np.any(r < 0):
            raise DomainError("radius must be nonnegative")
        out = self._eval(r)
        return float(out) if np.ndim(out) == 0 else out

    def _eval(self, r):
        raise NotImplementedError

    def on_grid(self, grid, include_origin=False):
        """Evaluate over a :class:`~bifs.kspace.KGrid`; origin set to NaN unless requested."""
        r = grid.radius_for(self.radius_mode)
        if include_origin:
            return np.asarray(self._eval(r), dtype=np.float64)
        out = np.full(grid.shape, np.nan)
        off = ~grid.origin_mask
        out[off] = self._eval(r[off])
        return out

    def scaled(self, factor):
        return Scaled(self, float(factor))


@dataclass(frozen=True)
class Constant(ParamFn):
    value: float
    radius_mode: str = "index"

    def _eval(self, r):
        return np.full_like(r, float(self.value))


@dataclass(frozen=True)
class InversePower(ParamFn):
    """``a / radius**b``; undefined at the origin."""

    a: float
    b: float
    radius_mode: str = "index"

    def __post_init__(self):
        if self.a <= 0 or self.b < 0:
            raise ParameterError(f"InversePower needs a > 0 and b >= 0, got a={self.a}, b={self.b}")

    def _eval(self, r):
        if np.any(r == 0):
            raise DomainError("InversePower is undefined at radius 0")
        return self.a / r**self.b


@dataclass(frozen=True)
class SmoothedBand(ParamFn):
    """Indicator of ``[r_lo, r_hi]`` convolved with a Gaussian of SD ``smooth_sd`` in radius."""

    r_lo: float
    r_hi: float
    smooth_sd: float = 0.0
    radius_mode: str = "index"

    def __post_init__(self):
        if not (0 <= self.r_lo < self.r_hi) or self.smooth_sd < 0:
            raise ParameterError(f"bad band ({self.r_lo}, {self.r_hi}, sd={self.smooth_sd})")

    def _eval(self, r):
        if self.smooth_sd == 0:
            return ((r >= self.r_lo) & (r <= self.r_hi)).astype(np.float64)
        s = self.smooth_sd
        return ndtr((r - self.r_lo) / s) - ndtr((r - self.r_hi) / s)


@dataclass(frozen=True)
class RationalCubic(ParamFn):
    """``a0 / (a1 + a2 r + a3 r**2 + a4 r**3)``."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float
    radius_mode: str = "index"

    @property
    def coefficients(self):
        return (self.a0, self.a1, self.a2, self.a3, self.a4)

    def denominator(self, r):
        return self.a1 + r * (self.a2 + r * (self.a3 + r * self.a4))

    def _eval(self, r):
        den = self.denominator(r)
        if np.any(den <= 0):
            raise DomainError("rational-cubic denominator is not positive over the requested radii")
        return self.a0 / den


@dataclass(frozen=True)
class Scaled(ParamFn):
    fn: ParamFn
    factor: float

    def __post_init__(self):
        if not self.factor >= 0:
            raise ParameterError("scale factor must be nonnegative")

    @property
    def radius_mode(self):
        return self.fn.radius_mode

    def _eval(self, r):
        return self.factor * self.fn._eval(r)

    def scaled(self, factor):
        return Scaled(self.fn, self.factor * float(factor))


@dataclass(frozen=True)
class Powered(ParamFn):
    """``fn(r) ** exponent``; turns a fitted mean modulus into a mean power, for instance."""

    fn: ParamFn
    exponent: float

    def __post_init__(self):
        if not self.exponent > 0:
            raise ParameterError("exponent must be positive")

    @property
    def radius_mode(self):
        return self.fn.radius_mode

    def _eval(self, r):
        return np.asarray(self.fn._eval(r), dtype=np.float64) ** self.exponent


@dataclass(frozen=True)
class Mixture(ParamFn):
    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), f) for w, f in self.components)
        if not comps:
            raise DomainError("mixture needs at least one component")
        if any(w < 0 for w, _ in comps) or not any(w > 0 for w, _ in comps):
            raise DomainError("mixture weights must be >= 0 with at least one positive")
        modes = {f.radius_mode for _, f in comps}
        if len(modes) > 1:
            raise ParameterError("mixture components must share a radius mode")
        object.__setattr__(self, "components", comps)

    @property
    def radius_mode(self):
        return self.components[0][1].radius_mode

    def _eval(self, r):
        total = np.zeros_like(r)
        for w, f in self.components:
            if w > 0:
                total = total + w * f._eval(r)
        return total


@dataclass(frozen=True, eq=False)
class EmpiricalTable(ParamFn):
    """Tabulated values, linearly interpolated in radius, constant beyond the ends."""

    radii: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    radius_mode: str = "index"

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=np.float64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if radii.size == 0 or radii.shape != values.shape:
            raise ParameterError("radii and values must be equal-length, non-empty")
        if np.any(values < 0):
            raise ParameterError("table values must be nonnegative")
        order = np.argsort(radii, kind="stable")
        object.__setattr__(self, "radii", radii[order])
        object.__setattr__(self, "values", values[order])

    def _eval(self, r):
        return np.interp(r, self.radii, self.values)


def mix(components):
    """Weighted sum of parameter functions: ``[(weight, fn), ...]``."""
    return Mixture(tuple(components))


def data_power_scale(fn, data):
    """Scalar ``s`` with ``sum_{k != 0} (s fn(|k|))**2 == sum_{k != 0} |F y_k|**2``."""
    grid = data.grid
    off = ~grid.origin_mask
    target = np.sum(np.abs(data.values[off]) ** 2)
    if target <= 0:
        raise ScalingError("data has no power away from the origin")
    vals = fn._eval(grid.radius_for(fn.radius_mode)[off])
    model = np.sum(vals**2)
    if not model > 0:
        raise ScalingError("parameter function is identically zero away from the origin")
    return float(np.sqrt(target / model))


def scale_to_data_power(fn, data):
    """Return ``fn`` rescaled so its off-origin power matches the data's."""
    return fn.scaled(data_power_scale(fn, data))


@dataclass
class FitReport:
    fn: ParamFn
    residual_norm: float
    nfev: int
    success: bool
    message: str = ""


def _rc_denominator(c, r):
    return c[0] + r * (c[1] + r * (c[2] + r * c[3]))


def fit_rational_cubic(radii, targets=None, max_nfev=5000, return_report=False):
    """Least-squares fit of a :class:`RationalCubic` to ``(radius, value)`` samples.

    The numerator is pinned to the largest target (the coefficients are only
    defined up to a common factor) and the four denominator coefficients are
    fitted by a trust-region Gauss-Newton solver. The constant term is kept
    nonnegative; the others may take either sign, but any step that would make
    the denominator nonpositive somewhere on ``[0, max radius]`` is rejected,
    so the fitted function is finite and positive over the whole sampled
    range. Several starting points are tried and the best fit is kept.

    Raises :class:`FitError`, carrying the best-so-far function, when no start
    converges within ``max_nfev`` evaluations.
    """
    if targets is None:
        pairs = np.asarray(radii, dtype=np.float64)
        radii, targets = pairs[:, 0], pairs[:, 1]
    r = np.asarray(radii, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if r.size != y.size or np.unique(r).size < 5:
        raise ParameterError("need at least 5 samples with distinct radii")
    if np.any(y < 0) or np.any(r < 0):
        raise ParameterError("radii and targets must be nonnegative")

    a0 = float(y.max()) if y.max() > 0 else 1.0
    rmax = float(r.max()) if r.max() > 0 else 1.0
    natural = np.array([1.0, 1.0 / rmax, 1.0 / rmax**2, 1.0 / rmax**3])
    check = np.union1d(np.linspace(0.0, rmax, 1025), r)
    y_n = y / a0
    penalty = np.full(r.size, 1e6)

    def resid(u):
        c = u * natural
        if _rc_denominator(c, check).min() <= 0:
            return penalty
        return 1.0 / _rc_denominator(c, r) - y_n

    def jac(u):
        c = u * natural
        den = _rc_denominator(c, r)
        return np.stack([-(r**j) * natural[j] / den**2 for j in range(4)], axis=1)

    # a near-constant start plus starts led by each power-law degree 1..3
    starts = [np.array([1.0, 1e-6, 1e-6, 1e-6])]
    for deg in (1, 2, 3):
        u = np.full(4, 1e-3)
        u[0] = 1e-2
        u[deg] = 1.0
        starts.append(u)

    best = None
    for u0 in starts:
        res = optimize.least_squares(
            resid,
            u0,
            jac=jac,
            bounds=([0.0, -np.inf, -np.inf, -np.inf], np.inf),
            method="trf",
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=max_nfev,
        )
        if best is None or res.cost < best.cost:
            best = res
    c = best.x * natural
    fn = RationalCubic(a0, *map(float, c))
    report = FitReport(fn, float(a0 * np.sqrt(2 * best.cost)), int(best.nfev), best.status > 0, best.message)
    if best.status <= 0:
        raise FitError(f"rational-cubic fit did not converge: {best.message}", params=fn)
    return report if return_report else fn


def fit_inverse_power(radii, targets, return_report=False):
    """Least-squares fit of ``a / r**b`` (reference fit for comparisons)."""
    r = np.asarray(radii, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if np.any(r <= 0):
        raise FitError("inverse-power fit needs positive radii")
    pos = y > 0
    b0, la0 = np.polyfit(np.log(r[pos]), np.log(y[pos]), 1) if pos.sum() >= 2 else (0.0, 0.0)
    res = optimize.least_squares(
        lambda t: np.exp(t[0]) / r ** t[1] - y, [la0, max(-b0, 0.0)], bounds=([-np.inf, 0], [np.inf, np.inf])
    )
    fn = InversePower(float(np.exp(res.x[0])), float(res.x[1]))
    report = FitReport(fn, float(np.sqrt(2 * res.cost)), int(res.nfev), res.status > 0, res.message)
    return report if return_report else fn


# -- flat key/value serialization -----------------------------------------------

_KINDS = {
    "inverse_power": InversePower,
    "smoothed_band": SmoothedBand,
    "rational_cubic": RationalCubic,
    "constant": Constant,
}


def to_dict(fn, prefix=""):
    """Flatten a parameter function into ``{key: str}`` pairs (see :func:`from_dict`)."""
    p = prefix
    out = {}
    if isinstance(fn, Scaled):
        out[p + "kind"] = "scaled"
        out[p + "factor"] = repr(fn.factor)
        out.update(to_dict(fn.fn, p + "inner."))
        return out
    if isinstance(fn, Powered):
        out[p + "kind"] = "powered"
        out[p + "exponent"] = repr(fn.exponent)
        out.update(to_dict(fn.fn, p + "inner."))
        return out
    if isinstance(fn, Mixture):
        out[p + "kind"] = "mixture"
        out[p + "n"] = str(len(fn.components))
        for i, (w, f) in enumerate(fn.components):
            out[f"{p}{i}.weight"] = repr(w)
            out.update(to_dict(f, f"{p}{i}."))
        return out
    if isinstance(fn, EmpiricalTable):
        out[p + "kind"] = "empirical_table"
        out[p + "radii"] = " ".join(repr(float(v)) for v in fn.radii)
        out[p + "values"] = " ".join(repr(float(v)) for v in fn.values)
        out[p + "radius_mode"] = fn.radius_mode
        return out
    for kind, cls in _KINDS.items():
        if type(fn) is cls:
            out[p + "kind"] = kind
            for name in cls.__dataclass_fields__:
                value = getattr(fn, name)
                out[p + name] = value if isinstance(value, str) else repr(float(value))
            return out
    raise ParameterError(f"cannot serialize {type(fn).__name__}")


def from_dict(d, prefix=""):
    """Inverse of :func:`to_dict`. Raises ``ParameterError`` naming the bad key."""
    p = prefix

    def get(key, default=None):
        full = p + key
        if full in d:
            return d[full]
        if default is not None:
            return default
        raise ParameterError(f"missing key {full!r}")

    def num(key, default=None):
        raw = get(key, default)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ParameterError(f"key {p + key!r}: expected a number, got {raw!r}") from None

    kind = get("kind")
    if kind == "scaled":
        return Scaled(from_dict(d, p + "inner."), num("factor"))
    if kind == "powered":
        return Powered(from_dict(d, p + "inner."), num("exponent"))
    if kind == "mixture":
        n = int(num("n"))
        return Mixture(tuple((num(f"{i}.weight"), from_dict(d, f"{p}{i}.")) for i in range(n)))
    if kind == "empirical_table":
        radii = [float(v) for v in get("radii").split()]
        values = [float(v) for v in get("values").split()]
        return EmpiricalTable(np.array(radii), np.array(values), get("radius_mode", "index"))
    if kind not in _KINDS:
        raise ParameterError(f"key {p + 'kind'!r}: unknown parameter function kind {kind!r}")
    cls = _KINDS[kind]
    kwargs = {}
    for name, f in cls.__dataclass_fields__.items():
        if name == "radius_mode":
            kwargs[name] = get(name, "index")
        else:
            kwargs[name] = num(name, None if f.default is MISSING else f.default)
    return cls(**kwargs)
