"""
Per-frequency MAP solvers and the full-image MAP reconstruction.

Each k is solved independently. The modulus solvers accept scalars or arrays
and work elementwise; every element iterates until its own convergence, so
a value never depends on which other elements shared its batch.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _parallel
from .densities import LikelihoodSpec, PriorSpec, bessel_ratio, rician_loglik
from .exceptions import ConvergenceError, DomainError, NumericalError, ParameterError
from .kspace import ComplexField, forward_transform, hermitian_symmetrize, inverse_transform
from .metrics import ReconstructionResult, metrics

__all__ = [
    "MapConfig",
    "map_modulus_exponential",
    "map_modulus_sqexp",
    "map_modulus_gaussian_conjugate",
    "map_modulus_numeric",
    "map_argument",
    "solve_modulus",
    "apply_moduli",
    "reconstruct_map",
]


@dataclass(frozen=True)
class MapConfig:
    """Solver settings.

    ``on_nonconvergence`` is ``"fallback"`` (hand unconverged points to the
    numeric maximizer) or ``"raise"`` (:class:`ConvergenceError`).
    """

    fixed_point_tol: float = 1e-10
    fixed_point_max_iter: int = 100
    fallback_grid_points: int = 2048
    on_nonconvergence: str = "fallback"
    threads: int = None

    def __post_init__(self):
        if not self.fixed_point_tol > 0 or self.fixed_point_max_iter < 1:
            raise ParameterError("fixed_point_tol must be > 0 and fixed_point_max_iter >= 1")
        if self.fallback_grid_points < 8:
            raise ParameterError("fallback_grid_points must be >= 8")
        if self.on_nonconvergence not in ("fallback", "raise"):
            raise ParameterError(f"unknown on_nonconvergence {self.on_nonconvergence!r}")


DEFAULT = MapConfig()


def _as_arrays(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=np.float64) for a in args])
    # flat so boolean-mask updates work; callers restore the shape on the way out
    return [np.array(a, dtype=np.float64).ravel() for a in arrs]


def _check_inputs(r, sigma, m):
    if np.any(~np.isfinite(r)) or np.any(r < 0):
        raise DomainError("observed modulus r must be finite and nonnegative")
    if np.any(~(sigma > 0)) or np.any(~(m > 0)):
        raise DomainError("sigma and m must be positive")


def _fixed_point(step, rho0, cfg):
    """Iterate ``rho <- step(rho, active)`` elementwise; returns ``(rho, converged)``."""
    rho = rho0.copy()
    done = np.zeros(rho.shape, dtype=bool)
    for _ in range(cfg.fixed_point_max_iter):
        act = ~done
        if not act.any():
            break
        new = step(rho[act], act)
        delta = np.abs(new - rho[act])
        rho[act] = new
        finished = (delta <= cfg.fixed_point_tol) | (new < 0)
        done[np.flatnonzero(act)[finished]] = True
    return rho, done


def _exp_logpost(rho, r, sigma, m):
    return rician_loglik(rho, r, sigma) - rho / m


def _sqexp_logpost(rho, r, sigma, m):
    with np.errstate(divide="ignore"):
        return rician_loglik(rho, r, sigma) + np.log(rho) - rho**2 / m


def _scalarize(x, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(np.reshape(x, -1)[0])
    return np.reshape(x, np.broadcast_shapes(*[np.shape(a) for a in inputs]))


def _resolve(rho, ok, r, sigma, m, logpost, cfg, what):
    """Hand elements the fixed point did not settle to the numeric maximizer."""
    if ok.all():
        return rho
    bad = np.flatnonzero(~ok)
    if cfg.on_nonconvergence == "raise":
        raise ConvergenceError(
            f"{what} fixed point did not converge in {cfg.fixed_point_max_iter} iterations for {bad.size} points",
            best=rho,
            location=bad,
        )
    flat = rho.reshape(-1)
    rf, sf, mf = r.reshape(-1), sigma.reshape(-1), m.reshape(-1)
    for i in bad:
        scale = _search_scale(rf[i], sf[i], math.sqrt(mf[i]))
        flat[i] = map_modulus_numeric(
            lambda x, i=i: logpost(x, rf[i], sf[i], mf[i]), None, rf[i], cfg, scale=scale
        )
    return flat.reshape(rho.shape)


def _search_scale(r, sigma, prior_scale):
    # modes of the exponential and sqrt-exponential posteriors never exceed r + sigma,
    # so a huge prior scale only coarsens the search grid
    return max(sigma, min(prior_scale, r + sigma))


def map_modulus_exponential(r, sigma, m, cfg=DEFAULT):
    """Posterior mode of ``rho`` for an Exponential(mean ``m``) prior and Rician likelihood.

    Iterates ``rho <- r b(rho) - sigma**2 / m`` from ``rho = r`` where
    ``b = I_1/I_0`` at ``r rho / sigma**2``. The sequence decreases
    monotonically to the largest stationary point; if it goes negative, or if
    the boundary ``rho = 0`` has the higher posterior density (the log
    posterior is not concave when ``r**2 > 2 sigma**2``), the mode is 0.
    """
    r_, s_, m_ = _as_arrays(r, sigma, m)
    _check_inputs(r_, s_, m_)
    s2 = s_**2

    def step(rho, act):
        return r_[act] * bessel_ratio(r_[act] * rho / s2[act]) - s2[act] / m_[act]

    rho, ok = _fixed_point(step, r_.copy(), cfg)
    rho = np.where(ok & (rho < 0), 0.0, rho)
    rho = _resolve(rho, ok, r_, s_, m_, _exp_logpost, cfg, "exponential-prior")
    interior = rho > 0
    if interior.any():
        at_zero = np.zeros_like(rho)
        better_at_zero = _exp_logpost(at_zero, r_, s_, m_) >= _exp_logpost(rho, r_, s_, m_)
        rho = np.where(interior & better_at_zero, 0.0, rho)
    return _scalarize(rho, r, sigma, m)


def sqexp_update(b, r, sigma, m):
    """Positive root of the stationarity condition for the sqrt-exponential prior."""
    s2 = sigma**2
    brm = b * r * m
    return (brm + np.sqrt(brm**2 + 8 * s2**2 * m + 4 * s2 * m**2)) / (4 * s2 + 2 * m)


def map_modulus_sqexp(r, sigma, m, cfg=DEFAULT):
    """Posterior mode of ``rho`` when ``rho**2 ~ Exponential(mean m)``, Rician likelihood.

    The closed-form positive root depends on ``rho`` through the Bessel ratio,
    so it is iterated from ``rho = r``. The posterior is strictly log-concave,
    so the stationary point is the global mode.
    """
    r_, s_, m_ = _as_arrays(r, sigma, m)
    _check_inputs(r_, s_, m_)
    s2 = s_**2

    def step(rho, act):
        return sqexp_update(bessel_ratio(r_[act] * rho / s2[act]), r_[act], s_[act], m_[act])

    rho, ok = _fixed_point(step, r_.copy(), cfg)
    rho = _resolve(rho, ok, r_, s_, m_, _sqexp_logpost, cfg, "sqrt-exponential-prior")
    return _scalarize(rho, r, sigma, m)


def map_modulus_gaussian_conjugate(y_mod, mu, tau, sigma, m_weight):
    """Precision-weighted average of data and prior mean, clamped at 0.

    ``m_weight`` is the number of observations the prior counts for.
    """
    inputs = (y_mod, mu, tau, sigma, m_weight)
    y_mod, mu, tau, sigma, m_weight = _as_arrays(*inputs)
    if np.any(y_mod < 0) or np.any(mu < 0):
        raise DomainError("y_mod and mu must be nonnegative")
    if np.any(~(tau > 0)) or np.any(~(sigma > 0)) or np.any(~(m_weight >= 0)):
        raise DomainError("tau and sigma must be positive, m_weight nonnegative")
    wp = m_weight / tau**2
    wd = 1.0 / sigma**2
    out = np.maximum((wp * mu + wd * y_mod) / (wp + wd), 0.0)
    return _scalarize(out, *inputs)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo, hi, xtol):
    """Maximize a scalar function on ``[lo, hi]`` by golden-section search."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _polish(f, x, lo, hi, h):
    """Bisect on the sign of a central difference of ``f`` around ``x``.

    Value comparisons alone pin a smooth maximum only to about
    ``sqrt(eps |f| / |f''|)``; the difference quotient resolves it further.
    """
    a, b = max(lo, x - 20 * h), min(hi, x + 20 * h)

    def slope(t):
        return f(t + h) - f(t - h)

    if not (a - h >= lo and b + h <= hi and slope(a) > 0 > slope(b)):
        return x
    for _ in range(100):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        if slope(mid) > 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def map_modulus_numeric(prior_logpdf, likelihood_logpdf, r, cfg=DEFAULT, upper=None, scale=1.0):
    """Global maximizer of ``prior_logpdf(rho) + likelihood_logpdf(rho)`` on ``[0, upper]``.

    Dense grid scan, then golden-section refinement inside the bracket around
    the best grid point. The lowest maximizer wins exact ties, and both bracket
    ends are candidates so boundary modes come back exactly. Either callable
    may be ``None``. ``upper`` defaults to ``max(10 r, 10 scale)``.
    """
    if upper is None:
        upper = 10.0 * max(float(r), float(scale))
    if not upper > 0:
        raise DomainError("search range must be positive")

    def logpost(x):
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros_like(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            if prior_logpdf is not None:
                total = total + prior_logpdf(x)
            if likelihood_logpdf is not None:
                total = total + likelihood_logpdf(x)
        return np.where(np.isnan(total), -np.inf, total)

    grid = np.linspace(0.0, upper, cfg.fallback_grid_points)
    vals = logpost(grid)
    if not np.any(np.isfinite(vals)):
        raise NumericalError("posterior density is not finite anywhere on the search range")
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    f = lambda x: float(logpost(x))  # noqa: E731
    x_ref, _ = golden_section_max(f, lo, hi, xtol=1e-12 * max(1.0, upper))
    x_ref = _polish(f, x_ref, lo, hi, h=1e-3 * (grid[1] - grid[0]))
    f_ref = f(x_ref)
    candidates = [(lo, float(logpost(lo))), (x_ref, f_ref), (grid[i], float(vals[i])), (hi, float(logpost(hi)))]
    best_val = max(v for _, v in candidates)
    return float(min(x for x, v in candidates if v == best_val))


def map_argument(data_value, self_conjugate=False):
    """Posterior-mode argument: the data argument (0 for a zero value).

    At self-conjugate points the value is restricted to the real line, so the
    argument is 0 for a nonnegative real part and pi otherwise.
    """
    v = np.asarray(data_value, dtype=np.complex128)
    arg = np.where(v == 0, 0.0, np.angle(v))
    arg = np.where(np.asarray(self_conjugate), np.where(v.real >= 0, 0.0, np.pi), arg)
    return float(arg) if arg.ndim == 0 else arg


def _numeric_points(r, radius, prior, lik, cfg):
    out = np.empty_like(r)
    for i in range(r.size):
        p_scale = float(prior.scale_at(radius[i]))
        scale = max(lik.sigma, p_scale) if prior.family == "trunc_gaussian" else _search_scale(r[i], lik.sigma, p_scale)
        out[i] = map_modulus_numeric(
            lambda x, i=i: prior.logpdf(x, radius[i]),
            lambda x, i=i: lik.loglik(x, r[i]),
            r[i],
            cfg,
            scale=scale,
        )
    return out


def solve_modulus(r, radius, prior, lik, cfg=DEFAULT):
    """MAP modulus for observed moduli ``r`` at radii ``radius`` (flat arrays)."""
    r = np.asarray(r, dtype=np.float64)
    radius = np.asarray(radius, dtype=np.float64)
    if prior.family in ("exponential", "sqrt_exponential"):
        # a zero prior scale is the point-mass limit: the mode sits at 0
        vanish = prior.mean_at(radius) <= 0
        if vanish.any():
            out = np.zeros_like(r)
            keep = ~vanish
            if keep.any():
                out[keep] = solve_modulus(r[keep], radius[keep], prior, lik, cfg)
            return out
    sigma = lik.sigma
    fam = (prior.family, lik.family)
    if fam == ("exponential", "rician"):
        return map_modulus_exponential(r, sigma, prior.mean_at(radius), cfg)
    if fam == ("sqrt_exponential", "rician"):
        return map_modulus_sqexp(r, sigma, prior.mean_at(radius), cfg)
    if fam == ("trunc_gaussian", "gaussian_modulus"):
        return map_modulus_gaussian_conjugate(r, prior.mean_at(radius), prior.sd_at(radius), sigma, prior.weight)
    return _numeric_points(r, radius, prior, lik, cfg)


def apply_moduli(data, moduli, rep_mask):
    """Replace moduli at ``rep_mask`` points keeping the data arguments, then symmetrize.

    Zero-valued data points take argument 0, and self-conjugate points keep
    the sign of their real value.
    """
    values = data.values.copy()
    v = values[rep_mask]
    mod = np.abs(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(mod > 0, v / np.where(mod > 0, mod, 1.0), 1.0 + 0j)
    values[rep_mask] = moduli * phase
    return hermitian_symmetrize(ComplexField(data.grid, values))


def _solve_field(data, prior, lik, cfg):
    grid = data.grid
    rep = grid.half_plane & ~grid.origin_mask
    r = np.abs(data.values[rep])
    radius = grid.radius_for(prior.mean_fn.radius_mode)[rep]
    kx, ky = grid.kx[rep], grid.ky[rep]
    out = np.empty_like(r)

    def work(sl):
        try:
            out[sl] = solve_modulus(r[sl], radius[sl], prior, lik, cfg)
        except ConvergenceError as exc:
            loc = exc.location
            if loc is not None and np.size(loc):
                j = sl.start + int(np.ravel(loc)[0])
                exc.location = (int(kx[j]), int(ky[j]))
                raise ConvergenceError(f"{exc} (first failure at k={exc.location})", exc.best, exc.location) from exc
            raise

    _parallel.run_chunks(work, r.size, cfg.threads)
    return apply_moduli(data, out, rep)


def reconstruct_map(y, prior, lik, cfg=DEFAULT, truth=None, labels=None, label_names=None):
    """MAP image under independent per-frequency priors.

    The origin keeps the data value (flat prior there); every other
    representative frequency gets the family-matched modulus solver and the
    data argument; the rest follow by conjugate symmetry.
    """
    if not isinstance(prior, PriorSpec) or not isinstance(lik, LikelihoodSpec):
        raise ParameterError("prior must be a PriorSpec and lik a LikelihoodSpec")
    t0 = time.perf_counter()
    data = forward_transform(y)
    post = _solve_field(data, prior, lik, cfg)
    image = inverse_transform(post)
    diag = {"seconds": time.perf_counter() - t0, "estimator": "map"}
    if truth is not None:
        diag.update(metrics(image, truth, labels, label_names))
    return ReconstructionResult(image, post, diag)
