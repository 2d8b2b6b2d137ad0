"""
Command-line entry point (``bifs``).

Each subcommand is a thin wrapper: it turns its flags into either an
experiment config (so the report records every resolved setting) or a direct
library call. Errors print as ``error: [module] message`` and exit nonzero;
configuration errors exit with status 2.
"""

import argparse
import os
import sys

import numpy as np

from . import _parallel
from .config import load_config, parse_config, prior_keys
from .ddbifs import ddbifs_reconstruct, estimate_empirical_prior, load_empirical_prior, save_empirical_prior
from .densities import estimate_noise_sigma, image_sd_to_fourier_sigma
from .exceptions import BIFSError, ConfigError
from .experiment import format_report, run_experiment
from .io import load_image, load_image_stack, read_raw, save_image, write_raw
from .kspace import KGrid
from .metrics import high_frequency_fraction, metrics
from .mrf import MRFSpec, fit_bifs_to_mrf, simulate_igmrf_batch
from .paramfn import InversePower, SmoothedBand, mix
from .synth import PHANTOM_NAMES, BumpConfig, make_phantom, simulate_bump_database

__all__ = ["main", "build_parser"]


def _common(p, out_required=True):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; output does not depend on it")
    p.add_argument("--out", required=out_required, help="output file")
    p.add_argument("--report", help="write a key=value report here")
    p.add_argument("--keep-range", action="store_true",
                   help="write PGM/PNG with values rounded and clipped instead of stretched to full range")


def _noise_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sigma", type=float, help="Fourier-domain noise SD per real/imaginary component")
    g.add_argument("--noise-sd", type=float, help="image-domain noise SD (converted for the unitary FFT)")
    g.add_argument("--noise-region", help="noise-only pixels as y0:y1,x0:x1; sigma is estimated there")


def _region_mask(spec, shape):
    try:
        ys, xs = spec.split(",")
        y0, y1 = (int(v) for v in ys.split(":"))
        x0, x1 = (int(v) for v in xs.split(":"))
    except ValueError:
        raise ConfigError(f"--noise-region {spec!r}: expected y0:y1,x0:x1", key="noise-region") from None
    mask = np.zeros(shape, dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def _sigma(args, image):
    if args.sigma is not None:
        return args.sigma
    if args.noise_sd is not None:
        return image_sd_to_fourier_sigma(args.noise_sd)
    return estimate_noise_sigma(image, _region_mask(args.noise_region, image.shape))


def build_parser():
    ap = argparse.ArgumentParser(prog="bifs", description="Bayesian image analysis in Fourier space.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="MAP denoising with an inverse-power prior")
    p.add_argument("input")
    p.add_argument("--b", type=float, default=2.0, help="inverse-power exponent (default 2)")
    p.add_argument("--family", default="exponential", choices=("exponential", "sqrt_exponential"))
    _noise_args(p)
    _common(p)

    p = sub.add_parser("enhance", help="MAP with a smoothed frequency band mixed with a denoising prior")
    p.add_argument("input")
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), required=True)
    p.add_argument("--smooth", type=float, default=1.5, help="band edge smoothing SD in k-space pixels")
    p.add_argument("--band-weight", type=float, default=0.9, help="weight of the band (rest goes to the denoising prior)")
    p.add_argument("--b", type=float, default=2.0)
    _noise_args(p)
    _common(p)

    p = sub.add_parser("edges", help="MAP with a band prior that drops low frequencies")
    p.add_argument("input")
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), required=True)
    p.add_argument("--smooth", type=float, default=1.5)
    _noise_args(p)
    _common(p)

    for name, what in (("sample", "posterior sample images"), ("mmse", "posterior-mean image")):
        p = sub.add_parser(name, help=what)
        p.add_argument("input")
        p.add_argument("--b", type=float, default=2.0)
        p.add_argument("--family", default="exponential", choices=("exponential", "sqrt_exponential"))
        p.add_argument("--argument", default="fixed", choices=("fixed", "rician"))
        p.add_argument("--grid-points", type=int, default=4096)
        if name == "sample":
            p.add_argument("--n", type=int, default=1, help="number of samples (a .raw --out keeps all)")
        _noise_args(p)
        _common(p)

    p = sub.add_parser("simulate-mrf", help="spectral IG-MRF draws on the torus")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--n", type=int, default=1000)
    _common(p)

    p = sub.add_parser("fit-mrf", help="fit a sqrt-exponential prior to a sample stack")
    p.add_argument("samples", help="raw sample stack")
    p.add_argument("--target", default="modulus", choices=("modulus", "power"))
    _common(p)

    p = sub.add_parser("simulate-bumps", help="random Gaussian-bump fields")
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--n", type=int, default=1)
    _common(p)

    p = sub.add_parser("ddbifs-fit", help="estimate an empirical prior from a database")
    p.add_argument("database", help="raw stack or directory of images")
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--normalize", action="store_true", help="standardize each image first")
    _common(p)

    p = sub.add_parser("ddbifs-apply", help="reconstruct with an empirical prior")
    p.add_argument("input")
    p.add_argument("--prior", required=True)
    p.add_argument("--m", type=float, help="override the stored prior weight")
    _noise_args(p)
    _common(p)

    p = sub.add_parser("phantom", help="write the GM/WM phantom")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--labels-out", help="also write the label image")
    _common(p)

    p = sub.add_parser("metrics", help="RMSE and region means of an estimate")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.add_argument("--labels")
    _common(p, out_required=False)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config entry")
    _common(p, out_required=False)
    return ap


# -- handlers -----------------------------------------------------------------------


def _file_config(args, image, mean_keys, estimator="map", extra=None):
    overrides = {
        "run.estimator": estimator,
        "run.seed": str(args.seed),
        "run.threads": str(args.threads),
        "input.source": "file",
        "input.path": args.input,
        "noise.model": "none",
        "likelihood.sigma": repr(_sigma(args, image)),
        "output.image": args.out,
        "output.report": args.report or "",
        "output.rescale": "false" if args.keep_range else "true",
    }
    overrides.update(mean_keys)
    overrides.update(extra or {})
    return parse_config("", {k: str(v) for k, v in overrides.items()})


def _prior_overrides(fn, family="exponential"):
    out = {f"prior.{k}": v for k, v in prior_keys(fn).items()}
    out["prior.family"] = family
    return out


def _cmd_denoise(args):
    image = load_image(args.input)
    cfg = _file_config(args, image, _prior_overrides(InversePower(1.0, args.b), args.family))
    run_experiment(cfg)


def _cmd_enhance(args):
    image = load_image(args.input)
    band = SmoothedBand(args.band[0], args.band[1], args.smooth)
    w = args.band_weight
    fn = mix([(w, band), (1.0 - w, InversePower(1.0, args.b))]) if w < 1 else band
    run_experiment(_file_config(args, image, _prior_overrides(fn)))


def _cmd_edges(args):
    image = load_image(args.input)
    fn = SmoothedBand(args.band[0], args.band[1], args.smooth)
    run_experiment(_file_config(args, image, _prior_overrides(fn)))


def _cmd_posterior(args, estimator):
    image = load_image(args.input)
    extra = {
        "likelihood.argument": args.argument,
        "run.proposal_grid_points": args.grid_points,
        "run.n_samples": getattr(args, "n", 1),
    }
    cfg = _file_config(args, image, _prior_overrides(InversePower(1.0, args.b), args.family), estimator, extra)
    run_experiment(cfg)


def _write_report(path, entries):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_report(entries))


def _cmd_simulate_mrf(args):
    stack = simulate_igmrf_batch(MRFSpec(args.kappa), KGrid(args.size, args.size), args.n, args.seed, args.threads)
    write_raw(args.out, stack, kappa=repr(args.kappa), seed=args.seed)
    _write_report(args.report, {"count": args.n, "size": args.size, "kappa": args.kappa, "seed": args.seed,
                                "mean_pixel_variance": float(stack.var(axis=(1, 2)).mean())})


def _cmd_fit_mrf(args):
    stack, _ = read_raw(args.samples)
    prior, det = fit_bifs_to_mrf(stack, target=args.target, return_details=True)
    keys = prior_keys(prior.mean_fn)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("[prior]\nfamily = sqrt_exponential\npower_match = false\n")
        for k, v in keys.items():
            fh.write(f"{k} = {v}\n")
    rc = det["fit"]
    _write_report(args.report, {
        "target": args.target,
        "count": stack.shape[0],
        "rational_cubic.residual_norm": det["report"].residual_norm,
        "inverse_power.residual_norm": det["inverse_power_report"].residual_norm,
        **{f"rational_cubic.a{i}": c for i, c in enumerate(rc.coefficients)},
    })


def _cmd_simulate_bumps(args):
    stack = simulate_bump_database(args.n, BumpConfig(args.rate, args.size, args.size), args.seed)
    if args.n == 1 and os.path.splitext(args.out)[1].lower() not in (".raw", ".f32"):
        save_image(stack[0], args.out, rescale_range=not args.keep_range)
    else:
        write_raw(args.out, stack, rate=repr(args.rate), seed=args.seed)
    _write_report(args.report, {"count": args.n, "rate": args.rate, "mean_intensity": float(stack.mean())})


def _cmd_ddbifs_fit(args):
    prior = estimate_empirical_prior(load_image_stack(args.database), args.m, args.normalize, args.threads)
    save_empirical_prior(prior, args.out)
    _write_report(args.report, {"count": prior.count, "m": prior.m, "mean_mu": float(prior.mu.mean()),
                                "mean_tau": float(prior.tau.mean())})


def _cmd_ddbifs_apply(args):
    image = load_image(args.input)
    prior = load_empirical_prior(args.prior)
    res = ddbifs_reconstruct(image, prior, _sigma(args, image), m=args.m)
    save_image(res.image, args.out, rescale_range=not args.keep_range)
    _write_report(args.report, {"m": res.diagnostics["m"], "high_frequency_fraction": high_frequency_fraction(res.image)})


def _cmd_phantom(args):
    img, labels = make_phantom(args.size)
    save_image(img, args.out, rescale_range=not args.keep_range)
    if args.labels_out:
        save_image(labels.astype(float), args.labels_out, rescale_range=False)
    _write_report(args.report, {f"pixels.{PHANTOM_NAMES[k]}": int((labels == k).sum()) for k in sorted(PHANTOM_NAMES)})


def _cmd_metrics(args):
    est, truth = load_image(args.estimate), load_image(args.truth)
    labels = load_image(args.labels).astype(int) if args.labels else None
    d = metrics(est, truth, labels, PHANTOM_NAMES if labels is not None else None)
    entries = {"rmse": d["rmse"]}
    for name, v in d.get("region_means", {}).items():
        entries[f"region_mean.{name}"] = v
    text = format_report(entries)
    if args.report:
        _write_report(args.report, entries)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if not args.report and not args.out:
        sys.stdout.write(text)


def _cmd_run(args):
    overrides = {"run.seed": str(args.seed), "run.threads": str(args.threads)}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set {item!r}: expected SECTION.KEY=VALUE", key=item)
        overrides[key.strip()] = value.strip()
    if args.out:
        overrides["output.image"] = args.out
    if args.keep_range:
        overrides["output.rescale"] = "false"
    if args.report:
        overrides["output.report"] = args.report
    run_experiment(load_config(args.config, overrides))


_HANDLERS = {
    "denoise": _cmd_denoise,
    "enhance": _cmd_enhance,
    "edges": _cmd_edges,
    "sample": lambda a: _cmd_posterior(a, "sample"),
    "mmse": lambda a: _cmd_posterior(a, "mmse"),
    "simulate-mrf": _cmd_simulate_mrf,
    "fit-mrf": _cmd_fit_mrf,
    "simulate-bumps": _cmd_simulate_bumps,
    "ddbifs-fit": _cmd_ddbifs_fit,
    "ddbifs-apply": _cmd_ddbifs_apply,
    "phantom": _cmd_phantom,
    "metrics": _cmd_metrics,
    "run": _cmd_run,
}


def _origin(exc):
    """Name of the innermost package module in the traceback."""
    name = "bifs"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("bifs"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return 2
    _parallel.set_default_threads(args.threads)
    try:
        _HANDLERS[args.command](args)
    except ConfigError as exc:
        sys.stderr.write(f"error: [{_origin(exc)}] {exc}\n")
        return 2
    except (BIFSError, OSError) as exc:
        loc = getattr(exc, "location", None)
        where = f" at k={loc}" if loc is not None and not isinstance(loc, np.ndarray) else ""
        sys.stderr.write(f"error: [{_origin(exc)}] {exc}{where}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
