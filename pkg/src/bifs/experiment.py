"""
End-to-end runs driven by an :class:`~bifs.config.ExperimentConfig`.

A run builds or loads an image, optionally degrades it, builds the prior and
likelihood, runs one estimator and writes the requested artifacts. Reports
are ``key=value`` lines and hold no timings, so a fixed config reproduces
them byte for byte.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig
from .ddbifs import ddbifs_reconstruct, estimate_empirical_prior, load_empirical_prior
from .densities import LikelihoodSpec, PriorSpec, image_sd_to_fourier_sigma
from .io import load_image, load_image_stack, save_image, write_raw
from .kspace import KGrid, forward_transform
from .map import MapConfig, reconstruct_map
from .metrics import high_frequency_fraction, metrics, power_by_radius
from .mrf import MRFSpec, fit_bifs_to_mrf, igmrf_map_cg, simulate_igmrf, simulate_igmrf_batch
from .paramfn import scale_to_data_power
from .sampling import SampleConfig, mmse_estimate, sample_posterior_images
from .synth import (
    PHANTOM_NAMES,
    BumpConfig,
    GaussianNoise,
    StudentTNoise,
    add_noise,
    demo_scene,
    make_phantom,
    simulate_bump_database,
    simulate_bumps,
)

__all__ = ["RunOutput", "run_experiment", "format_report", "build_input", "build_prior"]


@dataclass
class RunOutput:
    """What a run produced: the estimate, inputs it used, and report entries."""

    image: np.ndarray
    observed: np.ndarray
    truth: np.ndarray = None
    labels: np.ndarray = None
    report: dict = field(default_factory=dict)
    stack: np.ndarray = None
    artifacts: dict = field(default_factory=dict)


def build_input(cfg):
    """``(truth or None, observed, labels or None)`` per ``[input]`` and ``[noise]``."""
    src = cfg.get("input", "source")
    n = cfg.get("input", "size")
    labels = None
    if src == "phantom":
        clean, labels = make_phantom(n)
    elif src == "scene":
        clean = demo_scene(n)
    elif src == "bumps":
        clean = simulate_bumps(BumpConfig(cfg.get("ddbifs", "rate"), n, n), cfg.get("input", "seed"))
    elif src == "mrf":
        clean = simulate_igmrf(MRFSpec(cfg.get("mrf", "kappa")), KGrid(n, n), cfg.get("input", "seed"))
    else:
        clean = load_image(cfg.get("input", "path"))
    model = cfg.get("noise", "model")
    if model == "none":
        return (None if src == "file" else clean), clean, labels
    sd = cfg.get("noise", "sd")
    noise = GaussianNoise(sd) if model == "gaussian" else StudentTNoise(cfg.get("noise", "df"), sd)
    return clean, add_noise(clean, noise, cfg.get("noise", "seed")), labels


def fourier_sigma(cfg):
    raw = cfg.get("likelihood", "sigma")
    if raw != "auto":
        return float(raw)
    if cfg.get("noise", "model") == "none":
        raise ConfigError("likelihood.sigma: 'auto' needs a noise model; give a number", key="likelihood.sigma")
    return image_sd_to_fourier_sigma(cfg.get("noise", "sd"))


def build_prior(cfg, observed):
    """PriorSpec per ``[prior]``; a function prior is power matched after any mixing."""
    p = cfg.section("prior")
    if p["source"] == "fit_mrf":
        m = cfg.section("mrf")
        grid = KGrid(observed.shape[1], observed.shape[0])
        sims = simulate_igmrf_batch(MRFSpec(m["kappa"]), grid, m["n_sim"], m["seed"], cfg.get("run", "threads"))
        fitted = fit_bifs_to_mrf(sims, target=m["target"])
        if p["family"] == "sqrt_exponential":
            return fitted
        return PriorSpec(p["family"], fitted.mean_fn, None, p["scale_ratio"], p["weight"])
    mean_fn, sd_fn = cfg.prior_functions()
    if p["power_match"]:
        mean_fn = scale_to_data_power(mean_fn, forward_transform(observed))
    return PriorSpec(p["family"], mean_fn, sd_fn, p["scale_ratio"], p["weight"])


def _metric_entries(prefix, image, truth, labels):
    out = {f"{prefix}high_frequency_fraction": high_frequency_fraction(image)}
    if truth is None:
        return out
    d = metrics(image, truth, labels, PHANTOM_NAMES if labels is not None else None)
    out[f"{prefix}rmse"] = d["rmse"]
    for name, val in d.get("region_means", {}).items():
        out[f"{prefix}region_mean.{name}"] = val
    return out


def _database(cfg, n):
    d = cfg.section("ddbifs")
    src = d["database"]
    if src == "bumps":
        return simulate_bump_database(d["count"], BumpConfig(d["rate"], n, n), d["seed"])
    return load_image_stack(src)


def run_experiment(cfg, write=True):
    """Run one configured experiment; returns a :class:`RunOutput`.

    With ``write`` the artifacts named in ``[output]`` are written.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise ConfigError("run_experiment needs an ExperimentConfig")
    threads = cfg.get("run", "threads")
    seed = cfg.get("run", "seed")
    truth, observed, labels = build_input(cfg)
    est = cfg.get("run", "estimator")
    report = {"estimator": est}
    report.update(_metric_entries("noisy.", observed, truth, labels))
    stack = None

    if est == "igmrf":
        image = igmrf_map_cg(observed, MRFSpec(cfg.get("mrf", "kappa")), fourier_sigma(cfg) * math.sqrt(2))
    elif est == "ddbifs":
        saved = cfg.get("ddbifs", "prior")
        if saved:
            prior = load_empirical_prior(saved)
        else:
            prior = estimate_empirical_prior(_database(cfg, observed.shape[0]), threads=threads)
        res = ddbifs_reconstruct(observed, prior, fourier_sigma(cfg), m=cfg.get("ddbifs", "m"))
        image = res.image
        report["ddbifs.database_count"] = prior.count
    else:
        prior = build_prior(cfg, observed)
        lik = LikelihoodSpec(cfg.get("likelihood", "family"), fourier_sigma(cfg), cfg.get("likelihood", "argument"))
        scfg = SampleConfig(cfg.get("run", "n_samples"), seed, cfg.get("run", "proposal_grid_points"), threads)
        if est in ("map", "compare"):
            image = reconstruct_map(observed, prior, lik, MapConfig(threads=threads)).image
        elif est == "mmse":
            image = mmse_estimate(observed, prior, lik, scfg).image
        else:
            stack = sample_posterior_images(observed, prior, lik, scfg)
            image = stack[0]
            report["sample.count"] = stack.shape[0]
            report["sample.mean_pixel_sd"] = float(stack.std(axis=0).mean()) if stack.shape[0] > 1 else 0.0
        if est == "compare":
            mrf_img = igmrf_map_cg(observed, MRFSpec(cfg.get("mrf", "kappa")), fourier_sigma(cfg) * math.sqrt(2))
            report.update(_metric_entries("igmrf.", mrf_img, truth, labels))
    prefix = "bifs." if est == "compare" else "estimate."
    report.update(_metric_entries(prefix, image, truth, labels))
    if truth is not None and labels is not None:
        for lab in sorted(PHANTOM_NAMES):
            report[f"truth.region_mean.{PHANTOM_NAMES[lab]}"] = float(truth[labels == lab].mean())

    out = RunOutput(image, observed, truth, labels, report, stack)
    if write:
        _write_outputs(cfg, out)
    return out


def _write_outputs(cfg, out):
    o = cfg.section("output")
    if o["image"]:
        if out.stack is not None and os.path.splitext(o["image"])[1].lower() in (".raw", ".f32"):
            write_raw(o["image"], out.stack)
        else:
            save_image(out.image, o["image"], rescale_range=o["rescale"], bits=o["bits"])
        out.artifacts["image"] = o["image"]
    if o["power_csv"]:
        target = out.image - out.truth if out.truth is not None else out.image
        radii, power = power_by_radius(target)
        with open(o["power_csv"], "w", encoding="utf-8") as fh:
            fh.write("radius,power\n")
            for r, p in zip(radii, power):
                fh.write(f"{r!r},{p!r}\n")
        out.artifacts["power_csv"] = o["power_csv"]
    if o["report"]:
        with open(o["report"], "w", encoding="utf-8") as fh:
            fh.write(format_report(out.report, cfg))
        out.artifacts["report"] = o["report"]


def format_report(entries, cfg=None):
    """One ``key=value`` per line; floats in ``repr`` form; resolved config appended."""
    lines = ["status=ok"]
    for key, val in entries.items():
        lines.append(f"{key}={val!r}" if isinstance(val, float) else f"{key}={val}")
    if cfg is not None:
        for key, val in cfg.flat().items():
            lines.append(f"config.{key}={val}")
    return "\n".join(lines) + "\n"
