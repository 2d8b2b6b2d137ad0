"""
Bayesian image analysis in Fourier space.

Priors and likelihoods are placed on the modulus and argument of each
Fourier coefficient independently, so MAP estimates, posterior samples and
posterior means factor over frequencies. Subpackages by task:

- :mod:`bifs.kspace` transforms and the frequency grid
- :mod:`bifs.paramfn` parameter functions of frequency
- :mod:`bifs.densities` prior and likelihood densities
- :mod:`bifs.map` MAP reconstruction
- :mod:`bifs.sampling` posterior sampling and posterior means
- :mod:`bifs.mrf` IG-MRF simulation, fitting and comparison tools
- :mod:`bifs.ddbifs` priors estimated from image databases
- :mod:`bifs.io`, :mod:`bifs.config`, :mod:`bifs.experiment`, :mod:`bifs.cli`
"""

from .ddbifs import EmpiricalPrior, ddbifs_reconstruct, estimate_empirical_prior, load_empirical_prior, save_empirical_prior
from .densities import LikelihoodSpec, PriorSpec, estimate_noise_sigma, image_sd_to_fourier_sigma
from .exceptions import *  # noqa: F401,F403
from .exceptions import __all__ as _exc_all
from .io import load_image, save_image
from .kspace import ComplexField, KGrid, forward_transform, inverse_transform
from .map import MapConfig, reconstruct_map
from .metrics import ReconstructionResult
from .mrf import MRFSpec, acf_by_distance, fit_bifs_to_mrf, igmrf_map_cg, simulate_igmrf, simulate_igmrf_batch
from .paramfn import Constant, InversePower, Mixture, RationalCubic, SmoothedBand, mix, scale_to_data_power
from .sampling import SampleConfig, mmse_estimate, sample_posterior_image, sample_posterior_images, sample_prior_image

__version__ = "0.1.0"

__all__ = [
    "KGrid",
    "ComplexField",
    "forward_transform",
    "inverse_transform",
    "Constant",
    "InversePower",
    "SmoothedBand",
    "RationalCubic",
    "Mixture",
    "mix",
    "scale_to_data_power",
    "PriorSpec",
    "LikelihoodSpec",
    "image_sd_to_fourier_sigma",
    "estimate_noise_sigma",
    "MapConfig",
    "reconstruct_map",
    "ReconstructionResult",
    "SampleConfig",
    "sample_posterior_image",
    "sample_posterior_images",
    "sample_prior_image",
    "mmse_estimate",
    "MRFSpec",
    "simulate_igmrf",
    "simulate_igmrf_batch",
    "fit_bifs_to_mrf",
    "igmrf_map_cg",
    "acf_by_distance",
    "EmpiricalPrior",
    "estimate_empirical_prior",
    "ddbifs_reconstruct",
    "save_empirical_prior",
    "load_empirical_prior",
    "load_image",
    "save_image",
] + list(_exc_all)
