"""Direct diffusion bridges with data-consistent sampling, at desk scale."""

from .linop import (
    AvgPoolDownsample, Identity, LinearOperator, Mask, PeriodicConvolution, PinvSolverConfig, UniformQuantizer,
    gaussian_blur, lift_measurement, pinv, pinv_apply, uniform_blur,
)
from .oracle import Denoiser, GaussianOracle, MixtureOracle, fd_vjp
from .sampler import GuidanceConfig, SamplerConfig, guidance_for, run
from .schedule import I2SB, IRSDE, BetaProfile, InDI, indi_time_map, timestep_grid, total_variance_residual

__version__ = "0.1.0"
