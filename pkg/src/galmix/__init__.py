"""Spectral-Galerkin simulator and coupling laboratory for stochastically
forced incompressible flow at desk scale."""

__version__ = "0.1.0"

from .spectral import (GalerkinModel, WaveMode, apply_A_power, bilinear_B,
                       build_shell_model, build_torus_model, project,
                       sobolev_norm)
from .noise import (NoiseSpec, apply_phi, apply_phi_derivative,
                    apply_phi_inverse, make_noise_spec, stochastic_convolution)
from .integrate import (TrajectoryRecord, decompose_YZ, default_dt, h1_energy,
                        sigma_stop, simulate_path, step)
from .rng import RngStream

__all__ = [
    "GalerkinModel", "WaveMode", "apply_A_power", "bilinear_B",
    "build_shell_model", "build_torus_model", "project", "sobolev_norm",
    "NoiseSpec", "apply_phi", "apply_phi_derivative", "apply_phi_inverse",
    "make_noise_spec", "stochastic_convolution",
    "TrajectoryRecord", "decompose_YZ", "default_dt", "h1_energy",
    "sigma_stop", "simulate_path", "step", "RngStream",
]
