"""Bragg coherent diffraction imaging simulation and reconstruction toolkit.

Crystal synthesis, kinematical far-field simulation, Poisson photon
noise, deterministic closed-form reconstruction, shrink-wrap iterative
refinement, and a portfolio of convergence metrics, wrapped in an HTTP
service with a thin CLI client.
"""

from .config import ExperimentConfig, Variant, load_config, save_config
from .dcdi import ReconstructionResult, dcdi_reconstruct, locate_window
from .forward import (
    ForwardConfig,
    IntensityVolume,
    QGrid,
    autocorrelation,
    simulate_intensity_direct,
    simulate_intensity_fft,
)
from .metrics import MetricsReport, abs_r, chi2, evaluate, phase_z_derivative, register, rms_d
from .model import ComplexVolume, CrystalSpec, Inclusion, build_object, default_spec
from .noise import NoiseSpec, apply_poisson
from .pipeline import compare_seeds, run_experiment
from .shrinkwrap import Seed, ShrinkwrapParams, run_shrinkwrap

__version__ = "0.1.0"

__all__ = [
    "ComplexVolume",
    "CrystalSpec",
    "ExperimentConfig",
    "ForwardConfig",
    "Inclusion",
    "IntensityVolume",
    "MetricsReport",
    "NoiseSpec",
    "QGrid",
    "ReconstructionResult",
    "Seed",
    "ShrinkwrapParams",
    "Variant",
    "abs_r",
    "apply_poisson",
    "autocorrelation",
    "build_object",
    "chi2",
    "compare_seeds",
    "dcdi_reconstruct",
    "default_spec",
    "evaluate",
    "load_config",
    "locate_window",
    "phase_z_derivative",
    "register",
    "rms_d",
    "run_experiment",
    "run_shrinkwrap",
    "save_config",
    "simulate_intensity_direct",
    "simulate_intensity_fft",
]
