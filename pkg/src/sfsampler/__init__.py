"""Schrodinger-Follmer diffusion samplers with a stochastic Runge-Kutta integrator."""

__version__ = "0.1.0"

from .core import ConfigError, NumericalFailure, PathAbort, RngStream, RunConfig, SFSError, TimeGrid, derive_stream
from .data import DatasetFormatError, load_csv, save_csv, synth_moons, synth_scurve
from .drift import EmpiricalDrift, ExactGMDrift, MonteCarloDrift, SingularTimeError
from .estimator import SchrodingerFollmerSampler
from .integrators import euler_step, simulate_coupled, simulate_paths, srksfs_step, ula_step
from .metrics import ConvergenceTable, fit_order, mode_mass, required_budget, strong_rmse, w2_exact_1d, w2_sliced
from .noise import NoisePair, aggregate, sample_pair
from .targets import ClaytonCopulaTarget, EmpiricalDataset, GaussianMixture, GenericLogDensity, RingMixture, make_target

__all__ = [
    "__version__",
    "ConfigError",
    "NumericalFailure",
    "PathAbort",
    "RngStream",
    "RunConfig",
    "SFSError",
    "TimeGrid",
    "derive_stream",
    "DatasetFormatError",
    "load_csv",
    "save_csv",
    "synth_moons",
    "synth_scurve",
    "EmpiricalDrift",
    "ExactGMDrift",
    "MonteCarloDrift",
    "SingularTimeError",
    "SchrodingerFollmerSampler",
    "euler_step",
    "simulate_coupled",
    "simulate_paths",
    "srksfs_step",
    "ula_step",
    "ConvergenceTable",
    "fit_order",
    "mode_mass",
    "required_budget",
    "strong_rmse",
    "w2_exact_1d",
    "w2_sliced",
    "NoisePair",
    "aggregate",
    "sample_pair",
    "ClaytonCopulaTarget",
    "EmpiricalDataset",
    "GaussianMixture",
    "GenericLogDensity",
    "RingMixture",
    "make_target",
]
