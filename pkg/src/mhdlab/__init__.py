"""Spectral laboratory for perturbation MHD around a Diophantine background field."""

from .diophantine import BackgroundField, certify, classify_mode, estimate_constant, golden_vector
from .errors import ConfigurationError, ContractError, DivergenceError, MHDLabError
from .linear import kernel_values, mode_exponents, propagate_linear, solve_duhamel
from .solver import SimState, SolverConfig, run, step
from .spectral import SpectralField, TorusGrid

__version__ = "0.1.0"
