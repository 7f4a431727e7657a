"""Lattice parabolic Anderson model: simulation, moment Lyapunov exponents and spectral analysis."""
from __future__ import annotations

__version__ = "0.1.0"

from .lattice import (BoxDomain, CorrelationKernel, Correlator, JumpKernel, LatticeField,
                      Potential, correlator_from_b, green_diagonal, heat_kernel,
                      spectral_density, symbol_a, symbol_min)
from .moments import gamma2, gamma_p_bounds, p0_estimate, scaling_check, solve_m2
from .noise import NoiseGenerator, sample_increment
from .partition import PartitionSchedule, build_partition, verify_partition
from .spde import EnsembleStats, SpdeConfig, run_ensemble, step
from .spectral import (SchrodingerOp, SpectralReport, SymbolFamily, bargmann_quantities,
                       classify_recurrence, count_positive_eigenvalues, sigma0_uniqueness_bound,
                       sigma_cr, top_eigenvalue)
from .walks import WalkPath, fk_lyapunov_estimate, fk_moment_estimate, sample_path
from .zero_mean import zero_mean_1d_construct

__all__ = [
    "BoxDomain", "CorrelationKernel", "Correlator", "JumpKernel", "LatticeField", "Potential",
    "correlator_from_b", "green_diagonal", "heat_kernel", "spectral_density", "symbol_a",
    "symbol_min", "gamma2", "gamma_p_bounds", "p0_estimate", "scaling_check", "solve_m2",
    "NoiseGenerator", "sample_increment", "PartitionSchedule", "build_partition",
    "verify_partition", "EnsembleStats", "SpdeConfig", "run_ensemble", "step", "SchrodingerOp",
    "SpectralReport", "SymbolFamily", "bargmann_quantities", "classify_recurrence",
    "count_positive_eigenvalues", "sigma0_uniqueness_bound", "sigma_cr", "top_eigenvalue",
    "WalkPath", "fk_lyapunov_estimate", "fk_moment_estimate", "sample_path",
    "zero_mean_1d_construct",
]
