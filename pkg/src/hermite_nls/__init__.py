"""Hermite spectral tools for randomized nonlinear Schrodinger equations with harmonic potential.

Submodules
----------
hermite      Hermite basis, quadrature grids, transforms and norms.
spectral     Spectral function of the harmonic oscillator and cluster increments.
sampling     Coefficient profiles and counter-based random data.
strichartz   Khinchin ratios, mixed norms, tail curves and event sets.
nls          Split-step solver, invariants and Picard iteration.
lens         Lens transform to the free equation and scattering states.
globalize    Smooth high-low splitting and window ledgers.
cli          Batch experiment runner.
"""
from .hermite import SpectralField, analyze, synthesize, sobolev_norm
from .nls import EquationSpec, solve
from .sampling import CoefficientProfile, RandomLaw, sample, sample_batch

__all__ = [
    "SpectralField", "analyze", "synthesize", "sobolev_norm",
    "EquationSpec", "solve",
    "CoefficientProfile", "RandomLaw", "sample", "sample_batch",
]
__version__ = "0.1.0"
