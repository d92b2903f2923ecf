"""Voter-model catalysts for the parabolic Anderson model: simulation and duality."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import BACKEND
from .errors import (ConfigError, DimensionTooLow, DomainError, EmptyBox, HeavyTail,
                     InvalidDimension, NonConvergedQuadrature, NonConvergent,
                     NonPositiveResult, NotStronglyTransient, PredicateFailure,
                     RecurrentKernel, ReproducibilityError, VoterPamError, WindowViolation,
                     ZeroHits)
from .kernels import (GreenConstants, Kernel, Torus, dirichlet_eigenvalue, dual,
                      green_constants, heat_kernel_diagonal, make_simple_random_walk,
                      symmetrize, transition_probability)
from .rng import Stream, child_seed
from .stats import MomentEstimate
from .voter import Bernoulli, VoterConfig, VoterField, Warmed

__all__ = [
    "BACKEND", "Bernoulli", "ConfigError", "DimensionTooLow", "DomainError", "EmptyBox",
    "GreenConstants", "HeavyTail", "InvalidDimension", "Kernel", "MomentEstimate",
    "NonConvergedQuadrature", "NonConvergent", "NonPositiveResult", "NotStronglyTransient",
    "PredicateFailure", "RecurrentKernel", "ReproducibilityError", "Stream", "Torus",
    "VoterConfig", "VoterField", "VoterPamError", "Warmed", "WindowViolation", "ZeroHits",
    "child_seed", "dirichlet_eigenvalue", "dual", "green_constants", "heat_kernel_diagonal",
    "make_simple_random_walk", "symmetrize", "transition_probability",
]
