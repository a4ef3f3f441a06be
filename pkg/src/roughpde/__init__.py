"""Rough-path driven Burgers-type SPDEs on the circle."""

from .gaussfield import (FieldSpec, StationaryFieldSampler, covariance_exact,
                         evaluate_field)
from .grid import Grid
from .measures import (GaussianReference, default_potentials, evaluate_Xi,
                       pcn_sample_mu)
from .rng import stream
from .solver import (BlowUp, MollifiedNoise, ProblemSpec, classical_solve,
                     solve_fixed_point, solve_stepping)

__version__ = "0.1.0"

__all__ = [
    "BlowUp", "FieldSpec", "GaussianReference", "Grid", "MollifiedNoise",
    "ProblemSpec", "StationaryFieldSampler", "classical_solve",
    "covariance_exact", "default_potentials", "evaluate_Xi",
    "evaluate_field", "pcn_sample_mu", "solve_fixed_point", "solve_stepping",
    "stream", "__version__",
]
