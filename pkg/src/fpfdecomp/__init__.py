"""Feedback particle filter gains by Gaussian-mixture decomposition."""

from .decomposition import (DecompositionGain, build_gain, control_u, evaluate,
                            evaluate_at_particles, gain_derivative, gain_eval,
                            gain_from_particles, poisson_residual, solve_coefficients)
from .density import MixtureDensity, ParticleEnsemble, erf, erfc, erfcx, hbar
from .exceptions import (ConsistencyError, DivergenceError, InvalidModelError,
                         InvalidParameterError, SingularDensityError)
from .hermite import HermiteSeries, hermite_eval, monomial_to_hermite, series_eval

__all__ = [
    "ConsistencyError", "DecompositionGain", "DivergenceError", "HermiteSeries",
    "InvalidModelError", "InvalidParameterError", "MixtureDensity", "ParticleEnsemble",
    "SingularDensityError", "build_gain", "control_u", "erf", "erfc", "erfcx", "evaluate",
    "evaluate_at_particles", "gain_derivative", "gain_eval", "gain_from_particles", "hbar",
    "hermite_eval", "monomial_to_hermite", "poisson_residual", "series_eval",
    "solve_coefficients",
]
