"""Orbit averaging, homological equations and normal-form smoothing for
quasiperiodically forced anharmonic oscillators h0 = xi^2 + V(x)."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .averaging import (
    AveragedSymbol,
    HomologicalSolution,
    chi_autonomous,
    chi_harmonic,
    chi_rescaled,
    chi_torus,
    orbit_average,
    poisson_bracket,
    residual_check,
)
from .classical import flow, period, time_of_flight
from .diophantine import FrequencyVector, excluded_measure, member_omega0, member_omega1
from .errors import *  # noqa: F401,F403
from .potentials import PotentialModel, validate_assumptions
from .smoothing import NormalFormState, run_smoothing, smoothing_step, split_cutoff
from .symbols import GridSymbol, SymbolGrade, beta_tilde, grade_compose, order_fit, stint_integral
from .weyl import h0_eigensystem, lie_transform_matrix, moyal_star_truncated, weyl_quantize
