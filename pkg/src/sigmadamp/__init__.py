"""Numerical laboratory for structurally damped sigma-evolution equations
with time-dependent damping ``b(t)``."""

__version__ = "0.1.0"

from .damping import DampingSpec, solve_g, validate_effective
from .decay_character import (
    GaussianHat,
    PowerCutoff,
    SpectralProfile,
    TabulatedRadial,
    estimate_decay_character,
)
from .decay_verify import fit_observed_rate, heat_oracle, predicted_rate
from .exponents import ExponentInputs, critical_p, exponent_table
from .linear_modes import LinearDampedEvolution, integrate_mode, reconstruct_norms
from .phase_zones import ZoneLabel, ZoneParams, classify
from .semilinear import FieldData, GridSpec, SemilinearConfig, solve_semilinear
