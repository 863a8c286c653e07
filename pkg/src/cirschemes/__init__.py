"""Explicit positivity-preserving schemes for the one- and two-factor CIR models."""

__version__ = "0.1.0"

from .errors import CirError, DomainError, UsageError
from .params import (
    CirParams,
    GridSpec,
    SchemeKind,
    SchemeSpec,
    TwoFactorParams,
    ValidityVerdict,
    validate,
    validate_exact,
    validate_semidiscrete,
    validate_split,
    validate_two_factor,
)
from .randomness import BrownianPath, SeedSpec, aggregate, gaussian_stream, refine
from .one_factor import (
    exact_cir_step,
    sd_squared_step,
    simulate_path,
    simulate_paths,
    split_exact_step,
    truncated_euler_step,
)
from .two_factor import (
    PairState,
    simulate_pair_paths,
    two_factor_cross_step,
    two_factor_split_step,
    two_factor_squared_step,
)
from .oracles import cir_moments, sd_mean_recursion, two_factor_mean_ode

__all__ = [
    "BrownianPath",
    "CirError",
    "CirParams",
    "DomainError",
    "GridSpec",
    "PairState",
    "SchemeKind",
    "SchemeSpec",
    "SeedSpec",
    "TwoFactorParams",
    "UsageError",
    "ValidityVerdict",
    "aggregate",
    "cir_moments",
    "exact_cir_step",
    "gaussian_stream",
    "refine",
    "sd_mean_recursion",
    "sd_squared_step",
    "simulate_pair_paths",
    "simulate_path",
    "simulate_paths",
    "split_exact_step",
    "truncated_euler_step",
    "two_factor_cross_step",
    "two_factor_mean_ode",
    "two_factor_split_step",
    "two_factor_squared_step",
    "validate",
    "validate_exact",
    "validate_semidiscrete",
    "validate_split",
    "validate_two_factor",
]
