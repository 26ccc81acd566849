"""Exact generators on fixed-charge hyperplanes, spectral gaps and reductions."""

from .comparison import ComparisonResult, comparison_bound, comparison_check, local_comparison_ratio
from .generator import (
    DegenerateSpectrumError,
    FrozenGeneratorWarning,
    GeneratorMatrix,
    ReducibleGeneratorError,
    build_generator,
    dirichlet_form,
    reversibility_defect,
    spectral_gap,
    tilde_rates,
)
from .reduction import (
    BirthDeathChain,
    DriftConditionError,
    RamificationResult,
    birth_death_chain,
    chain_gap,
    multispecies_meanfield_gap,
    projection_identity_check,
    ramification_gap_bound,
)
from .variance import (
    LocalFunction,
    NotMeanZeroError,
    as_local,
    check_mean_zero,
    current_function,
    finite_volume_variance,
    inverse_generator_form,
)

__all__ = [
    "BirthDeathChain",
    "ComparisonResult",
    "DegenerateSpectrumError",
    "DriftConditionError",
    "FrozenGeneratorWarning",
    "GeneratorMatrix",
    "LocalFunction",
    "NotMeanZeroError",
    "RamificationResult",
    "ReducibleGeneratorError",
    "as_local",
    "birth_death_chain",
    "build_generator",
    "chain_gap",
    "check_mean_zero",
    "comparison_bound",
    "comparison_check",
    "current_function",
    "dirichlet_form",
    "finite_volume_variance",
    "inverse_generator_form",
    "local_comparison_ratio",
    "multispecies_meanfield_gap",
    "projection_identity_check",
    "ramification_gap_bound",
    "reversibility_defect",
    "spectral_gap",
    "tilde_rates",
]
