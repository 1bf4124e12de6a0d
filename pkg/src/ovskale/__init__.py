"""Truncated birth-and-death correlation hierarchies on a periodic lattice:
scale-of-spaces evolution with certified majorants, the scaled family and
its measured limit, and the limiting nonlocal kinetic equation with its
fold bifurcation.
"""

from ._version import __version__
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionCapError,
    HorizonError,
    MajorantViolation,
    OvskaleError,
    StepSizeCollapse,
)
from .lattice import (
    Configuration,
    KernelPair,
    SupportedFunction,
    Torus,
    k_inverse,
    k_transform,
    kernel_pair_from_spec,
    load_kernel_pair,
    load_kernel_pair_file,
    lp_exponential,
    lp_integral,
)
from .states import CorrelationVector, random_correlation
from .operators import (
    ModelParams,
    OperatorHandle,
    apply_diagonal_part,
    apply_hierarchy_generator,
    apply_observable_generator,
    apply_perturbation_part,
    apply_rescaled_generator,
    assemble_dense,
    diagonal_part,
    hierarchy_generator,
    interaction_energies,
    limit_perturbation,
    lp_pairing,
    perturbation_part,
    rescaled_diagonal,
    rescaled_generator,
    rescaled_perturbation,
    semigroup_apply,
)
from .scale import (
    BoundModel,
    ScaleSpec,
    localization_index,
    model_bound,
    norm_alpha,
    optimal_terminal,
    time_horizon,
    verify_singular_bound,
)
from .series import (
    EvolutionResult,
    SeriesConfig,
    apriori_estimate_check,
    flow_compose_check,
    oracle_evolve,
    ovsyannikov_evolve,
)
from .vlasov import (
    ChaosReport,
    EpsilonSweep,
    VlasovReport,
    ZGapReport,
    chaos_check,
    perturbation_gap,
    semigroup_gap,
    semigroup_gap_bound,
    semigroup_gap_intermediate,
    thread_cap,
    vlasov_limit,
)
from .kinetic import (
    BifurcationInput,
    bifurcation_input_from_model,
    DensityField,
    circular_convolution,
    critical_c_range,
    homogeneous_ode,
    homogeneous_scalar_ode,
    integrate_kinetic,
    kinetic_rhs,
    stationary_scan,
    tangency_point,
    threshold_b,
)
from .config import CONFIG_SCHEMA, build_runtime, config_hash, load_config, validate_config
from .experiments import run_experiment

__all__ = [
    "__version__",
    "OvskaleError",
    "ConfigError",
    "HorizonError",
    "ConvergenceError",
    "MajorantViolation",
    "StepSizeCollapse",
    "DimensionCapError",
    "Torus",
    "Configuration",
    "KernelPair",
    "SupportedFunction",
    "kernel_pair_from_spec",
    "load_kernel_pair",
    "load_kernel_pair_file",
    "k_transform",
    "k_inverse",
    "lp_integral",
    "lp_exponential",
    "CorrelationVector",
    "random_correlation",
    "ModelParams",
    "OperatorHandle",
    "hierarchy_generator",
    "diagonal_part",
    "perturbation_part",
    "rescaled_generator",
    "rescaled_diagonal",
    "rescaled_perturbation",
    "semigroup_apply",
    "apply_diagonal_part",
    "apply_hierarchy_generator",
    "apply_observable_generator",
    "apply_perturbation_part",
    "apply_rescaled_generator",
    "assemble_dense",
    "interaction_energies",
    "limit_perturbation",
    "lp_pairing",
    "ScaleSpec",
    "BoundModel",
    "model_bound",
    "norm_alpha",
    "time_horizon",
    "optimal_terminal",
    "localization_index",
    "verify_singular_bound",
    "SeriesConfig",
    "EvolutionResult",
    "ovsyannikov_evolve",
    "oracle_evolve",
    "flow_compose_check",
    "apriori_estimate_check",
    "EpsilonSweep",
    "VlasovReport",
    "ChaosReport",
    "ZGapReport",
    "vlasov_limit",
    "semigroup_gap",
    "semigroup_gap_bound",
    "semigroup_gap_intermediate",
    "perturbation_gap",
    "chaos_check",
    "thread_cap",
    "DensityField",
    "BifurcationInput",
    "bifurcation_input_from_model",
    "circular_convolution",
    "kinetic_rhs",
    "integrate_kinetic",
    "homogeneous_ode",
    "homogeneous_scalar_ode",
    "stationary_scan",
    "threshold_b",
    "tangency_point",
    "critical_c_range",
    "CONFIG_SCHEMA",
    "load_config",
    "validate_config",
    "build_runtime",
    "config_hash",
    "run_experiment",
]
