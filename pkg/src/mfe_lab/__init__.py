"""Grid laboratory for stationary equilibria of anonymous stochastic games.

The package solves for population distributions that reproduce themselves
under every agent's best response, verifies the order-theoretic structure
those fixed points rely on (stochastically monotone kernels, policies
falling as the population rises), probes uniqueness from multiple starts,
sweeps primitives for comparative statics, and checks finite-population
simulations against the solved limit.
"""

from .dp import (
    DpSolution,
    Policy,
    PolicyReport,
    ValueFunction,
    bellman_apply,
    policy_structure_report,
    value_iterate,
)
from .errors import (
    ConfigError,
    GridMismatch,
    InfeasibleBudget,
    InvalidParams,
    MarginalMismatch,
    MassSumViolation,
    MaxIterationsExceeded,
    MaxOuterExceeded,
    MfeLabError,
    NonPositiveCapital,
    PointOutOfBounds,
    TransitionEscape,
    UnorderedProbes,
)
from .kernel import (
    ErgodicityFlag,
    MarkovKernel,
    apply_M,
    build_kernel,
    check_decreasing_in_s,
    check_monotone_in_x,
    ergodicity_probe,
    invariant_direct,
    invariant_distribution,
)
from .measure import (
    Grid,
    Ordering,
    PopulationState,
    fosd_compare,
    fosd_compare_x1,
    kolmogorov_distance,
    project_mass,
)
from .mfe import (
    MfeResult,
    SweepResult,
    UniquenessReport,
    aggregator_range,
    comparative_sweep,
    consistency_residual,
    phi_apply,
    probe_starts,
    solve_mfe,
    uniqueness_probe,
)
from .model import (
    ModelSpec,
    ShockDistribution,
    TypedModelFamily,
    ValidationReport,
    aggregator_value,
    default_probes,
    extend_with_types,
    validate_model,
)
from .models import (
    MODEL_BUILDERS,
    AdvertisingParams,
    AiyagariParams,
    CapacityParams,
    QualityLadderParams,
    ReputationParams,
    advertising_model,
    aiyagari_model,
    aiyagari_prices,
    capacity_model,
    quality_ladder_model,
    reputation_model,
)
from .sim import SimConfig, SimReport, simulate_population

__version__ = "0.1.0"

__all__ = [
    "AdvertisingParams",
    "AiyagariParams",
    "CapacityParams",
    "ConfigError",
    "DpSolution",
    "ErgodicityFlag",
    "Grid",
    "GridMismatch",
    "InfeasibleBudget",
    "InvalidParams",
    "MODEL_BUILDERS",
    "MarginalMismatch",
    "MarkovKernel",
    "MassSumViolation",
    "MaxIterationsExceeded",
    "MaxOuterExceeded",
    "MfeLabError",
    "MfeResult",
    "ModelSpec",
    "NonPositiveCapital",
    "Ordering",
    "PointOutOfBounds",
    "Policy",
    "PolicyReport",
    "PopulationState",
    "QualityLadderParams",
    "ReputationParams",
    "ShockDistribution",
    "SimConfig",
    "SimReport",
    "SweepResult",
    "TransitionEscape",
    "TypedModelFamily",
    "UniquenessReport",
    "UnorderedProbes",
    "ValidationReport",
    "ValueFunction",
    "advertising_model",
    "aggregator_range",
    "aggregator_value",
    "aiyagari_model",
    "aiyagari_prices",
    "apply_M",
    "bellman_apply",
    "build_kernel",
    "capacity_model",
    "check_decreasing_in_s",
    "check_monotone_in_x",
    "comparative_sweep",
    "consistency_residual",
    "default_probes",
    "ergodicity_probe",
    "extend_with_types",
    "fosd_compare",
    "fosd_compare_x1",
    "invariant_direct",
    "invariant_distribution",
    "kolmogorov_distance",
    "phi_apply",
    "policy_structure_report",
    "probe_starts",
    "project_mass",
    "quality_ladder_model",
    "reputation_model",
    "simulate_population",
    "solve_mfe",
    "uniqueness_probe",
    "validate_model",
]
