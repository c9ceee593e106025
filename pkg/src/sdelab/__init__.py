"""Monte Carlo laboratory for Ito diffusions with singular drift in mixed-norm spaces."""

__version__ = "0.1.0"

from .fields import (
    BoxedConstantDrift,
    CallableDrift,
    ConstantDrift,
    DiffusionSpec,
    LinearDrift,
    MollifiedField,
    ScaledDrift,
    SingularDrift,
    TruncatedDrift,
    ZeroDrift,
    identity_diffusion,
    mollify,
    truncate,
    validate_diffusion,
)
from .mixed_norm import (
    GridField,
    MixedExponents,
    SpaceTimeGrid,
    compute_mixed_norm,
    drift_mass,
    drift_mass_table,
    field_from_callable,
    subcriticality,
)
from .occupation import (
    EstimateReport,
    SemimartingaleWeights,
    drift_budget_check,
    estimate_AB,
    estimate_occupation,
    green_density,
    make_time_weights,
    weighted_functional,
)
from .nonexistence import (
    LadderLevelSummary,
    TruncationLadder,
    ladder_experiment,
    origin_occupancy,
    singular_cost,
)
from .solver import (
    PathEnsemble,
    SimulationError,
    SolverConfig,
    ensemble_to_csv,
    increment_moment,
    ito_residual,
    marginal_distance,
    simulate,
)
from .tightness import (
    CoefficientSet,
    TimeChange,
    build_time_change,
    convergence_diagnostic,
    moment_bound_check,
)
