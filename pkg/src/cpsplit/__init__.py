"""Structure-preserving splitting integrators for charged-particle dynamics."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    CpsplitError,
    DegenerateFieldError,
    FieldDomainError,
    FixedPointDivergedError,
    InvalidParameterError,
    MaxStepsExceededError,
    NumericalBlowupError,
    StiffnessSuspectedError,
    UnknownProblemError,
)
from .fields import (
    PROBLEM_NAMES,
    FieldModel,
    ProblemSpec,
    builtin_problem,
    cross_product_matrix,
    load_problem,
    vector_potential_constant_B,
)
from .integrators import (
    METHODS,
    IntegratorConfig,
    ParticleState,
    StepReport,
    Trajectory,
    integrate,
    rotate_velocity,
    step_boris,
    step_exs,
    step_ims,
)
from .invariants import (
    CHANNELS,
    DriftSeries,
    drift_series,
    energy,
    invariant_series,
    magnetic_moment,
    modified_energy,
    momentum,
)
from .harness import (
    ConvergenceStudy,
    DriftScaling,
    ExperimentPlan,
    ExperimentResult,
    PreconditionReport,
    conservation_preconditions,
    drift_scaling_table,
    run_convergence_study,
    run_drift_experiment,
    run_drift_scaling,
    theorem_coverage,
)
from .reference import (
    ReferenceConfig,
    global_error,
    reference_solve,
    reference_states,
)

__all__ = [
    "__version__",
    "ConfigError",
    "CpsplitError",
    "DegenerateFieldError",
    "FieldDomainError",
    "FixedPointDivergedError",
    "InvalidParameterError",
    "MaxStepsExceededError",
    "NumericalBlowupError",
    "StiffnessSuspectedError",
    "UnknownProblemError",
    "PROBLEM_NAMES",
    "FieldModel",
    "ProblemSpec",
    "builtin_problem",
    "cross_product_matrix",
    "load_problem",
    "vector_potential_constant_B",
    "METHODS",
    "IntegratorConfig",
    "ParticleState",
    "StepReport",
    "Trajectory",
    "integrate",
    "rotate_velocity",
    "step_boris",
    "step_exs",
    "step_ims",
    "CHANNELS",
    "DriftSeries",
    "drift_series",
    "energy",
    "invariant_series",
    "magnetic_moment",
    "modified_energy",
    "momentum",
    "ConvergenceStudy",
    "DriftScaling",
    "ExperimentPlan",
    "ExperimentResult",
    "PreconditionReport",
    "conservation_preconditions",
    "drift_scaling_table",
    "run_convergence_study",
    "run_drift_experiment",
    "run_drift_scaling",
    "theorem_coverage",
    "ReferenceConfig",
    "global_error",
    "reference_solve",
    "reference_states",
]
