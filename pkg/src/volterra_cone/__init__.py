"""Cone state spaces and cone-preserving numerics for multifactor square-root models."""

from .admissible import (
    AdmissibilityReport,
    AdmissibleMatrix,
    build_canonical,
    build_q2,
    build_q3,
    canonical_inverse,
    check_admissible,
    q3_bounds,
)
from .cone import (
    BoundaryCheckReport,
    ConeDomain,
    boundary_condition_check,
    canonical_anchor,
    canonical_halfspaces,
    contains,
    m_matrix_inverse_check,
    transformed,
)
from .model import ModelParams, aggregate, kernel_eval, load_params
from .pde import (
    PdeProblem,
    SolveReport,
    convergence_study,
    manufactured_solution,
    observed_orders,
    residual_check,
    solve,
    source_term,
)
from .scheme import (
    DriftSystem,
    PathConfig,
    SampleCloud,
    ThreePointLaw,
    mean_oracle,
    ode_step,
    simulate,
    stochastic_step,
    strang_step,
    three_point_law,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "AdmissibleMatrix",
    "BoundaryCheckReport",
    "ConeDomain",
    "DriftSystem",
    "ModelParams",
    "PathConfig",
    "PdeProblem",
    "SampleCloud",
    "SolveReport",
    "ThreePointLaw",
    "aggregate",
    "boundary_condition_check",
    "build_canonical",
    "build_q2",
    "build_q3",
    "canonical_anchor",
    "canonical_halfspaces",
    "canonical_inverse",
    "check_admissible",
    "contains",
    "convergence_study",
    "kernel_eval",
    "load_params",
    "m_matrix_inverse_check",
    "manufactured_solution",
    "mean_oracle",
    "observed_orders",
    "ode_step",
    "q3_bounds",
    "residual_check",
    "simulate",
    "solve",
    "source_term",
    "stochastic_step",
    "strang_step",
    "three_point_law",
    "transformed",
]
