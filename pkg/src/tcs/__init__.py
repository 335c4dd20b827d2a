"""Target controllability scores for linear network dynamics.

Modules
-------
core_model   system matrix, targets, canonical block form
gramian      per-node output controllability Gramians
scores       VCS / AECS objectives and the projected-gradient solver
reduction    reduced-model scores and the bounds comparing them
ingest       connectivity loading, Laplacian dynamics, cohort pipeline
cli          command-line front end (``tcs``)
"""
__version__ = "0.1.0"

from .core_model import CanonicalSystem, SystemMatrix, TargetSpec, canonicalize, standalone
from .errors import (
    AccuracyError,
    FeasibilityError,
    LineSearchError,
    NumericalError,
    ParseError,
    TCSError,
    ValidationError,
)
from .gramian import (
    GramianSet,
    assemble,
    gramian_set,
    matrix_exponential,
    output_controllability_rank,
    output_gramian_set,
    reduced_gramian_set,
)
from .reduction import (
    BoundInputs,
    ComparisonReport,
    bound_inputs,
    comparison_report,
    delta_quantities,
    gramian_gap,
    integral_gap,
    log_norm,
    phi,
)
from .scores import (
    ScoreKind,
    ScoreResult,
    SolverOptions,
    UniquenessCertificate,
    armijo_step,
    evaluate,
    hessian,
    objective,
    solve_score,
    stationarity_residual,
    uniqueness_certificate,
)
from .simplex import simplex_project, simplex_project_sort
