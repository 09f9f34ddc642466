"""Representation-aware distributionally robust linear regression.

A seminorm-regularized robust estimator with Monte Carlo radius selection,
alignment-weight tuning, representation-aware confidence regions, and a
seeded simulation harness.
"""

from .core import Dataset, Geometry, PhiValue, Representation, cost_c, phi, psi_matrix
from .errors import ConvergenceError, NondifferentiableError, SingularDesignError
from .rwpi import (
    QuantileEstimate,
    Region,
    XiSet,
    build_xis,
    confidence_region,
    psi_star,
    select_delta,
    support_envelope,
)
from .simharness import (
    SimConfig,
    SimResult,
    coverage_experiment,
    default_config,
    gen_beta,
    gen_data,
    gen_knowledge,
    run_experiment,
    run_methods,
)
from .solver import (
    ReadEstimate,
    SolverConfig,
    fit_erm,
    fit_read,
    fit_read_reference,
    fit_restricted,
    objective_value,
)
from .tuning import (
    TuneConfig,
    TuneResult,
    grad_v_n,
    kappa_init,
    lambda_from_ab,
    lambda_objective,
    tune_lambda,
    v_n,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Representation",
    "Geometry",
    "PhiValue",
    "psi_matrix",
    "phi",
    "cost_c",
    "SolverConfig",
    "ReadEstimate",
    "fit_erm",
    "fit_read",
    "fit_restricted",
    "fit_read_reference",
    "objective_value",
    "XiSet",
    "QuantileEstimate",
    "Region",
    "build_xis",
    "psi_star",
    "select_delta",
    "confidence_region",
    "support_envelope",
    "TuneConfig",
    "TuneResult",
    "kappa_init",
    "v_n",
    "grad_v_n",
    "lambda_objective",
    "lambda_from_ab",
    "tune_lambda",
    "SimConfig",
    "SimResult",
    "default_config",
    "gen_knowledge",
    "gen_beta",
    "gen_data",
    "run_methods",
    "run_experiment",
    "coverage_experiment",
    "SingularDesignError",
    "ConvergenceError",
    "NondifferentiableError",
]
