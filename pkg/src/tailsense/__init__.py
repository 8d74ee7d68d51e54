"""Global sensitivity analysis of rare-event probabilities.

The package estimates how strongly a small failure probability

    P(tau) = Pr[ Q(X) > tau ],    X ~ law(xi)

reacts to the hyper-parameters ``xi`` of the input law.  The inner loop
estimates ``P`` by subset simulation; the outer loop fits a sparse
polynomial-chaos surrogate of ``xi -> P_hat(xi)`` over a hyper-parameter
box and reads Sobol' indices off the surrogate coefficients in closed
form.  A pick-and-freeze (Saltelli) estimator is included for
cross-checking at matched budget.

Two forward models ship with the package: a closed-form linear/Gaussian
benchmark with known probabilities (:mod:`tailsense.analytic`) and a
two-dimensional lognormal-permeability Darcy flow problem whose quantity
of interest is a particle hitting time (:mod:`tailsense.darcy`).
"""

from ._version import __version__
from .analytic import (AnalyticHyper, exact_probability, hyper_box,
                       nominal_hyper, probability_from_xi)
from .driver import (ConfigError, ExperimentConfig, RunArtifacts,
                     budget_sweep, config_from_options, load_config_file,
                     read_artifacts, run_double_loop, variability_study,
                     write_artifacts)
from .mc import MCEstimate, SaltelliReport, mc_probability, saltelli_sobol
from .pce import (NonConvergenceError, PCESurrogate, cross_validate_lambda,
                  design_matrix, fit_sparse, loads_surrogate,
                  total_order_basis)
from .sampling import RandomStream, UniformBox, lhs_sample
from .sobol import SobolReport, sobol_report
from .subset import (DegenerateLevelError, SSConfig, SSResult,
                     run_subset_simulation)

__all__ = [
    "__version__",
    "AnalyticHyper", "exact_probability", "hyper_box", "nominal_hyper",
    "probability_from_xi",
    "ConfigError", "ExperimentConfig", "RunArtifacts", "budget_sweep",
    "config_from_options", "load_config_file", "read_artifacts",
    "run_double_loop", "variability_study", "write_artifacts",
    "MCEstimate", "SaltelliReport", "mc_probability", "saltelli_sobol",
    "NonConvergenceError", "PCESurrogate", "cross_validate_lambda",
    "design_matrix", "fit_sparse", "loads_surrogate", "total_order_basis",
    "RandomStream", "UniformBox", "lhs_sample",
    "SobolReport", "sobol_report",
    "DegenerateLevelError", "SSConfig", "SSResult", "run_subset_simulation",
]
