"""Sharp asymptotics of regularized convex classification on a two-cluster
Gaussian mixture, with finite-dimensional Monte Carlo cross-checks.

Modules
-------
losses            square / logistic / hinge losses and their prox operators
state_evolution   fixed-point equations for the asymptotic overlaps
observables       generalization error, training loss, Bayes baseline
landscape         constrained training-loss landscape and the separability
                  phase boundary
simulator         seeded finite-d data generation and ERM solvers
cli               sweep runner writing CSV/JSON result tables
"""

from .losses import (DomainError, LossKind, LossSpec, NumericalError,
                     get_loss)
from .observables import (BayesPoint, bayes_error, generalization_error,
                          hebb_estimator_theory, training_loss)
from .landscape import (LandscapePoint, PhaseBoundary, alpha_star,
                        landscape_energy, minimize_landscape,
                        solve_gamma_star)
from .simulator import (Dataset, ErmResult, SolverConfig, fit_iterative,
                        fit_ridge, generate, hebb_fit, measure)
from .state_evolution import (FixedPointConfig, ModelParams, Overlaps,
                              TheoryReport, solve_fixed_point,
                              solve_square_closed_form)

__all__ = [
    "DomainError", "NumericalError", "LossKind", "LossSpec", "get_loss",
    "ModelParams", "Overlaps", "FixedPointConfig", "TheoryReport",
    "solve_fixed_point", "solve_square_closed_form",
    "BayesPoint", "bayes_error", "generalization_error",
    "hebb_estimator_theory", "training_loss",
    "LandscapePoint", "PhaseBoundary", "alpha_star", "landscape_energy",
    "minimize_landscape", "solve_gamma_star",
    "Dataset", "ErmResult", "SolverConfig", "generate", "fit_ridge",
    "fit_iterative", "hebb_fit", "measure",
]

__version__ = "0.1.0"
