"""Scalar observables of an overlap state.

Generalization error, asymptotic training loss, the Bayes-optimal baseline,
and the Hebb plug-in estimator's asymptotic performance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .losses import DomainError
from .state_evolution import ModelParams, Overlaps, expect_mixture, qfunc


@dataclass(frozen=True)
class BayesPoint:
    m_bo: float
    q_bo: float
    b_bo: float
    eps_bo: float


def generalization_error(m: float, q: float, b: float,
                         params: ModelParams) -> float:
    """Fraction of misclassified fresh points for a classifier with
    overlaps (m, q) and bias b:
        rho*Q((m+b)/sqrt(delta q)) + (1-rho)*Q((m-b)/sqrt(delta q)).
    """
    if not q > 0:
        raise DomainError(f"generalization_error needs q > 0, got {q}")
    sd = math.sqrt(params.delta * q)
    return float(params.rho * qfunc((m + b) / sd)
                 + (1.0 - params.rho) * qfunc((m - b) / sd))


def training_loss(ov: Overlaps, params: ModelParams,
                  quad_points: int = 400, cutoff: float = 12.0) -> float:
    """Asymptotic training loss per dimension:
        lam*q/2 + alpha * E[loss(prox(h, gamma))].
    """
    loss = params.loss
    g = ov.gamma
    data_term = expect_mixture(
        lambda h, y: loss.value(loss.prox(h, g)),
        ov.m, ov.q, ov.b, params,
        kinks=loss.kinks(g), quad_points=quad_points, cutoff=cutoff)
    return params.lam * ov.q / 2.0 + params.alpha * data_term


def bayes_error(params: ModelParams) -> BayesPoint:
    """Bayes-optimal test error and the overlaps that achieve it.

    m_bo = q_bo = alpha/(delta+alpha), b_bo = (delta/2) log(rho/(1-rho)).
    """
    al, dl, rho = params.alpha, params.delta, params.rho
    m_bo = al / (dl + al)
    b_bo = dl / 2.0 * math.log(rho / (1.0 - rho))
    sd = math.sqrt(dl * m_bo)
    eps = float(rho * qfunc((m_bo + b_bo) / sd)
                + (1.0 - rho) * qfunc((m_bo - b_bo) / sd))
    return BayesPoint(m_bo=m_bo, q_bo=m_bo, b_bo=b_bo, eps_bo=eps)


def hebb_estimator_theory(params: ModelParams):
    """Asymptotic overlaps and error of the label-weighted-mean plug-in.

    m = 1, q = 1 + delta/alpha, optimal bias
    b = (delta*q / 2m) log(rho/(1-rho)); the resulting error equals the
    Bayes-optimal one.
    """
    m = 1.0
    q = 1.0 + params.delta / params.alpha
    b = params.delta * q / (2.0 * m) * math.log(params.rho / (1.0 - params.rho))
    eps = generalization_error(m, q, b, params)
    return m, q, b, eps
