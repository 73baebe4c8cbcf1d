"""Scalar observables: generalization error, training loss, Bayes baseline,
Hebb plug-in."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmm.landscape import minimize_landscape
from gmm.losses import DomainError
from gmm.observables import (bayes_error, generalization_error,
                             hebb_estimator_theory, training_loss)
from gmm.state_evolution import (ModelParams, Overlaps, qfunc,
                                 solve_fixed_point, solve_square_closed_form)


def params(alpha=1.0, delta=1.0, rho=0.5, lam=1.0, loss="square"):
    return ModelParams(alpha=alpha, delta=delta, rho=rho, lam=lam, loss=loss)


# ----------------------------------------------------------------------------
# generalization error
# ----------------------------------------------------------------------------

def test_chance_level_at_zero_overlap():
    for rho in (0.2, 0.5, 0.8):
        assert generalization_error(0.0, 1.0, 0.0, params(rho=rho)) \
            == pytest.approx(0.5, abs=1e-14)


def test_gaussian_tail_value():
    # m / sqrt(delta q) = 1 at balanced clusters gives Q(1)
    val = generalization_error(1.0, 1.0, 0.0, params(rho=0.5))
    assert val == pytest.approx(0.15865525393145707, abs=1e-12)


def test_rejects_nonpositive_q():
    with pytest.raises(DomainError):
        generalization_error(0.5, 0.0, 0.0, params())


def test_scale_invariance():
    p = params(rho=0.3, delta=0.7)
    base = generalization_error(0.6, 1.1, -0.2, p)
    for c in (0.01, 3.0, 250.0):
        scaled = generalization_error(c * 0.6, c * c * 1.1, c * -0.2, p)
        assert scaled == pytest.approx(base, abs=1e-13)


# ----------------------------------------------------------------------------
# Bayes baseline
# ----------------------------------------------------------------------------

def test_bayes_symmetric_closed_form():
    p = params(alpha=1.0, delta=1.0, rho=0.5)
    bp = bayes_error(p)
    assert bp.b_bo == 0.0
    assert bp.m_bo == bp.q_bo == pytest.approx(0.5, abs=1e-15)
    # Q(1/sqrt(2)), frozen Gaussian tail value
    assert bp.eps_bo == pytest.approx(0.23975006109347669, abs=1e-12)


def test_bayes_overlap_formula():
    p = params(alpha=3.0, delta=0.4, rho=0.3)
    bp = bayes_error(p)
    assert bp.m_bo == pytest.approx(3.0 / 3.4, abs=1e-15)
    assert bp.b_bo == pytest.approx(0.2 * math.log(0.3 / 0.7), abs=1e-15)


def test_bayes_large_alpha_reaches_oracle():
    delta, rho = 0.8, 0.3
    p = params(alpha=1e9, delta=delta, rho=rho)
    shift = delta / 2.0 * math.log(rho / (1.0 - rho))
    oracle = (rho * qfunc((1.0 + shift) / math.sqrt(delta))
              + (1.0 - rho) * qfunc((1.0 - shift) / math.sqrt(delta)))
    assert bayes_error(p).eps_bo == pytest.approx(oracle, abs=1e-6)


@given(alpha=st.floats(0.2, 8.0), delta=st.floats(0.1, 3.0),
       rho=st.floats(0.05, 0.95))
@settings(max_examples=100, deadline=None)
def test_hebb_equals_bayes_property(alpha, delta, rho):
    p = params(alpha=alpha, delta=delta, rho=rho)
    m, q, b, eps = hebb_estimator_theory(p)
    assert m == 1.0
    assert q == pytest.approx(1.0 + delta / alpha, abs=1e-14)
    assert eps == pytest.approx(bayes_error(p).eps_bo, abs=1e-12)


def test_hebb_point_values():
    m, q, b, _ = hebb_estimator_theory(params(alpha=1.0, delta=1.0, rho=0.5))
    assert q == pytest.approx(2.0, abs=1e-15)
    assert b == 0.0


def test_bayes_monotonicity_in_alpha_and_delta():
    errs_alpha = [bayes_error(params(alpha=a, delta=1.0)).eps_bo
                  for a in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(x > y for x, y in zip(errs_alpha, errs_alpha[1:]))
    errs_delta = [bayes_error(params(alpha=2.0, delta=d)).eps_bo
                  for d in (0.2, 0.5, 1.0, 2.0)]
    assert all(x < y for x, y in zip(errs_delta, errs_delta[1:]))


@pytest.mark.parametrize("loss", ["square", "logistic", "hinge"])
def test_bayes_lower_bounds_erm_theory(loss):
    for alpha, lam in ((1.5, 0.01), (3.0, 1.0)):
        p = params(alpha=alpha, delta=1.0, rho=0.3, lam=lam, loss=loss)
        rep = solve_fixed_point(p)
        assert rep.converged
        assert rep.eps_gen >= bayes_error(p).eps_bo - 1e-10


# ----------------------------------------------------------------------------
# training loss
# ----------------------------------------------------------------------------

def test_training_loss_square_analytic():
    p = params(2.0, 1.0, 0.5, 1.0)
    rep = solve_square_closed_form(p)
    # quadrature training loss at the fixed point equals the analytic one
    quad = training_loss(rep.overlaps, p)
    assert quad == pytest.approx(rep.train_loss, abs=1e-10)


def test_training_loss_matches_landscape_minimum():
    p = params(2.0, 1.0, 0.5, 1.0)
    rep = solve_square_closed_form(p)
    pt = minimize_landscape(p)
    assert pt.energy == pytest.approx(rep.train_loss, abs=1e-6)


def test_training_loss_small_alpha_dominated_by_ridge():
    p = params(alpha=1e-6, delta=1.0, rho=0.5, lam=1.0, loss="logistic")
    rep = solve_fixed_point(p)
    assert rep.converged
    assert rep.train_loss == pytest.approx(
        p.lam * rep.overlaps.q / 2.0, abs=1e-6)
    assert rep.train_loss < 1e-5


def test_hinge_training_loss_vanishes_below_transition():
    # alpha = 2 is below alpha*(1, 0.5) ~ 3.7: separable regime
    p = params(2.0, 1.0, 0.5, 1e-7, "hinge")
    rep = solve_fixed_point(p)
    assert rep.train_loss < 1e-4
