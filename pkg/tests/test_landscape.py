"""Training-loss landscape and the separability phase boundary."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm

from gmm.landscape import (DegenerateInputError, alpha_star, eta,
                           landscape_energy, minimize_landscape,
                           solve_gamma_star, truncated_second_moment)
from gmm.losses import DomainError
from gmm.state_evolution import (FixedPointConfig, ModelParams,
                                 expect_mixture, qfunc, solve_fixed_point,
                                 solve_square_closed_form)


def params(alpha=1.0, delta=1.0, rho=0.5, lam=1.0, loss="square"):
    return ModelParams(alpha=alpha, delta=delta, rho=rho, lam=lam, loss=loss)


# ----------------------------------------------------------------------------
# gamma* equation
# ----------------------------------------------------------------------------

def test_gamma_star_square_against_reduced_scalar_equation():
    # square loss: l'(v) = v - 1 with v = (h+gamma)/(1+gamma) reduces the
    # defining equation to alpha*gamma^2*E[((h-1)/(1+gamma))^2] = delta(q-m^2)
    p = params(alpha=2.0, delta=1.0, rho=0.5)
    q, m, b = 1.0, 0.5, 0.0
    generic = solve_gamma_star(q, m, b, p)

    def reduced(gamma):
        e = expect_mixture(lambda h, y: (h - 1.0) ** 2, m, q, b, p)
        return p.alpha * gamma ** 2 * e / (1.0 + gamma) ** 2 \
            - p.delta * (q - m * m)

    oracle = brentq(reduced, 1e-9, 1e9, xtol=1e-14, rtol=1e-15)
    assert generic == pytest.approx(oracle, rel=1e-8)


def test_gamma_star_independent_of_lambda():
    q, m, b = 1.3, 0.4, -0.1
    g0 = solve_gamma_star(q, m, b, params(lam=0.0, loss="logistic"))
    g5 = solve_gamma_star(q, m, b, params(lam=5.0, loss="logistic"))
    assert g0 == pytest.approx(g5, rel=1e-10)


def test_gamma_star_rejects_degenerate_ray():
    # q < m^2 violates the Cauchy-Schwarz constraint q >= m^2
    with pytest.raises((DegenerateInputError, DomainError)):
        solve_gamma_star(0.24, 0.5, 0.0, params())
    # the boundary q == m^2 is admitted by continuity with gamma* = 0
    assert solve_gamma_star(0.25, 0.5, 0.0, params()) == 0.0


@pytest.mark.parametrize("loss", ["square", "logistic", "hinge"])
def test_gamma_star_lhs_monotone_in_gamma(loss):
    # the defining left-hand side alpha*E[(v-h)^2]/gamma^0... is checked via
    # the second moment of (v - h), which must be nondecreasing in gamma
    p = params(alpha=2.0, delta=1.0, rho=0.3, loss=loss)
    q, m, b = 1.5, 0.6, -0.2
    gammas = np.logspace(-3, 3, 25)

    def second_moment(g):
        return expect_mixture(
            lambda h, y: (p.loss.prox(h, g) - h) ** 2,
            m, q, b, p, kinks=p.loss.kinks(g))

    vals = [second_moment(g) for g in gammas]
    assert all(b2 >= a2 - 1e-12 for a2, b2 in zip(vals, vals[1:]))


# ----------------------------------------------------------------------------
# landscape energy and its minimum
# ----------------------------------------------------------------------------

def test_energy_at_tiny_alpha_is_ridge_term():
    p = params(alpha=1e-9, delta=1.0, rho=0.5, lam=2.0, loss="logistic")
    pt = landscape_energy(1.7, 0.3, 0.0, p)
    assert pt.energy == pytest.approx(p.lam * 1.7 / 2.0, abs=1e-6)


def test_energy_vanishes_in_separable_regime():
    # alpha = 2 < alpha*(1, 0.5): along the optimal ray the infimum is 0
    p = params(alpha=2.0, delta=1.0, rho=0.5, lam=0.0, loss="hinge")
    pb = alpha_star(p.delta, p.rho)
    r = pb.r_star
    energies = []
    for q in (1e2, 1e4, 1e6):
        m = r * math.sqrt(q)
        pt = landscape_energy(q, m, pb.b_star * math.sqrt(q), p)
        energies.append(pt.energy)
    assert energies[-1] < 1e-3
    assert all(b2 <= a2 + 1e-12 for a2, b2 in zip(energies, energies[1:]))


def test_minimizer_matches_square_closed_form():
    p = params(2.0, 1.0, 0.5, 1.0)
    closed = solve_square_closed_form(p)
    pt = minimize_landscape(p)
    assert pt.status == "ok"
    assert pt.q == pytest.approx(closed.overlaps.q, abs=1e-4)
    assert pt.m == pytest.approx(closed.overlaps.m, abs=1e-4)
    assert pt.b == pytest.approx(closed.overlaps.b, abs=1e-4)
    assert pt.energy == pytest.approx(closed.train_loss, abs=1e-6)


def test_minimizer_bias_zero_at_balanced_clusters():
    p = params(1.5, 1.0, 0.5, 0.5, loss="logistic")
    pt = minimize_landscape(p)
    assert abs(pt.b) < 1e-6


@pytest.mark.parametrize("loss", ["square", "logistic", "hinge"])
def test_minimizer_matches_fixed_point(loss):
    p = params(3.0, 1.0, 0.3, 0.1, loss)
    rep = solve_fixed_point(p)
    pt = minimize_landscape(p)
    assert rep.converged
    assert pt.m / math.sqrt(pt.q) == pytest.approx(
        rep.overlaps.m / math.sqrt(rep.overlaps.q), abs=1e-3)
    assert pt.b == pytest.approx(rep.overlaps.b, abs=1e-3)
    assert pt.energy == pytest.approx(rep.train_loss, abs=1e-4)
    assert pt.m ** 2 <= pt.q


# ----------------------------------------------------------------------------
# phase boundary
# ----------------------------------------------------------------------------

def test_truncated_second_moment_closed_form():
    # g(c) = integral_0^inf u^2 phi(u+c) du = (1+c^2) Q(c) - c phi(c)
    for c in (-2.0, -0.3, 0.0, 0.7, 2.5):
        oracle = quad(lambda u: u * u * norm.pdf(u + c), 0.0, np.inf,
                      limit=200)[0]
        assert truncated_second_moment(c) == pytest.approx(oracle, abs=1e-10)


def test_cover_limit():
    pb = alpha_star(1e6, 0.5)
    assert pb.alpha_star == pytest.approx(2.0, abs=0.01)


def test_alpha_star_balanced_bias_is_zero():
    pb = alpha_star(1.0, 0.5)
    assert abs(pb.b_star) < 1e-6
    assert not pb.boundary_hit


def test_alpha_star_matches_eta_at_maximizer():
    pb = alpha_star(0.7, 0.3)
    assert pb.alpha_star == pytest.approx(
        eta(pb.r_star, pb.b_star, 0.7, 0.3), rel=1e-10)
    assert 0.0 <= pb.r_star <= 1.0


def test_alpha_star_ordering_in_rho():
    vals = [alpha_star(1.0, rho).alpha_star for rho in (0.1, 0.3, 0.5)]
    assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))


def test_alpha_star_consistent_with_hinge_training_loss():
    # the hinge training loss at lam ~ 0 departs from zero at alpha*
    pb = alpha_star(1.0, 0.5)

    def hinge_train(alpha):
        p = params(alpha=alpha, delta=1.0, rho=0.5, lam=1e-7, loss="hinge")
        cfg = FixedPointConfig(tol=1e-7, max_iter=60000)
        return solve_fixed_point(p, cfg).train_loss

    # At finite lam the squared norm q blows up approaching the threshold, so
    # the penalty lam*q/2 lifts the loss off zero slightly below alpha*; the
    # exact crossing location is therefore a finite-lam artifact and only the
    # order-of-magnitude separation across the threshold is asserted.
    lo, hi = 0.9 * pb.alpha_star, 1.1 * pb.alpha_star
    assert hinge_train(lo) < 1e-4
    assert hinge_train(hi) > 1e-3
