"""Fixed-point equations for the asymptotic overlaps of regularized ERM.

Solves the self-consistent system for (m, q, b, gamma) and the conjugate
parameters (m_hat, q_hat, gamma_hat) describing the d -> infinity limit of
convex classification on the two-cluster Gaussian mixture. Expectations are
over the scalar field h ~ N(m + y*b, delta*q) with y = +1 w.p. rho.

Square loss admits a fully closed-form solution; hinge admits closed-form
Gaussian kernels used as an independent cross-check of the quadrature path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .losses import DomainError, LossSpec, NumericalError, get_loss

#: gamma beyond this is treated as divergent (separable regime at lambda=0)
GAMMA_DIVERGENCE = 1e8
#: lambda=0 is remapped to this inside the generic iterative solver
LAMBDA_FLOOR = 1e-12


def qfunc(x):
    """Gaussian tail Q(x) = P(N(0,1) > x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _phi(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ModelParams:
    """Problem instance: sample ratio, noise, cluster imbalance, ridge, loss."""

    alpha: float
    delta: float
    rho: float
    lam: float
    loss: LossSpec

    def __post_init__(self):
        if not isinstance(self.loss, LossSpec):
            name = getattr(self.loss, "value", self.loss)
            object.__setattr__(self, "loss", get_loss(name))
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.delta > 0:
            raise DomainError(f"delta must be > 0, got {self.delta}")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must be in (0,1), got {self.rho}")
        if not self.lam >= 0:
            raise DomainError(f"lam must be >= 0, got {self.lam}")


@dataclass
class Overlaps:
    """Order parameters of a fixed-point state and their conjugates."""

    m: float
    q: float
    b: float
    gamma: float
    m_hat: float = 0.0
    q_hat: float = 0.0
    gamma_hat: float = 0.0


@dataclass
class FixedPointConfig:
    tol: float = 1e-9
    max_iter: int = 12000
    damping: float = 0.5
    init: Optional[Overlaps] = None
    quad_points: int = 400
    quad_cutoff: float = 12.0

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be > 0")
        if not 0 <= self.damping < 1:
            raise DomainError("damping must be in [0,1)")
        if self.quad_points < 32:
            raise DomainError("quad_points must be >= 32")


def default_init() -> Overlaps:
    # (q, gamma, m, b) = (0.5, 0.5, 0.01, 0)
    return Overlaps(m=0.01, q=0.5, b=0.0, gamma=0.5)


@dataclass
class TheoryReport:
    overlaps: Overlaps
    converged: bool
    iterations: int
    residual: float
    eps_gen: float
    train_loss: float
    status: str = "converged"  # converged | max_iter | diverging-gamma
    clamped: bool = False  # q was clipped to m^2 at some iterate


# ----------------------------------------------------------------------------
# Gaussian-mixture quadrature
# ----------------------------------------------------------------------------

_GL_CACHE: dict = {}


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _cluster_nodes(mu: float, sigma: float, kinks: Sequence[float],
                   quad_points: int, cutoff: float):
    """Quadrature nodes/weights for E_{h~N(mu,sigma^2)}[g(h)].

    The window [mu - cutoff*sigma, mu + cutoff*sigma] is split at any kink
    locations falling inside it so every panel integrates a smooth function.
    Weights include the Gaussian density.
    """
    lo = mu - cutoff * sigma
    hi = mu + cutoff * sigma
    edges = [lo] + sorted(k for k in kinks if lo < k < hi) + [hi]
    widths = np.diff(edges)
    total = widths.sum()
    nodes_list, weights_list = [], []
    for a, w in zip(edges[:-1], widths):
        n = max(32, int(round(quad_points * w / total)))
        x, wq = _gauss_legendre(n)
        hn = a + 0.5 * w * (x + 1.0)
        nodes_list.append(hn)
        weights_list.append(0.5 * w * wq * _phi((hn - mu) / sigma) / sigma)
    return np.concatenate(nodes_list), np.concatenate(weights_list)


def mixture_nodes(m: float, q: float, b: float, params: ModelParams,
                  kinks: Sequence[float] = (), quad_points: int = 400,
                  cutoff: float = 12.0):
    """Nodes, weights and labels for the two-cluster mixture expectation."""
    if not q > 0:
        raise DomainError(f"mixture expectation needs q > 0, got {q}")
    sigma = math.sqrt(params.delta * q)
    out = []
    for y, wy in ((1, params.rho), (-1, 1.0 - params.rho)):
        h, w = _cluster_nodes(m + y * b, sigma, kinks, quad_points, cutoff)
        out.append((h, wy * w, y))
    return out


def expect_mixture(g: Callable, m: float, q: float, b: float,
                   params: ModelParams, kinks: Sequence[float] = (),
                   quad_points: int = 400, cutoff: float = 12.0) -> float:
    """rho*E[g(h,+1)] + (1-rho)*E[g(h,-1)], h ~ N(m + y*b, delta*q).

    `g` must be vectorized in its first argument.
    """
    total = 0.0
    for h, w, y in mixture_nodes(m, q, b, params, kinks, quad_points, cutoff):
        vals = np.asarray(g(h, y), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("expect_mixture: integrand returned non-finite values")
        total += float(w @ vals)
    return total


# ----------------------------------------------------------------------------
# hat updates and bias equation
# ----------------------------------------------------------------------------

def hat_updates(ov: Overlaps, params: ModelParams,
                quad_points: int = 400, cutoff: float = 12.0
                ) -> Tuple[float, float, float]:
    """Conjugate parameters (m_hat, q_hat, gamma_hat) at state `ov`."""
    if not ov.gamma > 0:
        raise DomainError("hat_updates needs gamma > 0")
    loss = params.loss
    al, dl, g = params.alpha, params.delta, ov.gamma
    kinks = loss.kinks(g)
    e_diff = e_diff2 = e_dv = 0.0
    for h, w, _y in mixture_nodes(ov.m, ov.q, ov.b, params, kinks,
                                  quad_points, cutoff):
        v = loss.prox(h, g)
        diff = v - h
        e_diff += float(w @ diff)
        e_diff2 += float(w @ (diff * diff))
        e_dv += float(w @ loss.prox_h_grad(h, g))
    m_hat = al / g * e_diff
    q_hat = al * dl / g ** 2 * e_diff2
    gamma_hat = al * dl / g * (1.0 - e_dv)
    return m_hat, q_hat, gamma_hat


def _bias_residual(b: float, m: float, q: float, gamma: float,
                   params: ModelParams, quad_points: int, cutoff: float) -> float:
    loss = params.loss
    kinks = loss.kinks(gamma)
    total = 0.0
    for h, w, y in mixture_nodes(m, q, b, params, kinks, quad_points, cutoff):
        total += y * float(w @ (loss.prox(h, gamma) - h))
    return total


def solve_bias(ov: Overlaps, params: ModelParams,
               quad_points: int = 400, cutoff: float = 12.0,
               xtol: float = 1e-14) -> float:
    """Bias solving E_{y,h}[y (v - h)] = 0 at fixed (m, q, gamma).

    The bracket grows geometrically from [-1, 1] until a sign change is
    found; |b| > 50 without one is reported as a numerical error.
    """
    if not (ov.q > 0 and ov.gamma > 0):
        raise DomainError("solve_bias needs q > 0 and gamma > 0")

    def f(b):
        return _bias_residual(b, ov.m, ov.q, ov.gamma, params, quad_points, cutoff)

    lo, hi = -1.0, 1.0
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    while flo * fhi > 0:
        lo *= 2.0
        hi *= 2.0
        if hi > 50.0:
            raise NumericalError(
                "solve_bias: no sign change of E[y(v-h)] for |b| <= 50")
        flo, fhi = f(lo), f(hi)
    return float(brentq(f, lo, hi, xtol=xtol))


def _eps_gen(m: float, q: float, b: float, params: ModelParams) -> float:
    sd = math.sqrt(params.delta * q)
    return float(params.rho * qfunc((m + b) / sd)
                 + (1.0 - params.rho) * qfunc((m - b) / sd))


# ----------------------------------------------------------------------------
# the damped fixed-point iteration
# ----------------------------------------------------------------------------

def solve_fixed_point(params: ModelParams,
                      cfg: Optional[FixedPointConfig] = None) -> TheoryReport:
    """Damped iteration of the full overlap system for any loss.

    Per outer iteration: conjugates from the current state, then the
    (m, q, gamma) updates, then the bias re-solve, then damping of all
    four. Stops when the un-damped update would move no coordinate by
    more than tol in relative terms; that residual vanishes only at a
    genuine fixed point, independent of the damping factor.

    The damping factor escalates automatically when the residual grows
    for two successive iterations: near some parameter points the
    undamped map has a strongly negative slope in m and the default
    damping sits at the edge of the period-2 stability region.
    """
    from .observables import training_loss  # deferred: observables imports us

    cfg = cfg or FixedPointConfig()
    lam = max(params.lam, LAMBDA_FLOOR)
    ov = cfg.init or default_init()
    m, q, b, gamma = ov.m, ov.q, ov.b, ov.gamma
    d = cfg.damping
    residual = math.inf
    status = "max_iter"
    converged = False
    clamped = False
    hats = (0.0, 0.0, 0.0)
    it = 0
    growth_streak = 0
    res_prev2 = (math.inf, math.inf)  # residuals from the last two iterations
    for it in range(1, cfg.max_iter + 1):
        state = Overlaps(m=m, q=q, b=b, gamma=gamma)
        m_hat, q_hat, gamma_hat = hat_updates(
            state, params, cfg.quad_points, cfg.quad_cutoff)
        hats = (m_hat, q_hat, gamma_hat)
        denom = lam + gamma_hat
        m_new = m_hat / denom
        q_new = (q_hat + m_hat ** 2) / denom ** 2
        gamma_new = params.delta / denom
        if q_new < m_new ** 2:
            q_new = m_new ** 2 + 1e-300
            clamped = True
        b_new = solve_bias(
            Overlaps(m=m_new, q=q_new, b=b, gamma=gamma_new), params,
            cfg.quad_points, cfg.quad_cutoff)
        residual_new = max(
            abs(new - old) / max(1.0, abs(old))
            for new, old in ((m_new, m), (q_new, q),
                             (gamma_new, gamma), (b_new, b)))
        m = (1.0 - d) * m_new + d * m
        q = (1.0 - d) * q_new + d * q
        gamma = (1.0 - d) * gamma_new + d * gamma
        b = (1.0 - d) * b_new + d * b
        # compare against the residual two iterations back so that growing
        # period-2 oscillations register as growth despite alternating size
        if residual_new > res_prev2[0]:
            growth_streak += 1
            if growth_streak >= 2 and d < 0.95:
                d = 0.5 * (1.0 + d)
                growth_streak = 0
        else:
            growth_streak = 0
        res_prev2 = (res_prev2[1], residual_new)
        residual = residual_new
        if gamma > GAMMA_DIVERGENCE:
            status = "diverging-gamma"
            break
        if residual < cfg.tol:
            status = "converged"
            converged = True
            break
    out = Overlaps(m=m, q=q, b=b, gamma=gamma,
                   m_hat=hats[0], q_hat=hats[1], gamma_hat=hats[2])
    return TheoryReport(
        overlaps=out,
        converged=converged,
        iterations=it,
        residual=residual,
        eps_gen=_eps_gen(m, q, b, params),
        train_loss=training_loss(out, params,
                                 quad_points=cfg.quad_points,
                                 cutoff=cfg.quad_cutoff),
        status=status,
        clamped=clamped,
    )


# ----------------------------------------------------------------------------
# square loss: fully closed form
# ----------------------------------------------------------------------------

def solve_square_closed_form(params: ModelParams) -> TheoryReport:
    """Analytic fixed point for the square loss; no iteration.

    gamma solves the quadratic  lam*gamma^2 - (delta*(1-alpha) - lam)*gamma
    - delta = 0 (positive root, evaluated in a cancellation-free form);
    then b = (2 rho - 1)(1 - m) and (m, q) follow in closed form.
    At lam = 0 with alpha <= 1 the q denominator is nonpositive and the
    point is reported as divergent (the interpolation peak).
    """
    from .losses import LossKind

    if params.loss.kind is not LossKind.SQUARE:
        raise DomainError("solve_square_closed_form requires the square loss")
    al, dl, rho, lam = params.alpha, params.delta, params.rho, params.lam
    c = dl * (1.0 - al) - lam
    disc = math.sqrt(c * c + 4.0 * lam * dl)
    if disc - c <= 0.0:  # lam = 0, alpha <= 1: gamma -> infinity
        return _divergent_square_report(params)
    gamma = 2.0 * dl / (disc - c)
    if gamma > GAMMA_DIVERGENCE:
        return _divergent_square_report(params)
    r4 = 4.0 * al * gamma * rho * (1.0 - rho)
    m = r4 / (dl * (1.0 + gamma) + r4)
    b = (2.0 * rho - 1.0) * (1.0 - m)
    qden = (1.0 + gamma) ** 2 - al * gamma ** 2
    if qden <= 0.0:
        return _divergent_square_report(params)
    q = (al * gamma ** 2 / dl * ((1.0 - m) ** 2 - b ** 2)
         + (1.0 + gamma) ** 2 * m ** 2) / qden
    gamma_hat = al * dl / (1.0 + gamma)
    m_hat = al / (1.0 + gamma) * (1.0 - m - (2.0 * rho - 1.0) * b)
    q_hat = al * dl / (1.0 + gamma) ** 2 * (
        dl * q + rho * (1.0 - m - b) ** 2 + (1.0 - rho) * (1.0 - m + b) ** 2)
    ov = Overlaps(m=m, q=q, b=b, gamma=gamma,
                  m_hat=m_hat, q_hat=q_hat, gamma_hat=gamma_hat)
    # E[(v-1)^2] = E[(h-1)^2]/(1+gamma)^2 gives the data term analytically
    e_sq = (dl * q + rho * (m + b - 1.0) ** 2
            + (1.0 - rho) * (m - b - 1.0) ** 2) / (1.0 + gamma) ** 2
    train = lam * q / 2.0 + al * e_sq / 2.0
    return TheoryReport(
        overlaps=ov, converged=True, iterations=0, residual=0.0,
        eps_gen=_eps_gen(m, q, b, params), train_loss=train,
        status="converged",
    )


def _divergent_square_report(params: ModelParams) -> TheoryReport:
    ov = Overlaps(m=math.nan, q=math.nan, b=math.nan, gamma=math.inf)
    return TheoryReport(overlaps=ov, converged=False, iterations=0,
                        residual=math.inf, eps_gen=math.nan,
                        train_loss=math.nan, status="diverging-gamma")


# ----------------------------------------------------------------------------
# hinge loss: closed-form Gaussian kernels (independent of quadrature)
# ----------------------------------------------------------------------------

def hinge_kernels(ov: Overlaps, params: ModelParams
                  ) -> Tuple[float, float, float]:
    """(K_gamma, K_m, K_q) for the hinge prox in closed Gaussian form.

    K_m = E[v - h], K_q = E[(v - h)^2], and
    K_gamma = lam*gamma/delta + alpha * P(1 - gamma < h < 1), so that
    gamma_hat = delta*K_gamma/gamma - lam. Used to cross-check the generic
    quadrature hats.
    """
    al, dl, rho, lam = params.alpha, params.delta, params.rho, params.lam
    g, q = ov.gamma, ov.q
    sd = math.sqrt(dl * q)
    k_gamma = lam * g / dl
    k_m = 0.0
    k_q = 0.0
    for y, wy in ((1, rho), (-1, 1.0 - rho)):
        mu = ov.m + y * ov.b
        a = 1.0 - mu          # (1 - mu)
        t1 = a / sd           # standardized distance to h = 1
        t0 = (a - g) / sd     # standardized distance to h = 1 - gamma
        p_mid = float(qfunc(t0) - qfunc(t1))
        k_gamma += al * wy * p_mid
        k_m += wy * (sd * float(_phi(t1) - _phi(t0))
                     + a * p_mid + g * float(qfunc(-t0)))
        k_q += wy * (sd * float(a * _phi(t1) - (g + a) * _phi(t0))
                     + (dl * q + a * a) * p_mid + g * g * float(qfunc(-t0)))
    return k_gamma, k_m, k_q


def hats_from_hinge_kernels(ov: Overlaps, params: ModelParams
                            ) -> Tuple[float, float, float]:
    """(m_hat, q_hat, gamma_hat) derived from the closed-form kernels."""
    k_gamma, k_m, k_q = hinge_kernels(ov, params)
    g = ov.gamma
    m_hat = params.alpha / g * k_m
    q_hat = params.alpha * params.delta / g ** 2 * k_q
    gamma_hat = params.delta * k_gamma / g - params.lam
    return m_hat, q_hat, gamma_hat
