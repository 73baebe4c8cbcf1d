"""Deterministic training-loss landscape and the separability boundary.

The landscape energy at constrained overlaps (q, m, b) is
    E(q, m, b) = alpha * E[loss(v_{gamma*})] + lam*q/2,
with v_gamma the prox of the mixture field h at step gamma and gamma* the
unique root of  alpha*gamma^2*E[(loss'(v_gamma))^2] = delta*(q - m^2).
Its global minimizer reproduces the fixed point of the overlap system.
At lam = 0, the infimum vanishes iff alpha is below the separability
threshold alpha*(delta, rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .losses import DomainError, NumericalError
from .state_evolution import ModelParams, mixture_nodes, qfunc, _phi

GAMMA_LO = 1e-12
GAMMA_HI = 1e12


class DegenerateInputError(DomainError):
    """q <= m^2: the constrained set has an empty interior."""


class DivergingGammaError(NumericalError):
    """No finite gamma* in [GAMMA_LO, GAMMA_HI]; separable-regime indicator."""


@dataclass
class LandscapePoint:
    q: float
    m: float
    b: float
    gamma_star: float
    energy: float
    status: str = "ok"  # ok | diverging-gamma


@dataclass(frozen=True)
class PhaseBoundary:
    delta: float
    rho: float
    alpha_star: float
    r_star: float
    b_star: float
    boundary_hit: bool = False


def _second_moment_vh(gamma: float, q: float, m: float, b: float,
                      params: ModelParams, quad_points: int,
                      cutoff: float) -> float:
    """alpha * gamma^2 * E[(loss'(v_gamma))^2] evaluated as alpha*E[(v-h)^2].

    The prox stationarity v - h = -gamma*loss'(v) makes the two forms equal
    while staying well defined at hinge kinks.
    """
    loss = params.loss
    total = 0.0
    for h, w, _y in mixture_nodes(m, q, b, params, loss.kinks(gamma),
                                  quad_points, cutoff):
        diff = loss.prox(h, gamma) - h
        total += float(w @ (diff * diff))
    return params.alpha * total


def solve_gamma_star(q: float, m: float, b: float, params: ModelParams,
                     quad_points: int = 400, cutoff: float = 12.0,
                     hint: Optional[float] = None) -> float:
    """Lagrange multiplier gamma* at constrained overlaps (q, m, b).

    Root of alpha*gamma^2*E[(loss'(v_gamma))^2] - delta*(q - m^2) in
    log-gamma over [1e-12, 1e12]. q = m^2 returns 0 by continuity; no sign
    change at the upper cap raises DivergingGammaError. A `hint` (e.g. the
    gamma* of a neighboring state) seeds a narrow bracket that is widened
    until it straddles the root, which is much cheaper than the full range.
    """
    gap = params.delta * (q - m * m)
    if q < m * m:
        raise DegenerateInputError(f"q={q} < m^2={m * m}")
    if gap == 0.0:
        return 0.0

    def f(log_g):
        return _second_moment_vh(math.exp(log_g), q, m, b, params,
                                 quad_points, cutoff) - gap

    lo_cap, hi_cap = math.log(GAMMA_LO), math.log(GAMMA_HI)
    lo, hi = lo_cap, hi_cap
    if hint is not None and GAMMA_LO < hint < GAMMA_HI:
        width = 0.7
        center = math.log(hint)
        while width < (hi_cap - lo_cap):
            lo = max(lo_cap, center - width)
            hi = min(hi_cap, center + width)
            flo, fhi = f(lo), f(hi)
            if flo <= 0.0 <= fhi:
                return math.exp(brentq(f, lo, hi, xtol=1e-13))
            # the integrand is nondecreasing in gamma: recenter on the
            # violated side and widen
            center = hi if fhi < 0.0 else lo
            width *= 4.0
        lo, hi = lo_cap, hi_cap
    if f(hi) < 0.0:
        raise DivergingGammaError(
            f"no gamma* below {GAMMA_HI:.0e} at (q={q}, m={m}, b={b})")
    if f(lo) > 0.0:
        # gap smaller than anything resolvable: gamma* is essentially 0
        return GAMMA_LO
    return math.exp(brentq(f, lo, hi, xtol=1e-13))


def _data_term(gamma: float, q: float, m: float, b: float,
               params: ModelParams, quad_points: int, cutoff: float) -> float:
    loss = params.loss
    total = 0.0
    if gamma == 0.0:
        for h, w, _y in mixture_nodes(m, q, b, params, (), quad_points, cutoff):
            total += float(w @ loss.value(h))
    else:
        for h, w, _y in mixture_nodes(m, q, b, params, loss.kinks(gamma),
                                      quad_points, cutoff):
            total += float(w @ loss.value(loss.prox(h, gamma)))
    return total


def landscape_energy(q: float, m: float, b: float, params: ModelParams,
                     quad_points: int = 400, cutoff: float = 12.0,
                     hint: Optional[float] = None) -> LandscapePoint:
    """Deterministic landscape value at constrained overlaps (q, m, b)."""
    if q < m * m:
        raise DegenerateInputError(f"q={q} < m^2={m * m}")
    status = "ok"
    try:
        gamma_star = solve_gamma_star(q, m, b, params, quad_points, cutoff,
                                      hint=hint)
    except DivergingGammaError:
        # separable direction: evaluate at the cap, the energy limit
        gamma_star = GAMMA_HI
        status = "diverging-gamma"
    energy = (params.alpha
              * _data_term(gamma_star, q, m, b, params, quad_points, cutoff)
              + params.lam * q / 2.0)
    return LandscapePoint(q=q, m=m, b=b, gamma_star=gamma_star,
                          energy=energy, status=status)


@dataclass
class SearchBox:
    """Multi-start box for the landscape minimization, in the coordinates
    (theta = m/sqrt(q), log q, b) that enforce m^2 <= q by construction."""
    theta_starts: Sequence[float] = (0.2, 0.7)
    log_q_starts: Sequence[float] = (math.log(0.3), math.log(2.0))
    b_starts: Sequence[float] = (0.0,)


def minimize_landscape(params: ModelParams,
                       search: Optional[SearchBox] = None,
                       quad_points: int = 400, cutoff: float = 12.0
                       ) -> LandscapePoint:
    """Global minimizer of the landscape energy over {m^2 <= q, b}.

    Derivative-free (Nelder-Mead) in (atanh(theta), log q, b) with
    multi-start; requires lam > 0 so the minimum is attained at finite q.
    """
    if not params.lam > 0:
        raise DomainError("minimize_landscape requires lam > 0")
    search = search or SearchBox()
    if params.rho != 0.5 and search.b_starts == (0.0,):
        b0 = params.delta / 2.0 * math.log(params.rho / (1.0 - params.rho))
        search = SearchBox(search.theta_starts, search.log_q_starts, (0.0, b0))

    hint = [None]  # gamma* of the previous evaluation, shared across starts

    def objective(x):
        theta = math.tanh(x[0])
        qv = math.exp(x[1])
        mv = theta * math.sqrt(qv)
        try:
            pt = landscape_energy(qv, mv, x[2], params,
                                  quad_points, cutoff, hint=hint[0])
        except (DegenerateInputError, NumericalError):
            return math.inf
        if pt.status == "ok":
            hint[0] = pt.gamma_star
        return pt.energy

    best = None
    failures = 0
    for th in search.theta_starts:
        for lq in search.log_q_starts:
            for b0 in search.b_starts:
                x0 = np.array([math.atanh(th), lq, b0])
                res = minimize(objective, x0, method="Nelder-Mead",
                               options={"xatol": 1e-8, "fatol": 1e-13,
                                        "maxiter": 2000})
                if not res.success:
                    failures += 1
                if best is None or res.fun < best.fun:
                    best = res
    n_starts = (len(search.theta_starts) * len(search.log_q_starts)
                * len(search.b_starts))
    if best is None or (failures == n_starts and not math.isfinite(best.fun)):
        raise NumericalError(
            f"minimize_landscape: all {n_starts} starts failed; "
            f"best found: {best}")
    theta = math.tanh(best.x[0])
    qv = math.exp(best.x[1])
    mv = theta * math.sqrt(qv)
    return landscape_energy(qv, mv, float(best.x[2]), params,
                            quad_points, cutoff)


# ----------------------------------------------------------------------------
# separability phase boundary
# ----------------------------------------------------------------------------

def truncated_second_moment(c) -> float:
    """g(c) = int_0^inf u^2 N(u + c; 0, 1) du = (1 + c^2) Q(c) - c phi(c)."""
    c = np.asarray(c, dtype=float)
    out = (1.0 + c * c) * qfunc(c) - c * _phi(c)
    return out if out.ndim else float(out)


def eta(r: float, b: float, delta: float, rho: float) -> float:
    """Objective whose maximum over r in [0,1] and b is alpha*(delta, rho)."""
    c = r / math.sqrt(delta)
    den = (rho * truncated_second_moment(c - b)
           + (1.0 - rho) * truncated_second_moment(c + b))
    return (1.0 - r * r) / den


def alpha_star(delta: float, rho: float) -> PhaseBoundary:
    """Separability threshold: training data are perfectly separable at
    lam = 0 iff alpha < alpha_star(delta, rho).
    """
    if not delta > 0:
        raise DomainError("alpha_star needs delta > 0")
    if not 0 < rho < 1:
        raise DomainError("alpha_star needs rho in (0,1)")
    b_cap = 10.0 + 5.0 * math.sqrt(delta)
    boundary_hit = False

    def best_over_b(r: float) -> Tuple[float, float]:
        cap = b_cap
        while True:
            # two bracketed starts cover the two slopes of the b-profile
            cands = []
            for lo, hi in ((-cap, 0.0), (0.0, cap), (-cap, cap)):
                res = minimize_scalar(lambda b: -eta(r, b, delta, rho),
                                      bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-10})
                cands.append((-res.fun, float(res.x)))
            val, b = max(cands)
            if abs(b) < cap * (1.0 - 1e-6):
                return val, b
            cap *= 2.0
            if cap > 1e6:
                return val, b  # reported via boundary_hit

    def neg_outer(r: float) -> float:
        return -best_over_b(r)[0]

    res = minimize_scalar(neg_outer, bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-10})
    r_star = float(res.x)
    a_star, b_star = best_over_b(r_star)
    # also probe the r-endpoints, where the bounded search can be weak
    for r_end in (0.0, 1.0 - 1e-12):
        v_end, b_end = best_over_b(r_end)
        if v_end > a_star:
            a_star, r_star, b_star = v_end, r_end, b_end
    if abs(b_star) >= b_cap * (1.0 - 1e-6):
        boundary_hit = True
    return PhaseBoundary(delta=delta, rho=rho, alpha_star=a_star,
                         r_star=r_star, b_star=b_star,
                         boundary_hit=boundary_hit)
