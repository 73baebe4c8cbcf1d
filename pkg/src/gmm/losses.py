"""Convex classification losses: values, derivatives, proximal maps, conjugates.

Each loss is packaged as a `LossSpec` whose callables are numpy-vectorized
(scalars in, scalars out; arrays in, arrays out). The proximal map

    prox(h, gamma) = argmin_w  (w - h)^2 / (2 gamma) + loss(w)

is the scalar denoiser that every expectation downstream is built on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, lambertw


class DomainError(ValueError):
    """Raised when an argument is outside an operation's domain."""


class NumericalError(RuntimeError):
    """Raised when an internal iterative routine misses its tolerance."""


class LossKind(Enum):
    SQUARE = "square"
    LOGISTIC = "logistic"
    HINGE = "hinge"


#: tolerance on the prox stationarity residual |v - h + gamma * grad(v)|
PROX_TOL = 1e-12
#: iteration cap for the safeguarded Newton solve of the logistic prox
PROX_MAX_ITER = 200


@dataclass(frozen=True)
class LossSpec:
    """A convex loss bundled with everything the theory needs.

    `hess` is None where the second derivative is undefined (hinge).
    `prox_h_grad` returns dv/dh of the proximal map; for smooth losses this
    is 1 / (1 + gamma * hess(v)), for the hinge it is piecewise constant.
    `conjugate` returns +inf outside its effective domain.
    `kinks` maps a prox step gamma to the h-breakpoints where the prox is
    not smooth (empty for smooth losses); quadrature panels split there.
    """

    kind: LossKind
    value: Callable
    grad: Callable
    hess: Optional[Callable]
    prox: Callable
    prox_h_grad: Callable
    conjugate: Callable
    kinks: Callable


def _check_prox_args(h, gamma):
    if not np.all(np.isfinite(h)):
        raise DomainError("prox: h must be finite")
    if not np.all(np.isfinite(gamma)) or np.any(np.asarray(gamma) <= 0):
        raise DomainError("prox: gamma must be positive and finite")


# ----------------------------------------------------------------------------
# square loss  l(v) = (1 - v)^2 / 2
# ----------------------------------------------------------------------------

def _square_value(v):
    v = np.asarray(v, dtype=float)
    return 0.5 * (1.0 - v) ** 2


def _square_grad(v):
    v = np.asarray(v, dtype=float)
    return v - 1.0


def _square_hess(v):
    return np.ones_like(np.asarray(v, dtype=float))


def _square_prox(h, gamma):
    h = np.asarray(h, dtype=float)
    return (h + gamma) / (1.0 + gamma)


def _square_prox_h_grad(h, gamma):
    h = np.asarray(h, dtype=float)
    return np.full_like(h, 1.0 / (1.0 + gamma))


def _square_conjugate(u):
    # Legendre transform of (1-v)^2/2: maximizer v = 1 + u.
    u = np.asarray(u, dtype=float)
    return u + 0.5 * u ** 2


# ----------------------------------------------------------------------------
# logistic loss  l(v) = log(1 + exp(-v))
# ----------------------------------------------------------------------------

def _logistic_value(v):
    v = np.asarray(v, dtype=float)
    return np.logaddexp(0.0, -v)


def _logistic_grad(v):
    v = np.asarray(v, dtype=float)
    return -expit(-v)


def _logistic_hess(v):
    v = np.asarray(v, dtype=float)
    return expit(v) * expit(-v)


def _logistic_prox(h, gamma):
    """Solve v + gamma * l'(v) = h by safeguarded Newton.

    l' in (-1, 0), so the root lies in [h, h + gamma]; Newton steps are
    clipped to the current bracket, which shrinks monotonically.
    """
    h = np.asarray(h, dtype=float)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    lo = h.copy()
    hi = h + gamma
    # Initial guess: with expit(-v) ~ exp(-v) the equation becomes
    # v = h + W(gamma*exp(-h)), exact up to log(2); evaluated via the
    # asymptotic expansion when the argument would overflow.
    logx = math.log(gamma) + np.negative(h) if gamma > 0 else None
    if gamma > 0:
        w = np.empty_like(h)
        big = logx > 30.0
        lb = logx[big]
        l2 = np.log(lb) if lb.size else lb
        w[big] = lb - l2 + l2 / lb
        w[~big] = lambertw(np.exp(logx[~big])).real
        v = np.clip(h + w, lo, hi)
    else:
        v = h.copy()
    out = v.copy()
    # the residual carries terms of size |h| and gamma, so demand accuracy
    # relative to that scale (an absolute 1e-12 is unrepresentable for
    # gamma >> 1/eps_machine)
    tol = PROX_TOL * np.maximum(1.0, np.abs(h) + gamma)
    # iterate only the still-unconverged entries; the Lambert start puts
    # most of them within a few Newton steps of the root
    active = np.arange(h.size)
    dx_old = hi - lo
    for _ in range(PROX_MAX_ITER):
        s = expit(-v)
        r = v - h - gamma * s
        done = np.abs(r) <= tol
        if done.any():
            out[active[done]] = v[done]
            keep = ~done
            if not keep.any():
                break
            active, v, h, lo, hi = (a[keep] for a in (active, v, h, lo, hi))
            s, r, dx_old, tol = (a[keep] for a in (s, r, dx_old, tol))
        lo = np.where(r < 0, v, lo)
        hi = np.where(r > 0, v, hi)
        fp = 1.0 + gamma * s * (1.0 - s)
        # Newton only when the step stays bracketed and beats bisection,
        # otherwise bisect -- guards against the oscillating-step regime
        newt = v - r / fp
        ok = (newt > lo) & (newt < hi) & (np.abs(2.0 * r) <= np.abs(dx_old * fp))
        dx_old = np.where(ok, np.abs(r / fp), 0.5 * (hi - lo))
        v = np.where(ok, newt, 0.5 * (lo + hi))
    else:
        r = v - h - gamma * expit(-v)
        worst = float(np.max(np.abs(r) / tol))
        if worst > 1.0:
            raise NumericalError(
                f"logistic prox: scaled residual {worst:.3e} > 1 "
                f"after {PROX_MAX_ITER} iterations"
            )
        out[active] = v
    return out[0] if scalar else out


def _logistic_prox_h_grad(h, gamma):
    v = _logistic_prox(h, gamma)
    return 1.0 / (1.0 + gamma * expit(v) * expit(-v))


def _logistic_conjugate(u):
    # -H(-u) on [-1, 0] with H the binary entropy; +inf elsewhere.
    u = np.asarray(u, dtype=float)
    out = np.full_like(u, np.inf)
    inside = (u >= -1.0) & (u <= 0.0)
    p = -u[inside]
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(p > 0, p * np.log(p), 0.0) - np.where(
            p < 1, (1 - p) * np.log(1 - p), 0.0
        )
    out[inside] = -ent
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------------
# hinge loss  l(v) = max(0, 1 - v)
# ----------------------------------------------------------------------------

def _hinge_value(v):
    v = np.asarray(v, dtype=float)
    return np.maximum(0.0, 1.0 - v)


def _hinge_grad(v):
    # subgradient selection: 0 at the kink v = 1, consistent with the prox
    v = np.asarray(v, dtype=float)
    return np.where(v < 1.0, -1.0, 0.0)


def _hinge_prox(h, gamma):
    h = np.asarray(h, dtype=float)
    return np.where(h > 1.0, h, np.where(h < 1.0 - gamma, h + gamma, 1.0))


def _hinge_prox_h_grad(h, gamma):
    # flat on the middle branch; ties at h = 1 and h = 1 - gamma give 0
    h = np.asarray(h, dtype=float)
    return np.where((h > 1.0) | (h < 1.0 - gamma), 1.0, 0.0)


def _hinge_conjugate(u):
    u = np.asarray(u, dtype=float)
    out = np.where((u >= -1.0) & (u <= 0.0), u, np.inf)
    return out if out.ndim else float(out)


def _hinge_kinks(gamma):
    return (1.0 - gamma, 1.0)


def _no_kinks(gamma):
    return ()


SQUARE = LossSpec(
    kind=LossKind.SQUARE,
    value=_square_value,
    grad=_square_grad,
    hess=_square_hess,
    prox=_square_prox,
    prox_h_grad=_square_prox_h_grad,
    conjugate=_square_conjugate,
    kinks=_no_kinks,
)

LOGISTIC = LossSpec(
    kind=LossKind.LOGISTIC,
    value=_logistic_value,
    grad=_logistic_grad,
    hess=_logistic_hess,
    prox=_logistic_prox,
    prox_h_grad=_logistic_prox_h_grad,
    conjugate=_logistic_conjugate,
    kinks=_no_kinks,
)

HINGE = LossSpec(
    kind=LossKind.HINGE,
    value=_hinge_value,
    grad=_hinge_grad,
    hess=None,
    prox=_hinge_prox,
    prox_h_grad=_hinge_prox_h_grad,
    conjugate=_hinge_conjugate,
    kinks=_hinge_kinks,
)

LOSSES = {
    "square": SQUARE,
    "logistic": LOGISTIC,
    "hinge": HINGE,
}


def get_loss(name: str) -> LossSpec:
    try:
        return LOSSES[name.lower()]
    except KeyError:
        raise DomainError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}")


def prox(loss: LossSpec, h, gamma):
    """Proximal map of `loss` at point h with step gamma > 0."""
    _check_prox_args(h, gamma)
    return loss.prox(h, gamma)


def prox_h_derivative(loss: LossSpec, h, gamma):
    """Derivative dv/dh of the proximal map."""
    if not np.all(np.isfinite(gamma)) or np.any(np.asarray(gamma) <= 0):
        raise DomainError("prox_h_derivative: gamma must be positive")
    return loss.prox_h_grad(h, gamma)


def conjugate(loss: LossSpec, u):
    """Convex conjugate; +inf outside the effective domain."""
    return loss.conjugate(u)


def prox_residual(loss: LossSpec, h, gamma) -> float:
    """Stationarity residual |v - h + gamma * grad(v)| of the prox output."""
    v = loss.prox(h, gamma)
    return float(np.max(np.abs(v - h + gamma * loss.grad(v))))
