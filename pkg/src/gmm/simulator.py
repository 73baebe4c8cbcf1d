"""Finite-dimensional Monte Carlo for the Gaussian-mixture ERM.

Generates datasets x_i = y_i * v / sqrt(d) + sqrt(delta) * z_i, solves the
ridge-regularized ERM (exactly for the square loss, by damped Newton for
logistic and hinge), builds the Hebb plug-in estimator, and measures
empirical overlaps, train loss, and test error.

RNG is counter-based (Philox) keyed by (seed, replicate, stream tag), so
replicates are independent and order-insensitive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import brentq
from scipy.special import expit

from .losses import DomainError, LossKind, LossSpec
from .state_evolution import ModelParams, qfunc

# stream tags for the counter-based RNG
_STREAM_TEACHER = 1
_STREAM_LABELS = 2
_STREAM_NOISE = 3
_STREAM_TEST = 4


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        key=np.random.SeedSequence((seed,) + tags).generate_state(2, np.uint64)))


@dataclass
class Dataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray    # (n,) in {+1, -1}
    teacher: np.ndarray   # (d,)
    delta: float
    rho: float
    seed: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass
class ErmResult:
    weights: np.ndarray
    bias: float
    m_emp: float
    q_emp: float
    train_loss_emp: float
    test_error_emp: float = math.nan   # Monte Carlo on a fresh test set
    test_error_closed: float = math.nan  # tail formula at empirical overlaps
    iterations: int = 0
    final_decrement: float = 0.0
    converged: bool = True
    seed: int = 0
    bias_warning: bool = False


@dataclass
class SolverConfig:
    tol: float = 1e-9       # sup-norm gradient tolerance, relative to |f|
    max_iter: int = 200     # Newton steps (per smoothing stage for hinge)


def generate(params: ModelParams, d: int, seed: int,
             delta: Optional[float] = None) -> Dataset:
    """Seeded mixture dataset with n = round(alpha * d) samples.

    `delta` overrides params.delta; delta = 0 (noiseless clusters) is
    allowed here even though the theory requires delta > 0.
    """
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    n = int(round(params.alpha * d))
    if n < 1:
        raise DomainError(f"alpha*d rounds to {n}; need at least one sample")
    dl = params.delta if delta is None else delta
    if dl < 0:
        raise DomainError("delta must be >= 0")
    teacher = _rng(seed, _STREAM_TEACHER).standard_normal(d)
    labels = np.where(_rng(seed, _STREAM_LABELS).random(n) < params.rho, 1.0, -1.0)
    noise = _rng(seed, _STREAM_NOISE).standard_normal((n, d))
    features = labels[:, None] * teacher[None, :] / math.sqrt(d) \
        + math.sqrt(dl) * noise
    return Dataset(features=features, labels=labels, teacher=teacher,
                   delta=dl, rho=params.rho, seed=seed)


def _overlaps(w: np.ndarray, data: Dataset):
    d = data.d
    return float(w @ data.teacher / d), float(w @ w / d)


def _objective(loss: LossSpec, a: np.ndarray, y: np.ndarray,
               w: np.ndarray, b: float, lam: float) -> float:
    u = y * (a @ w + b)
    return float(np.sum(loss.value(u)) + 0.5 * lam * w @ w)


def fit_ridge(data: Dataset, lam: float, with_bias: bool = True) -> ErmResult:
    """Exact square-loss ERM via the regularized normal equations.

    The bias is unregularized; with_bias=False pins b = 0. lam = 0 needs
    n >= d for the system to be determined.
    """
    if lam < 0:
        raise DomainError("lam must be >= 0")
    n, d = data.features.shape
    if lam == 0 and n < d:
        raise DomainError(
            "lam = 0 with n < d is singular; use lam > 0 instead")
    a = data.features / math.sqrt(d)
    y = data.labels
    gram = a.T @ a + lam * np.eye(d)
    if with_bias:
        col = a.T @ np.ones(n)
        k = np.block([[gram, col[:, None]],
                      [col[None, :], np.array([[float(n)]])]])
        rhs = np.concatenate([a.T @ y, [y.sum()]])
        sol = np.linalg.solve(k, rhs)
        w, b = sol[:-1], float(sol[-1])
    else:
        w = np.linalg.solve(gram, a.T @ y)
        b = 0.0
    m_emp, q_emp = _overlaps(w, data)
    from .losses import SQUARE
    train = _objective(SQUARE, a, y, w, b, lam) / d
    return ErmResult(weights=w, bias=b, m_emp=m_emp, q_emp=q_emp,
                     train_loss_emp=train, seed=data.seed)


def _margins(data: Dataset) -> np.ndarray:
    """Rows (y_i a_i, y_i), so u = by @ (w, b) are the signed margins."""
    n, d = data.features.shape
    by = np.empty((n, d + 1))
    by[:, :d] = data.features * (data.labels[:, None] / math.sqrt(d))
    by[:, d] = data.labels
    return by


def _newton_minimize(by, lam, x, value_grad, curvature, tol, max_iter,
                     exact_ls=False):
    """Damped Newton for f(x) = sum_i loss(u_i) + lam/2 |x[:-1]|^2, u = by@x.

    The last coordinate of x is the unregularized bias. value_grad(u) gives
    per-sample (loss, dloss/du); curvature(u) gives d2loss/du2, and samples
    with zero curvature are dropped from the Hessian. The step length comes
    from Armijo backtracking, or with exact_ls from a root find on the
    directional derivative (the better choice for piecewise-quadratic
    objectives, where backtracking crawls across the kinks). Either way the
    objective sequence is non-increasing; converged means the sup-norm
    gradient fell below tol * max(1, |f|). Returns (x, f, iterations,
    converged).
    """
    n, dim = by.shape
    d = dim - 1
    reg = np.full(dim, lam)
    reg[d] = 0.0
    u = by @ x
    val, du = value_grad(u)
    f = float(val.sum() + 0.5 * lam * x[:d] @ x[:d])
    for it in range(max_iter):
        g = by.T @ du + reg * x
        if float(np.max(np.abs(g))) <= tol * max(1.0, abs(f)):
            return x, f, it, True
        h = curvature(u)
        rows = np.flatnonzero(h > 0)
        bh = by[rows] * np.sqrt(h[rows])[:, None]
        hess = bh.T @ bh
        hess[np.arange(dim), np.arange(dim)] += reg
        # keep the bias block nonsingular when no sample has curvature
        hess[d, d] += 1e-12 * max(1.0, float(np.trace(hess)) / dim)
        try:
            step = cho_solve(cho_factor(hess, lower=True), g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, g, rcond=None)[0]
        gd = float(g @ step)
        if gd <= 0:
            step, gd = g, float(g @ g)
        if exact_ls:
            t = _exact_step(by, lam, x, u, step, value_grad, gd)
        else:
            t = 1.0
        while True:
            x_new = x - t * step
            u_new = u - t * (by @ step) if exact_ls else by @ x_new
            v_new, du_new = value_grad(u_new)
            f_new = float(v_new.sum() + 0.5 * lam * x_new[:d] @ x_new[:d])
            if f_new <= f - (0.0 if exact_ls else 1e-4 * t * gd) \
                    or t < 1e-16:
                break
            t *= 0.5
        x, u, du, f = x_new, u_new, du_new, f_new
    return x, f, max_iter, False


def _exact_step(by, lam, x, u, step, value_grad, gd):
    """Step length minimizing f(x - t step): root of the (monotone)
    directional derivative, found by bracketing + brentq."""
    d = by.shape[1] - 1
    e = by @ step
    a_quad = float(lam * step[:d] @ step[:d])
    b0 = float(lam * x[:d] @ step[:d])

    def dphi(t):
        _, du_t = value_grad(u - t * e)
        return float(-(du_t @ e) - b0 + t * a_quad)

    t_hi = 1.0
    while dphi(t_hi) < 0.0 and t_hi < 2.0 ** 20:
        t_hi *= 2.0
    if dphi(t_hi) < 0.0:  # descent never flattens within the cap
        return t_hi
    # dphi(0) = -gd < 0, so the root is bracketed
    return brentq(dphi, 0.0, t_hi, xtol=1e-13)


def _fit_logistic(data: Dataset, lam: float, cfg: SolverConfig) -> ErmResult:
    """Logistic ERM by damped Newton (exact Hessian, Cholesky solve)."""
    n, d = data.features.shape
    by = _margins(data)

    def value_grad(u):
        return np.logaddexp(0.0, -u), -expit(-u)

    def curvature(u):
        s = expit(-u)
        return s * (1.0 - s)

    x0 = np.zeros(d + 1)
    x, f, it, ok = _newton_minimize(by, lam, x0, value_grad, curvature,
                                    cfg.tol, cfg.max_iter)
    w, b = x[:d], float(x[d])
    m_emp, q_emp = _overlaps(w, data)
    return ErmResult(weights=w, bias=b, m_emp=m_emp, q_emp=q_emp,
                     train_loss_emp=f / d, iterations=it,
                     final_decrement=f / d, converged=ok, seed=data.seed)


#: smoothing ladder for the hinge: each stage is minimized to high accuracy
#: and warm-starts the next; the final solution is O(mu_final) from the
#: exact nonsmooth optimum
_HINGE_SMOOTHING = (0.5, 0.1, 0.02, 4e-3, 1.2e-3, 5e-4)


def _smoothed_hinge_value_grad(u: np.ndarray, mu: float):
    """Huberized max(0, 1-u): quadratic on 1-mu < u < 1, linear below."""
    gap = 1.0 - u
    quad = (gap > 0.0) & (gap < mu)
    lin = gap >= mu
    val = np.where(lin, gap - 0.5 * mu, 0.0)
    val = np.where(quad, 0.5 * gap * gap / mu, val)
    grad = np.where(lin, -1.0, 0.0)
    grad = np.where(quad, -gap / mu, grad)
    return val, grad


def _fit_hinge(data: Dataset, lam: float, cfg: SolverConfig) -> ErmResult:
    """Hinge ERM by smoothing continuation with damped Newton stages.

    Each stage minimizes the Huber-smoothed objective (semismooth Newton on
    the quadratic zone, exact line search across the kinks); the smoothing
    width shrinks to 5e-4, leaving the iterate within O(mu) of the
    nonsmooth optimum. The first stage starts from the exact ridge
    solution; later stages extrapolate the previous two stage solutions
    linearly in mu (the solution path is smooth in the smoothing width, so
    this lands with the on-margin set almost identified). lam > 0 is
    required for strong convexity.
    """
    from .losses import HINGE

    if lam <= 0:
        raise DomainError("hinge solver requires lam > 0")
    n, d = data.features.shape
    by = _margins(data)
    ridge = fit_ridge(data, lam)
    x = np.concatenate([ridge.weights, [ridge.bias]])
    total_iters = 0
    ok = True
    history: list = []  # (mu, stage solution)
    for mu in _HINGE_SMOOTHING:
        def curvature(u, mu=mu):
            gap = 1.0 - u
            return np.where((gap > 0.0) & (gap < mu), 1.0 / mu, 0.0)

        if len(history) >= 2:
            (mu1, x1), (mu0, x0) = history[-1], history[-2]
            x = x1 + (x1 - x0) * ((mu - mu1) / (mu1 - mu0))
        x, f_mu, it, stage_ok = _newton_minimize(
            by, lam, x,
            lambda u, mu=mu: _smoothed_hinge_value_grad(u, mu),
            curvature, cfg.tol, cfg.max_iter, exact_ls=True)
        total_iters += it
        ok = ok and stage_ok
        history.append((mu, x))
    w, b = x[:d], float(x[d])
    m_emp, q_emp = _overlaps(w, data)
    a = data.features / math.sqrt(d)
    f = _objective(HINGE, a, data.labels, w, b, lam) / d
    return ErmResult(weights=w, bias=b, m_emp=m_emp, q_emp=q_emp,
                     train_loss_emp=f, iterations=total_iters,
                     final_decrement=abs(f - f_mu / d),
                     converged=ok, seed=data.seed)


def fit_iterative(data: Dataset, loss: LossSpec, lam: float,
                  cfg: Optional[SolverConfig] = None) -> ErmResult:
    """First-order ERM for the non-quadratic losses (bias unregularized)."""
    if lam < 0:
        raise DomainError("lam must be >= 0")
    cfg = cfg or SolverConfig()
    if loss.kind is LossKind.SQUARE:
        return fit_ridge(data, lam)
    if loss.kind is LossKind.LOGISTIC:
        return _fit_logistic(data, lam, cfg)
    if loss.kind is LossKind.HINGE:
        return _fit_hinge(data, lam, cfg)
    raise DomainError(f"no iterative solver for {loss.kind}")


def hebb_fit(data: Dataset) -> ErmResult:
    """Label-weighted mean weights with the plug-in optimal bias."""
    n, d = data.features.shape
    w = math.sqrt(d) / n * (data.labels @ data.features)
    m_emp, q_emp = _overlaps(w, data)
    warning = False
    if m_emp <= 0:
        b = 0.0
        warning = True
    else:
        b = data.delta * q_emp / (2.0 * m_emp) \
            * math.log(data.rho / (1.0 - data.rho))
    return ErmResult(weights=w, bias=b, m_emp=m_emp, q_emp=q_emp,
                     train_loss_emp=math.nan, seed=data.seed,
                     bias_warning=warning)


def measure(result: ErmResult, data: Dataset, test_size: int,
            seed: int) -> ErmResult:
    """Test error two ways: fresh Monte Carlo test set, and the closed-form
    Gaussian tail at the empirical overlaps. Both are stored.

    ``test_size=0`` skips the Monte Carlo set and reports the closed-form
    population error (exact for the fitted classifier, conditional on the
    training draw) in both fields.
    """
    if test_size < 0:
        raise DomainError("test_size must be >= 0")
    mc = None
    if test_size > 0:
        d = data.d
        rng = _rng(seed, _STREAM_TEST)
        y = np.where(rng.random(test_size) < data.rho, 1.0, -1.0)
        z = rng.standard_normal((test_size, d))
        x = y[:, None] * data.teacher[None, :] / math.sqrt(d) \
            + math.sqrt(data.delta) * z
        scores = x @ result.weights / math.sqrt(d) + result.bias
        mc = float(np.mean(np.sign(scores) != y))

    m, q, b = result.m_emp, result.q_emp, result.bias
    rho = data.rho
    if q > 0 and data.delta > 0:
        sd = math.sqrt(data.delta * q)
        closed = float(rho * qfunc((m + b) / sd)
                       + (1.0 - rho) * qfunc((m - b) / sd))
    else:
        # degenerate classifier: deterministic scores
        closed = rho if b < 0 or (b == 0 and m <= 0) else 1.0 - rho
        if q > 0 and data.delta == 0:
            closed = rho * (1.0 if m + b <= 0 else 0.0) \
                + (1.0 - rho) * (1.0 if m - b <= 0 else 0.0)
    if mc is None:
        mc = closed
    return replace(result, test_error_emp=mc, test_error_closed=closed)
