"""Strongly convex FISTA for composite problems ``min_w f(w) + g(w)``.

The solver stops either after a fixed number of iterations or once the
subgradient certificate ``||d||^2 / mu^2`` (an upper bound on the squared
distance to the minimizer) falls below a target.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    AccuracyUnreachableError,
    DegenerateRateError,
    DivergenceError,
    InvalidConditioningError,
)

__all__ = [
    "CompositeProblem",
    "MomentumState",
    "TargetAccuracy",
    "FixedIterations",
    "Termination",
    "LowerSolution",
    "momentum_step",
    "fista_solve",
    "subgradient_certificate",
    "apriori_bound",
    "apriori_iterations",
    "prox_l1",
    "prox_zero",
    "proximal_gradient_reference",
    "CsvTrace",
]

# keeps the momentum formula finite when mu == L
Q_MAX = 1.0 - 1e-12
DEFAULT_MAX_ITERATIONS = 10**6


def prox_l1(v, threshold):
    """Soft thresholding: ``sign(v) * max(|v| - threshold, 0)``."""
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def prox_zero(v, step):
    return np.array(v, dtype=float, copy=True)


def _zero(w):
    return 0.0


@dataclass(frozen=True)
class CompositeProblem:
    """Lower-level problem ``f(w) + g(w)`` with f mu-strongly convex, L-smooth.

    ``smooth_eval(w)`` returns ``(f(w), grad f(w))``; ``prox(v, s)`` is the
    proximal map of ``s * g``; ``nonsmooth_value(w)`` returns ``g(w)`` and is
    only used for reporting objective values.
    """

    dim: int
    smooth_eval: Callable[[np.ndarray], tuple]
    prox: Callable[[np.ndarray, float], np.ndarray]
    mu: float
    lipschitz: float
    nonsmooth_value: Callable[[np.ndarray], float] = _zero

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not (self.mu > 0):
            raise InvalidConditioningError(f"mu must be positive, got {self.mu}")
        if self.lipschitz < self.mu:
            raise InvalidConditioningError(
                f"lipschitz ({self.lipschitz}) must be >= mu ({self.mu})")

    @property
    def tau(self):
        return 1.0 / self.lipschitz

    @property
    def kappa(self):
        return self.lipschitz / self.mu

    def objective(self, w):
        return float(self.smooth_eval(w)[0]) + float(self.nonsmooth_value(w))


@dataclass
class MomentumState:
    t: float
    q: float
    tau: float
    w_prev: np.ndarray
    w_curr: np.ndarray

    @classmethod
    def initial(cls, problem: CompositeProblem, w0):
        tau = problem.tau
        q = min(tau * problem.mu, Q_MAX)
        w0 = np.array(w0, dtype=float, copy=True)
        return cls(t=0.0, q=q, tau=tau, w_prev=w0.copy(), w_curr=w0)


def momentum_step(state: MomentumState):
    """Return ``(t_next, beta_next)`` for the strongly convex momentum rule."""
    t, q = state.t, state.q
    if not (0.0 <= q < 1.0):
        raise InvalidConditioningError(f"q = tau*mu must lie in [0, 1), got {q}")
    a = 1.0 - q * t * t
    t_next = 0.5 * (a + math.sqrt(a * a + 4.0 * t * t))
    beta_next = (t - 1.0) * (1.0 - t_next * q) / (t_next * (1.0 - q))
    return t_next, beta_next


@dataclass(frozen=True)
class TargetAccuracy:
    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class FixedIterations:
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"iteration count must be positive, got {self.count}")


@dataclass(frozen=True)
class Termination:
    """Stopping rule.

    ``certificate_interval=None`` disables certificates entirely, which is
    only allowed with :class:`FixedIterations`.
    """

    mode: Union[TargetAccuracy, FixedIterations]
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    certificate_interval: Optional[int] = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.certificate_interval is None:
            if isinstance(self.mode, TargetAccuracy):
                raise ValueError("TargetAccuracy needs certificates")
        elif self.certificate_interval < 1:
            raise ValueError("certificate_interval must be positive")


@dataclass(frozen=True)
class LowerSolution:
    w: np.ndarray
    certificate: Optional[float]
    iterations: int
    subgradient_norm: Optional[float]
    objective: float


def subgradient_certificate(problem: CompositeProblem, w_next, z_next, grad_at_z):
    """Subgradient of the full objective at ``w_next`` and the error bound.

    ``w_next`` must be the prox-gradient step taken from ``z_next``. The
    returned ``d`` lies in the subdifferential at ``w_next`` so that
    ``||w_next - w*||^2 <= ||d||^2 / mu^2``.
    """
    _, grad_next = problem.smooth_eval(w_next)
    d = grad_next - grad_at_z + (z_next - w_next) / problem.tau
    if not np.all(np.isfinite(d)):
        raise DivergenceError("non-finite subgradient")
    bound = float(d @ d) / problem.mu**2
    return d, bound


def apriori_bound(kappa, init_dist_sq, k):
    """Right-hand side of the linear-rate estimate after ``k`` iterations."""
    r = 1.0 / math.sqrt(kappa)
    return (1.0 - r) ** k * kappa * (1.0 + r) * init_dist_sq


def apriori_iterations(kappa, init_dist_sq, epsilon):
    """Smallest ``k`` for which the a priori bound drops to ``epsilon``."""
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if kappa == 1:
        raise DegenerateRateError("kappa = 1 gives a degenerate rate factor")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if init_dist_sq < 0:
        raise ValueError("init_dist_sq must be nonnegative")
    c0 = apriori_bound(kappa, init_dist_sq, 0)
    if c0 <= epsilon:
        return 0
    rate = 1.0 - 1.0 / math.sqrt(kappa)
    k = max(0, math.ceil(math.log(epsilon / c0) / math.log(rate)))
    # the log estimate can be off by one either way in floating point
    while k > 0 and apriori_bound(kappa, init_dist_sq, k - 1) <= epsilon:
        k -= 1
    while apriori_bound(kappa, init_dist_sq, k) > epsilon:
        k += 1
    return k


class CsvTrace:
    """Per-iteration trace writer with header ``iter,objective,certificate``.

    Pass an instance as the ``callback`` of :func:`fista_solve`.
    """

    def __init__(self, fh, problem: CompositeProblem):
        self.problem = problem
        self.writer = csv.writer(fh)
        self.writer.writerow(["iter", "objective", "certificate"])

    def __call__(self, k, w, certificate):
        cert = "" if certificate is None else repr(float(certificate))
        self.writer.writerow([k, repr(self.problem.objective(w)), cert])


def fista_solve(problem: CompositeProblem, w0=None, termination: Termination = None,
                callback=None):
    """Run strongly convex FISTA from ``w0`` (zeros if omitted).

    ``callback(k, w_k, certificate_or_None)`` is invoked after every
    iteration ``k >= 1``; the certificate belongs to ``w_k``.
    """
    if termination is None:
        raise ValueError("termination rule required")
    if w0 is None:
        w0 = np.zeros(problem.dim)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (problem.dim,) or not np.all(np.isfinite(w0)):
        raise ValueError("w0 must be a finite vector of length dim")

    mode = termination.mode
    target = isinstance(mode, TargetAccuracy)
    n_iter = termination.max_iterations if target else mode.count
    interval = termination.certificate_interval

    state = MomentumState.initial(problem, w0)
    tau = state.tau
    cert = None
    d_norm = None
    best = math.inf
    k = 0
    while k < n_iter:
        t_next, beta = momentum_step(state)
        z = state.w_curr + beta * (state.w_curr - state.w_prev)
        _, grad_z = problem.smooth_eval(z)
        w_next = problem.prox(z - tau * grad_z, tau)
        if not np.all(np.isfinite(w_next)):
            raise DivergenceError(f"non-finite iterate at iteration {k + 1}")
        state.w_prev, state.w_curr, state.t = state.w_curr, w_next, t_next
        k += 1

        cert = None
        if interval is not None and (k % interval == 0 or (not target and k == n_iter)):
            d, cert = subgradient_certificate(problem, w_next, z, grad_z)
            d_norm = math.sqrt(float(d @ d))
            best = min(best, cert)
        if callback is not None:
            callback(k, w_next, cert)
        if target and cert is not None and cert <= mode.epsilon:
            break
    else:
        if target:
            raise AccuracyUnreachableError(
                f"certificate did not reach {mode.epsilon:.3e} in {n_iter} iterations",
                best_certificate=best)

    w = state.w_curr
    return LowerSolution(
        w=w,
        certificate=cert,
        iterations=k,
        subgradient_norm=d_norm if cert is not None else None,
        objective=problem.objective(w),
    )


def proximal_gradient_reference(problem: CompositeProblem, w0=None, iterations=100_000):
    """Plain (unaccelerated) proximal gradient with step ``1/L``.

    Converges at rate ``1 - 1/kappa`` with no momentum; used as an
    independent high-accuracy reference for the accelerated solver.
    """
    w = np.zeros(problem.dim) if w0 is None else np.array(w0, dtype=float, copy=True)
    tau = problem.tau
    for _ in range(iterations):
        _, grad = problem.smooth_eval(w)
        w = problem.prox(w - tau * grad, tau)
    if not np.all(np.isfinite(w)):
        raise DivergenceError("reference solve diverged")
    return w
