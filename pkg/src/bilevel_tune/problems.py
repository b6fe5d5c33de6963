"""Concrete lower-level problems and the pieces of the upper-level objective.

Two families of lower-level problem live here:

* elastic-net logistic regression, with penalties ``10**theta1`` (ridge) and
  ``10**theta2`` (l1), i.e. the hyperparameters are log10-weights;
* the LASSO-type linear inverse problem, whose weights ``theta1`` (ridge) and
  ``theta2`` (l1) are used directly, *not* as exponents.

The upper-level objective is always handed to the trust-region solver as a
residual vector whose squared norm is F(theta).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .composite_core import CompositeProblem, prox_l1, prox_zero
from .errors import NotStronglyConvexError, ZeroMatrixError

# default weights of the conditioning regularizer
ALPHA1 = 1e-8
ALPHA2 = 1.0
SPECTRAL_INFLATION = 1.0 + 1e-8


@dataclass
class HyperPoint:
    theta: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        m = self.theta.shape[0]
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (m,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (m,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.theta < self.lower) or np.any(self.theta > self.upper):
            raise ValueError(f"theta {self.theta} outside bounds [{self.lower}, {self.upper}]")

    @classmethod
    def unbounded(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(theta, np.full_like(theta, -np.inf), np.full_like(theta, np.inf))

    def moved_to(self, theta):
        return HyperPoint(theta, self.lower, self.upper)

    @property
    def m(self):
        return self.theta.shape[0]


@dataclass
class BinaryTask:
    """One-vs-rest classification data; labels are +1/-1, features row-wise."""

    features: np.ndarray
    labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    digit: int = -1

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.test_features = np.asarray(self.test_features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.test_labels = np.asarray(self.test_labels, dtype=np.int64)
        for name, X, y in (("train", self.features, self.labels),
                           ("test", self.test_features, self.test_labels)):
            if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
                raise ValueError(f"{name} features/labels have inconsistent shapes")
            if not np.all(np.isin(y, (-1, 1))):
                raise ValueError(f"{name} labels must be -1 or +1")
            if not np.all(np.isfinite(X)):
                raise ValueError(f"{name} features must be finite")
        if self.features.shape[1] != self.test_features.shape[1]:
            raise ValueError("train and test feature dimensions differ")

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def n_train(self):
        return self.features.shape[0]


@dataclass
class UpperResiduals:
    per_task: List[np.ndarray]
    reg: np.ndarray
    objective: float = field(init=False)

    def __post_init__(self):
        self.reg = np.asarray(self.reg, dtype=float)
        # task order, then regularizer
        total = 0.0
        for r in self.per_task:
            total += float(r @ r)
        self.objective = total + float(self.reg @ self.reg)

    def vector(self):
        return np.concatenate([*self.per_task, self.reg])


def sigmoid(t):
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_smooth_part(task: BinaryTask, theta1):
    """Return ``w -> (f(w), grad f(w))`` for the ridge-penalised logistic loss."""
    X = task.features
    y = task.labels.astype(float)
    n = X.shape[0]
    lam = 10.0**theta1

    def smooth_eval(w):
        margins = y * (X @ w)
        value = np.mean(np.logaddexp(0.0, -margins)) + 0.5 * lam * float(w @ w)
        grad = -(X.T @ (y * sigmoid(-margins))) / n + lam * w
        return float(value), grad

    return smooth_eval


def spectral_norm_sq(features, tol=1e-10, max_iter=10_000, seed=0):
    """``||X||_2^2`` by power iteration on the Gram matrix.

    The Rayleigh quotient underestimates the top eigenvalue, so the result is
    inflated by ``1 + 1e-8`` to keep ``1/L`` a safe step size.
    """
    X = np.asarray(features, dtype=float)
    if not np.any(X):
        raise ZeroMatrixError("spectral norm of a zero matrix")
    gram = X.T @ X if X.shape[1] <= X.shape[0] else X @ X.T
    v = np.random.default_rng(seed).standard_normal(gram.shape[0]) + 1.0
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = gram @ v
        lam_new = float(v @ u)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            # start vector in the null space; restart along a coordinate
            v = np.zeros_like(v)
            v[np.argmax(np.abs(gram).sum(axis=0))] = 1.0
            continue
        v = u / nu
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(v @ gram @ v) * SPECTRAL_INFLATION


def elastic_net_problem(task: BinaryTask, point, spectral_sq):
    """Elastic-net logistic regression with log10 penalty weights ``theta``."""
    theta = point.theta if isinstance(point, HyperPoint) else np.asarray(point, dtype=float)
    theta1, theta2 = float(theta[0]), float(theta[1])
    lam1 = 10.0**theta2
    mu = 10.0**theta1
    lipschitz = spectral_sq / (4.0 * task.n_train) + mu
    return CompositeProblem(
        dim=task.dim,
        smooth_eval=logistic_smooth_part(task, theta1),
        prox=lambda v, step: prox_l1(v, step * lam1),
        mu=mu,
        lipschitz=lipschitz,
        nonsmooth_value=lambda w: lam1 * float(np.abs(w).sum()),
    )


def lasso_problem(A, b, point, spectral_sq=None):
    """``0.5||Aw - b||^2 + theta1/2 ||w||^2 + theta2 ||w||_1`` (linear weights)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError("A and b have inconsistent shapes")
    theta = point.theta if isinstance(point, HyperPoint) else np.asarray(point, dtype=float)
    ridge, l1 = float(theta[0]), float(theta[1])
    if ridge <= 0:
        raise NotStronglyConvexError(f"ridge weight must be positive, got {ridge}")
    if l1 < 0:
        raise ValueError("l1 weight must be nonnegative")
    if spectral_sq is None:
        spectral_sq = spectral_norm_sq(A) if np.any(A) else 0.0

    def smooth_eval(w):
        r = A @ w - b
        return 0.5 * float(r @ r) + 0.5 * ridge * float(w @ w), A.T @ r + ridge * w

    return CompositeProblem(
        dim=A.shape[1],
        smooth_eval=smooth_eval,
        prox=lambda v, step: prox_l1(v, step * l1),
        mu=ridge,
        lipschitz=spectral_sq + ridge,
        nonsmooth_value=lambda w: l1 * float(np.abs(w).sum()),
    )


def generate_lasso_instance(seed, rows, cols, a_mean=0.0):
    """Draw ``(A, w0, b)`` from numpy's PCG64 generator seeded with ``seed``.

    Entries are standard normal, drawn in the order A (row-major), w0, b.
    ``a_mean`` shifts the entries of A only; ``a_mean=1`` puts a 100x200
    instance at ``||A||^2 ~ 2e4``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, cols)) + a_mean
    w0 = rng.standard_normal(cols)
    b = rng.standard_normal(rows)
    return A, w0, b


def test_residuals(w, task: BinaryTask):
    """``sigm(w . x_i) - p_i`` over the test set; its squared norm is the loss."""
    p = sigmoid(task.test_features @ w)
    target = (task.test_labels == 1).astype(float)
    return p - target


test_residuals.__test__ = False  # not a pytest test


def regularizer_residuals(point, mu, lipschitz, alpha1=ALPHA1, alpha2=ALPHA2):
    theta = point.theta if isinstance(point, HyperPoint) else np.asarray(point, dtype=float)
    if mu <= 0 or lipschitz <= 0:
        raise ValueError("mu and lipschitz must be positive")
    return np.array([np.sqrt(alpha1) * (lipschitz / mu),
                     np.sqrt(alpha2) * 10.0 ** (-float(theta[1]) / 2.0)])


def predict(w, x):
    """Class 1 iff ``sigm(w . x) >= 0.5``; ties go to class 1."""
    return (np.asarray(x) @ np.asarray(w) >= 0.0).astype(int)


class ElasticNetBilevel:
    """Upper-level problem over several elastic-net logistic tasks."""

    def __init__(self, tasks: Sequence[BinaryTask], alpha1=ALPHA1, alpha2=ALPHA2):
        self.tasks = list(tasks)
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.spectral_sq = []
        for j, task in enumerate(self.tasks):
            shared = next((self.spectral_sq[i] for i in range(j)
                           if self.tasks[i].features is task.features), None)
            self.spectral_sq.append(shared if shared is not None
                                    else spectral_norm_sq(task.features))

    @property
    def n_tasks(self):
        return len(self.tasks)

    def initial_w(self, j):
        return np.zeros(self.tasks[j].dim)

    def lower_problem(self, j, theta):
        return elastic_net_problem(self.tasks[j], theta, self.spectral_sq[j])

    def conditioning(self, theta):
        """``(mu, L)`` used by the regularizer; L is the largest over tasks."""
        mu = 10.0 ** float(theta[0])
        lip = max(s / (4.0 * t.n_train) for s, t in zip(self.spectral_sq, self.tasks)) + mu
        return mu, lip

    def residuals(self, theta, ws):
        per_task = [test_residuals(w, task) for w, task in zip(ws, self.tasks)]
        mu, lip = self.conditioning(theta)
        reg = regularizer_residuals(theta, mu, lip, self.alpha1, self.alpha2)
        return UpperResiduals(per_task, reg)


class QuadraticBilevel:
    """Synthetic bilevel problem with a closed-form lower level.

    Lower level: ``0.5 (w - E theta)^T H (w - E theta)`` whose minimizer is
    ``E theta`` (E embeds theta in the first coordinates of R^dim, H is
    diagonal with condition number ``kappa``). Upper residuals are
    ``w[:m] - theta_star`` so that exact solves give ``F = ||theta - theta*||^2``.
    """

    def __init__(self, theta_star, dim=None, kappa=1.0, n_tasks=1, start=None):
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.m = self.theta_star.shape[0]
        self.dim = dim or self.m
        if self.dim < self.m:
            raise ValueError("dim must be at least len(theta_star)")
        self.hdiag = np.geomspace(1.0, kappa, self.dim) if kappa != 1 else np.ones(self.dim)
        self._n_tasks = n_tasks
        self.start = None if start is None else np.asarray(start, dtype=float)

    @property
    def n_tasks(self):
        return self._n_tasks

    def initial_w(self, j):
        return np.zeros(self.dim) if self.start is None else self.start.copy()

    def exact_solution(self, j, theta):
        w = np.zeros(self.dim)
        w[: self.m] = theta
        return w

    def lower_problem(self, j, theta):
        center = self.exact_solution(j, theta)
        h = self.hdiag

        def smooth_eval(w):
            r = w - center
            return 0.5 * float(r @ (h * r)), h * r

        return CompositeProblem(dim=self.dim, smooth_eval=smooth_eval, prox=prox_zero,
                                mu=float(h.min()), lipschitz=float(h.max()))

    def residuals(self, theta, ws):
        return UpperResiduals([w[: self.m] - self.theta_star for w in ws], np.zeros(0))
