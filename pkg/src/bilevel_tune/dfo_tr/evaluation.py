"""Accuracy-aware evaluation of the upper-level residuals with a solve cache."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..composite_core import (
    DEFAULT_MAX_ITERATIONS,
    FixedIterations,
    TargetAccuracy,
    Termination,
    fista_solve,
)
from ..errors import AccuracyUnreachableError
from ..problems import HyperPoint, UpperResiduals


def required_accuracy(radius, c, eps_max=None):
    """Squared-distance target ``(c * radius**2)**2``, optionally capped."""
    if radius <= 0 or c <= 0:
        raise ValueError("radius and c must be positive")
    eps = (c * radius * radius) ** 2
    if eps_max is not None:
        eps = min(eps, eps_max)
    return eps


@dataclass(frozen=True)
class Certified:
    epsilon: float


@dataclass(frozen=True)
class Fixed:
    K: int


@dataclass
class CacheEntry:
    w: np.ndarray
    certificate: Optional[float]
    fista_iterations: int
    fixed_K: Optional[int] = None


@dataclass
class SolveRecord:
    task: int
    key: bytes
    iterations: int
    warm: bool


class EvalCache:
    """Lower-level solutions keyed by task index and the exact bytes of theta."""

    def __init__(self):
        self.entries: Dict[Tuple[int, bytes], CacheEntry] = {}
        self.solves: List[SolveRecord] = []

    @staticmethod
    def key(theta):
        return np.ascontiguousarray(theta, dtype=float).tobytes()

    def get(self, j, theta):
        return self.entries.get((j, self.key(theta)))

    def put(self, j, theta, entry, iterations, warm):
        k = self.key(theta)
        self.entries[(j, k)] = entry
        self.solves.append(SolveRecord(j, k, iterations, warm))

    @property
    def total_iterations(self):
        return sum(r.iterations for r in self.solves)

    def __len__(self):
        return len(self.entries)


@dataclass
class EvalResult:
    theta: np.ndarray
    residuals: UpperResiduals
    certificates: np.ndarray  # nan where no certificate was computed
    fista_iterations: int
    ws: List[np.ndarray]

    @property
    def objective(self):
        return self.residuals.objective

    def max_certificate(self):
        if np.any(np.isnan(self.certificates)):
            return np.inf
        return float(self.certificates.max(initial=0.0))


def evaluate_point(point, accuracy, problem, cache: EvalCache,
                   max_iterations=DEFAULT_MAX_ITERATIONS, certify_fixed=False,
                   warm_start=None):
    """Solve every lower-level task at ``point`` and assemble the residuals.

    Certified mode reuses a cached solution outright when its certificate
    already meets the demand, otherwise warm starts from it; with no cache
    entry it starts from ``warm_start[j]`` if given, else the cold start.
    Fixed mode runs exactly ``K`` iterations from the cold start, once per
    (task, theta, K).
    """
    theta = point.theta if isinstance(point, HyperPoint) else np.asarray(point, dtype=float)
    ws, certs = [], []
    used = 0
    for j in range(problem.n_tasks):
        entry = cache.get(j, theta)
        if isinstance(accuracy, Certified):
            if entry is not None and entry.certificate is not None \
                    and entry.certificate <= accuracy.epsilon:
                ws.append(entry.w)
                certs.append(entry.certificate)
                continue
            warm = entry is not None
            if warm:
                w0 = entry.w
            elif warm_start is not None:
                w0 = warm_start[j]
            else:
                w0 = problem.initial_w(j)
            term = Termination(TargetAccuracy(accuracy.epsilon), max_iterations=max_iterations)
            try:
                sol = fista_solve(problem.lower_problem(j, theta), w0, term)
            except AccuracyUnreachableError as exc:
                raise AccuracyUnreachableError(
                    f"theta={theta.tolist()}: {exc.args[0]}", exc.best_certificate,
                    task_index=j) from exc
            prior = entry.fista_iterations if warm else 0
            cache.put(j, theta, CacheEntry(sol.w, sol.certificate, prior + sol.iterations),
                      sol.iterations, warm)
        else:
            if entry is not None and entry.fixed_K == accuracy.K:
                ws.append(entry.w)
                certs.append(np.nan if entry.certificate is None else entry.certificate)
                continue
            term = Termination(FixedIterations(accuracy.K),
                               certificate_interval=accuracy.K if certify_fixed else None)
            sol = fista_solve(problem.lower_problem(j, theta), problem.initial_w(j), term)
            cache.put(j, theta, CacheEntry(sol.w, sol.certificate, sol.iterations, accuracy.K),
                      sol.iterations, False)
        used += sol.iterations
        ws.append(sol.w)
        certs.append(np.nan if sol.certificate is None else sol.certificate)
    residuals = problem.residuals(theta, ws)
    return EvalResult(theta.copy(), residuals, np.array(certs, dtype=float), used, ws)
