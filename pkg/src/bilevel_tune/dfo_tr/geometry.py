"""Interpolation set management: construction, replacement and repair."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, List

import numpy as np

from ..errors import InfeasibleGeometryError
from ..problems import HyperPoint
from .evaluation import EvalResult

DEFAULT_COND_MAX = 1e8


@dataclass
class InterpolationSet:
    """``m + 1`` evaluated points; ``results[i]`` belongs to ``points[i]``."""

    points: np.ndarray  # (m + 1, m)
    results: List[EvalResult]
    base_index: int
    lower: np.ndarray
    upper: np.ndarray

    @property
    def m(self):
        return self.points.shape[1]

    @property
    def base(self):
        return self.points[self.base_index]

    @property
    def base_result(self):
        return self.results[self.base_index]

    @property
    def residuals(self):
        return [r.residuals for r in self.results]

    @property
    def certificates(self):
        return [r.certificates for r in self.results]

    def point(self, i):
        return HyperPoint(self.points[i], self.lower, self.upper)

    def others(self):
        return [i for i in range(len(self.points)) if i != self.base_index]

    def directions(self):
        return self.points[self.others()] - self.base

    def condition_number(self):
        D = self.directions()
        if not np.all(np.isfinite(D)):
            return np.inf
        return float(np.linalg.cond(D))

    def is_degenerate(self, cond_max=DEFAULT_COND_MAX):
        c = self.condition_number()
        return not np.isfinite(c) or c > cond_max


def initial_points(start: HyperPoint, radius):
    """``start`` plus ``start + radius * e_i``, flipping offsets that leave the box."""
    m = start.m
    pts = [start.theta.copy()]
    for i in range(m):
        p = start.theta.copy()
        if p[i] + radius <= start.upper[i]:
            p[i] += radius
        elif p[i] - radius >= start.lower[i]:
            p[i] -= radius
        else:
            raise InfeasibleGeometryError(
                f"box width {start.upper[i] - start.lower[i]} in coordinate {i} "
                f"cannot host an offset of {radius}")
        pts.append(p)
    return np.array(pts)


def init_interpolation_set(start: HyperPoint, radius, evaluate: Callable[[np.ndarray], EvalResult]):
    pts = initial_points(start, radius)
    results = [evaluate(p) for p in pts]
    return InterpolationSet(pts, results, 0, start.lower.copy(), start.upper.copy())


def update_interpolation_set(iset: InterpolationSet, new_point, result: EvalResult,
                             accepted, cond_max=DEFAULT_COND_MAX):
    """Swap ``new_point`` in for the point farthest from the new iterate.

    Returns ``(new_set, degenerate)``. Ties go to the lowest index; on
    rejection the base point is never the one removed.
    """
    new_point = np.asarray(new_point, dtype=float)
    centre = new_point if accepted else iset.base
    dist = np.linalg.norm(iset.points - centre, axis=1)
    if not accepted:
        dist[iset.base_index] = -np.inf
    k = int(np.argmax(dist))
    points = iset.points.copy()
    points[k] = new_point
    results = list(iset.results)
    results[k] = result
    base_index = k if accepted else iset.base_index
    new_set = replace(iset, points=points, results=results, base_index=base_index)
    return new_set, new_set.is_degenerate(cond_max)


def repair_direction(iset: InterpolationSet, drop):
    """Unit vector orthogonal to the directions that remain after dropping ``drop``."""
    keep = [i for i in iset.others() if i != drop]
    if not keep:
        v = np.zeros(iset.m)
        v[0] = 1.0
        return v
    D = iset.points[keep] - iset.base
    _, _, vt = np.linalg.svd(D, full_matrices=True)
    return vt[-1]


def repair_point(iset: InterpolationSet, radius):
    """Return ``(index_to_replace, new_point)`` restoring affine independence."""
    others = iset.others()
    dist = np.linalg.norm(iset.points[others] - iset.base, axis=1)
    drop = others[int(np.argmax(dist))]
    v = repair_direction(iset, drop)
    best = None
    for cand in (iset.base + radius * v, iset.base - radius * v):
        clipped = np.clip(cand, iset.lower, iset.upper)
        if np.array_equal(clipped, cand):
            return drop, cand
        gain = abs(float((clipped - iset.base) @ v))
        if best is None or gain > best[0]:
            best = (gain, clipped)
    if best[0] <= 1e-12 * max(1.0, radius):
        raise InfeasibleGeometryError("box too thin to restore an affinely independent set")
    return drop, best[1]


def apply_repair(iset: InterpolationSet, index, point, result: EvalResult):
    points = iset.points.copy()
    points[index] = point
    results = list(iset.results)
    results[index] = result
    return replace(iset, points=points, results=results)
