"""Gauss-Newton model from linearly interpolated residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGeometryError
from .geometry import DEFAULT_COND_MAX, InterpolationSet


@dataclass
class GNModel:
    residual_values: np.ndarray  # r at the base point
    jacobian: np.ndarray  # (R, m)
    gradient: np.ndarray  # J^T r
    hessian: np.ndarray  # J^T J

    def residual_at(self, s):
        return self.residual_values + self.jacobian @ s

    def value(self, s):
        """``m(s) = 0.5 ||r + J s||^2``; the objective F is ``2 m``."""
        r = self.residual_at(s)
        return 0.5 * float(r @ r)

    def decrease(self, s):
        """``m(0) - m(s) = -(g.s + 0.5 s.H.s)``, free of cancellation in m."""
        s = np.asarray(s, dtype=float)
        return -float(self.gradient @ s + 0.5 * s @ self.hessian @ s)


def build_model(iset: InterpolationSet, cond_max=DEFAULT_COND_MAX):
    """Fit each residual linearly through all ``m + 1`` points."""
    D = iset.directions()
    cond = iset.condition_number()
    if not np.isfinite(cond) or cond > cond_max:
        raise DegenerateGeometryError(f"interpolation directions ill-conditioned (cond={cond:.3e})")
    vecs = [r.vector() for r in iset.residuals]
    r0 = vecs[iset.base_index]
    rhs = np.array([vecs[i] - r0 for i in iset.others()])  # (m, R)
    jac = np.linalg.solve(D, rhs).T
    return GNModel(r0, jac, jac.T @ r0, jac.T @ jac)


def interpolation_error(model: GNModel, iset: InterpolationSet):
    """Largest relative mismatch between predicted and stored residual vectors."""
    worst = 0.0
    r0 = model.residual_values
    for y, res in zip(iset.points, iset.residuals):
        actual = res.vector()
        pred = model.residual_at(y - iset.base)
        scale = max(np.linalg.norm(actual), np.linalg.norm(r0), np.finfo(float).tiny)
        worst = max(worst, float(np.linalg.norm(pred - actual)) / scale)
    return worst
