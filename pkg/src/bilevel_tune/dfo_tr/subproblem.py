"""Trust-region subproblem ``min g.s + 0.5 s.H.s`` s.t. ``||s|| <= radius``.

Solved exactly through an eigendecomposition of H (cheap since the number of
hyperparameters is tiny), including the hard case. Box bounds on the step are
handled afterwards by projecting the ball solution and scanning along the
projected arc, with the projected Cauchy step as a fallback.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq


def quadratic_decrease(g, H, s):
    return -float(g @ s + 0.5 * s @ H @ s)


def cauchy_decrease_bound(g, H, radius):
    """``0.5 ||g|| min(radius, ||g|| / ||H||)``."""
    gn = float(np.linalg.norm(g))
    hn = float(np.linalg.norm(H, 2))
    return 0.5 * gn * (min(radius, gn / hn) if hn > 0 else radius)


def _step(gh, lam, sigma, mask=None):
    denom = lam + sigma
    out = np.zeros_like(gh)
    keep = np.ones_like(gh, dtype=bool) if mask is None else mask
    out[keep] = -gh[keep] / denom[keep]
    return out


def trs_ball(g, H, radius):
    g = np.asarray(g, dtype=float)
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    lam, Q = np.linalg.eigh(H)
    gh = Q.T @ g
    gnorm = float(np.linalg.norm(g))
    scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
    tol = 1e-12 * scale
    lam_min = float(lam[0])

    if gnorm == 0.0 and lam_min >= -tol:
        return np.zeros_like(g)

    if lam_min >= -tol:
        # interior (pseudo-)Newton step when the gradient avoids the null space
        pos = lam > tol
        if np.all(np.abs(gh[~pos]) <= 1e-12 * max(gnorm, 1e-300)):
            sh = _step(gh, lam, 0.0, pos)
            if np.linalg.norm(sh) <= radius:
                return Q @ sh

    sigma_lo = max(0.0, -lam_min)
    low = np.abs(lam - lam_min) <= tol
    hard = np.all(np.abs(gh[low]) <= 1e-12 * max(gnorm, 1e-300))
    if hard:
        sh = _step(gh, lam, sigma_lo, ~low)
        nrm = float(np.linalg.norm(sh))
        if nrm <= radius:
            sh = sh.copy()
            sh[np.argmax(low)] += math.sqrt(max(radius * radius - nrm * nrm, 0.0))
            return Q @ sh

    def phi(sigma):
        # decreasing in sigma; equals 1/radius at a pole of the step norm
        denom = lam + sigma
        if np.any((denom <= 0) & (gh != 0)):
            return 1.0 / radius
        return 1.0 / radius - 1.0 / float(np.linalg.norm(_step(gh, lam, sigma, denom > 0)))

    hi = gnorm / radius + abs(lam_min) + 1.0
    while phi(hi) > 0:
        hi *= 2.0
    if phi(sigma_lo) <= 0:
        sigma = sigma_lo
    else:
        sigma = brentq(phi, sigma_lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    sh = _step(gh, lam, sigma, lam + sigma > 0)
    s = Q @ sh
    n = float(np.linalg.norm(s))
    if n > radius:
        s *= radius / n
    return s


def solve_tr_subproblem(g, H, radius, lower=None, upper=None):
    """Step ``s`` with ``||s|| <= radius`` and ``lower <= s <= upper``.

    ``lower``/``upper`` are box bounds relative to the base point, so they
    must bracket zero.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    s = trs_ball(g, H, radius)
    if lower is None and upper is None:
        return s
    lower = np.full_like(g, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full_like(g, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.all(s >= lower) and np.all(s <= upper):
        return s

    # clipping toward zero never leaves the ball
    candidates = [np.clip(a * s, lower, upper) for a in 0.5 ** np.arange(30)]
    gn = float(np.linalg.norm(g))
    if gn > 0:
        curv = float(g @ H @ g)
        t = radius / gn if curv <= 0 else min(radius / gn, gn * gn / curv)
        candidates += [np.clip(-a * t * g, lower, upper) for a in 0.5 ** np.arange(30)]
    return max(candidates, key=lambda c: quadratic_decrease(g, H, c))
