"""Flat key-value solver configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from ..errors import ConfigError


@dataclass
class SolverConfig:
    delta0: float = 0.1
    delta_min: float = 1e-5
    delta_max: float = 1e3
    eta1: float = 0.1
    eta2: float = 0.7
    gamma_dec: float = 0.5
    gamma_inc: float = 2.0
    c: float = 100.0
    eps_max: float = 1e2
    eval_budget: int = 80
    mode: str = "dynamic"
    fixed_K: Optional[int] = None
    theta0: list = field(default_factory=lambda: [1.0, 1.0])
    bounds_lo: list = field(default_factory=lambda: [-8.0, -8.0])
    bounds_hi: list = field(default_factory=lambda: [8.0, 8.0])
    seed: int = 0
    # extensions beyond the core key set
    cond_max: float = 1e8
    max_fista_iterations: int = 10**6
    certify_fixed: bool = False
    audit: bool = False
    warm_start_new_points: bool = True

    def __post_init__(self):
        self.validate()

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping):
        unknown = sorted(set(mapping) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown solver configuration keys: {', '.join(unknown)}")
        try:
            return cls(**dict(mapping))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self):
        return {name: getattr(self, name) for name in self.keys()}

    def validate(self):
        if self.mode not in ("dynamic", "fixed"):
            raise ConfigError(f"mode must be 'dynamic' or 'fixed', got {self.mode!r}")
        if self.mode == "fixed" and (self.fixed_K is None or int(self.fixed_K) < 1):
            raise ConfigError("fixed mode requires a positive fixed_K")
        if not (0 < self.delta_min <= self.delta0 <= self.delta_max):
            raise ConfigError("need 0 < delta_min <= delta0 <= delta_max")
        if not (0 < self.eta1 <= self.eta2 < 1):
            raise ConfigError("need 0 < eta1 <= eta2 < 1")
        if not (0 < self.gamma_dec < 1 < self.gamma_inc):
            raise ConfigError("need 0 < gamma_dec < 1 < gamma_inc")
        if self.c <= 0 or self.eps_max <= 0:
            raise ConfigError("c and eps_max must be positive")
        if int(self.eval_budget) < 1:
            raise ConfigError("eval_budget must be positive")
        lo, hi, t0 = (np.asarray(v, dtype=float) for v in
                      (self.bounds_lo, self.bounds_hi, self.theta0))
        if not (lo.shape == hi.shape == t0.shape and t0.ndim == 1):
            raise ConfigError("theta0, bounds_lo and bounds_hi must have equal length")
        if np.any(lo > hi) or np.any(t0 < lo) or np.any(t0 > hi):
            raise ConfigError("theta0 must lie within [bounds_lo, bounds_hi]")

    def start_point(self):
        from ..problems import HyperPoint

        return HyperPoint(self.theta0, self.bounds_lo, self.bounds_hi)

    def accuracy_mode(self):
        from .solver import Dynamic, FixedAccuracy

        if self.mode == "dynamic":
            return Dynamic(c=self.c, eps_max=self.eps_max)
        return FixedAccuracy(int(self.fixed_K))
