"""Dynamic-accuracy trust-region loop for the upper-level problem.

Each iteration builds a Gauss-Newton model from the interpolation set, takes
a trust-region step, compares actual and predicted decrease, and swaps the
trial point into the set. In dynamic mode every lower-level solution used by
the model or by the acceptance test carries a certificate no larger than
``required_accuracy(radius)``; stale points are re-solved (warm started)
before they are used.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import DegenerateGeometryError, InvalidStepError, SolverError
from ..problems import HyperPoint
from .config import SolverConfig
from .evaluation import Certified, EvalCache, EvalResult, Fixed, evaluate_point, required_accuracy
from .geometry import (
    InterpolationSet,
    apply_repair,
    init_interpolation_set,
    repair_point,
    update_interpolation_set,
)
from .model import GNModel, build_model, interpolation_error
from .subproblem import solve_tr_subproblem

log = logging.getLogger(__name__)

STEP_TYPES = ("initial", "trial_accepted", "trial_rejected", "geometry", "re_evaluation")
EVALUATION_TYPES = ("initial", "trial_accepted", "trial_rejected", "geometry")
INTERPOLATION_RTOL = 1e-9


@dataclass(frozen=True)
class Dynamic:
    c: float = 100.0
    eps_max: Optional[float] = 1e2


@dataclass(frozen=True)
class FixedAccuracy:
    K: int


@dataclass
class TrustRegionParams:
    eta1: float = 0.1
    eta2: float = 0.7
    gamma_dec: float = 0.5
    gamma_inc: float = 2.0
    delta_max: float = 1e3


@dataclass
class TrustRegionState:
    iterate: HyperPoint
    radius: float
    radius_min: float
    eval_budget: int
    eval_count: int = 0
    c_accuracy: float = 100.0
    params: TrustRegionParams = field(default_factory=TrustRegionParams)


def acceptance_step(state: TrustRegionState, F_base, F_trial, model_decrease):
    """Return ``(rho, accepted, new_radius)`` for a trial step."""
    if not (model_decrease > 0):
        raise InvalidStepError(f"model decrease must be positive, got {model_decrease}")
    p = state.params
    rho = (F_base - F_trial) / model_decrease
    accepted = rho >= p.eta1
    if rho >= p.eta2:
        radius = min(p.gamma_inc * state.radius, p.delta_max)
    elif accepted:
        radius = state.radius
    else:
        radius = p.gamma_dec * state.radius
    return rho, accepted, radius


@dataclass
class RunRecord:
    eval_index: int
    theta: np.ndarray
    F: float
    certified: bool
    cum_fista_iters: int
    delta: float
    step_type: str


def _fmt(x):
    return format(float(x), ".17g")


class RunLog:
    """Per-evaluation trace; exported as CSV with 17 significant digits."""

    def __init__(self, records=None):
        self.records: List[RunRecord] = list(records or [])

    def append(self, record: RunRecord):
        if self.records and record.cum_fista_iters < self.records[-1].cum_fista_iters:
            raise ValueError("cumulative FISTA iterations must be nondecreasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def evaluations(self):
        return [r for r in self.records if r.step_type in EVALUATION_TYPES]

    def accepted_values(self):
        return [r.F for r in self.records if r.step_type == "trial_accepted"]

    def header(self):
        m = len(self.records[0].theta) if self.records else 2
        return ["eval_index", *[f"theta{i + 1}" for i in range(m)], "F", "certified",
                "cum_fista_iters", "delta", "step_type"]

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header())
        for r in self.records:
            w.writerow([r.eval_index, *[_fmt(t) for t in r.theta], _fmt(r.F),
                        int(r.certified), r.cum_fista_iters, _fmt(r.delta), r.step_type])

    def save(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    @classmethod
    def read_csv(cls, fh):
        rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        m = sum(1 for h in header if h.startswith("theta"))
        out = cls()
        for row in body:
            out.records.append(RunRecord(
                eval_index=int(row[0]),
                theta=np.array([float(v) for v in row[1:1 + m]]),
                F=float(row[1 + m]),
                certified=bool(int(row[2 + m])),
                cum_fista_iters=int(row[3 + m]),
                delta=float(row[4 + m]),
                step_type=row[5 + m],
            ))
        return out

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            return cls.read_csv(fh)


@dataclass
class ConsumedEval:
    """One (point, task) solution consumed by a model build or acceptance test."""

    theta: np.ndarray
    task: int
    certificate: float
    demand: float
    radius: float
    w: np.ndarray
    purpose: str


@dataclass
class RunResult:
    final: HyperPoint
    final_F: float
    log: RunLog
    eval_count: int
    fista_iterations: int
    reason: str
    cache: EvalCache
    interpolation_set: InterpolationSet
    consumed: List[ConsumedEval]
    max_interpolation_error: float


class _Runner:
    def __init__(self, start, problem, mode, config: SolverConfig, audit):
        self.problem = problem
        self.mode = mode
        self.config = config
        self.audit = audit
        self.cache = EvalCache()
        self.log = RunLog()
        self.consumed: List[ConsumedEval] = []
        self.max_interp_err = 0.0
        self.state = TrustRegionState(
            iterate=start,
            radius=config.delta0,
            radius_min=config.delta_min,
            eval_budget=int(config.eval_budget),
            c_accuracy=mode.c if isinstance(mode, Dynamic) else config.c,
            params=TrustRegionParams(config.eta1, config.eta2, config.gamma_dec,
                                     config.gamma_inc, config.delta_max),
        )
        self.lower = start.lower
        self.upper = start.upper

    @property
    def dynamic(self):
        return isinstance(self.mode, Dynamic)

    def demand(self):
        return required_accuracy(self.state.radius, self.mode.c, self.mode.eps_max)

    def accuracy(self):
        return Certified(self.demand()) if self.dynamic else Fixed(self.mode.K)

    def solve_at(self, theta, warm_start=None) -> EvalResult:
        return evaluate_point(theta, self.accuracy(), self.problem, self.cache,
                              max_iterations=self.config.max_fista_iterations,
                              certify_fixed=self.config.certify_fixed,
                              warm_start=warm_start)

    def record(self, res: EvalResult, step_type):
        certified = self.dynamic and res.max_certificate() <= self.demand()
        self.log.append(RunRecord(self.state.eval_count, res.theta.copy(), res.objective,
                                  certified, self.cache.total_iterations, self.state.radius,
                                  step_type))

    def new_evaluation(self, theta, near=None):
        # dynamic mode starts fresh points from the nearby iterate's solutions
        warm = None
        if near is not None and self.dynamic and self.config.warm_start_new_points:
            warm = near.ws
        res = self.solve_at(theta, warm)
        self.state.eval_count += 1
        return res

    def budget_left(self):
        return self.state.eval_count < self.state.eval_budget

    def consume(self, res: EvalResult, purpose):
        if not (self.audit and self.dynamic):
            return
        for j, (w, cert) in enumerate(zip(res.ws, res.certificates)):
            self.consumed.append(ConsumedEval(res.theta.copy(), j, float(cert), self.demand(),
                                              self.state.radius, np.array(w, copy=True), purpose))

    def refresh(self, iset: InterpolationSet):
        """Re-solve set points whose certificates exceed the current demand."""
        if not self.dynamic:
            return iset
        eps = self.demand()
        results = list(iset.results)
        for i, res in enumerate(results):
            if res.max_certificate() > eps:
                new = self.solve_at(res.theta)
                results[i] = new
                self.record(new, "re_evaluation")
        iset.results = results
        return iset

    def repair(self, iset: InterpolationSet):
        idx, point = repair_point(iset, self.state.radius)
        res = self.new_evaluation(point, iset.base_result)
        self.record(res, "geometry")
        return apply_repair(iset, idx, point, res)

    def run(self):
        st = self.state
        if st.eval_budget < st.iterate.m + 1:
            raise SolverError("evaluation budget cannot cover the initial interpolation set")

        first = []

        def initial(theta):
            res = self.new_evaluation(theta, first[0] if first else None)
            first.append(res)
            self.record(res, "initial")
            return res

        iset = init_interpolation_set(st.iterate, st.radius, initial)
        reason = "budget"
        while True:
            if not self.budget_left():
                reason = "budget"
                break
            if st.radius <= st.radius_min:
                reason = "radius"
                break
            iset = self.refresh(iset)
            try:
                model = build_model(iset, self.config.cond_max)
            except DegenerateGeometryError:
                iset = self.repair(iset)
                continue
            if self.audit:
                err = interpolation_error(model, iset)
                self.max_interp_err = max(self.max_interp_err, err)
                if err > INTERPOLATION_RTOL:
                    raise SolverError(f"interpolation audit failed: relative error {err:.3e}")
                for res in iset.results:
                    self.consume(res, "model")

            base = iset.base
            step = solve_tr_subproblem(model.gradient, model.hessian, st.radius,
                                       self.lower - base, self.upper - base)
            trial = np.clip(base + step, self.lower, self.upper)
            step = trial - base
            # the model stands for 0.5 * F, so F-scale predicted decrease is twice it
            predicted = 2.0 * model.decrease(step)
            if not (predicted > 0) or np.linalg.norm(step) == 0.0:
                log.debug("model stationary at radius %g; shrinking", st.radius)
                st.radius *= st.params.gamma_dec
                continue

            res = self.new_evaluation(trial, iset.base_result)
            base_res = iset.base_result
            self.consume(base_res, "acceptance")
            self.consume(res, "acceptance")
            rho, accepted, new_radius = acceptance_step(st, base_res.objective, res.objective,
                                                        predicted)
            self.record(res, "trial_accepted" if accepted else "trial_rejected")
            log.debug("eval %d rho=%.3g accepted=%s radius %g -> %g", st.eval_count, rho,
                      accepted, st.radius, new_radius)
            iset, degenerate = update_interpolation_set(iset, trial, res, accepted,
                                                        self.config.cond_max)
            if accepted:
                st.iterate = iset.point(iset.base_index)
            st.radius = new_radius
            if degenerate and self.budget_left():
                iset = self.repair(iset)

        base_res = iset.base_result
        return RunResult(
            final=iset.point(iset.base_index),
            final_F=base_res.objective,
            log=self.log,
            eval_count=st.eval_count,
            fista_iterations=self.cache.total_iterations,
            reason=reason,
            cache=self.cache,
            interpolation_set=iset,
            consumed=self.consumed,
            max_interpolation_error=self.max_interp_err,
        )


def run_solver(start: HyperPoint, problem, mode=None, config: Optional[SolverConfig] = None,
               audit=None):
    """Minimise the upper-level objective from ``start``.

    ``problem`` provides ``n_tasks``, ``initial_w(j)``, ``lower_problem(j,
    theta)`` and ``residuals(theta, ws)``. ``mode`` defaults to the one
    described by ``config``. Solver errors carry the partial ``run_log``.
    """
    config = config or SolverConfig()
    mode = mode or config.accuracy_mode()
    audit = config.audit if audit is None else audit
    runner = _Runner(start, problem, mode, config, audit)
    try:
        return runner.run()
    except SolverError as exc:
        exc.run_log = runner.log
        raise
