"""Experiment drivers behind the ``bilevel-tune`` subcommands.

Every driver writes plain CSV plus a ``manifest.json`` (configuration, seed,
data checksums) into its output directory and returns an in-memory summary.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .composite_core import (
    FixedIterations,
    Termination,
    apriori_bound,
    fista_solve,
    proximal_gradient_reference,
)
from .data_io import SplitSpec, file_sha256, load_mnist, majority_rate, tuning_tasks, validation_tasks
from .dfo_tr import Dynamic, FixedAccuracy, RunLog, SolverConfig, run_solver
from .errors import ConfigError, SolverError
from .problems import ElasticNetBilevel, HyperPoint, elastic_net_problem, generate_lasso_instance, \
    lasso_problem, predict

log = logging.getLogger(__name__)

SUBCOMMANDS = ("bounds-compare", "tune", "sweep", "validate")


def _fmt(x):
    return format(float(x), ".17g")


# Scale presets. "paper" is the full-size protocol; "desk" is a reduced
# version that runs in minutes. Both use raw 0-255 pixels: scaling to [0, 1]
# puts theta0 = [1, 1] on a plateau where the l1 penalty zeroes every weight.
# With raw pixels the weights have norm ~1e-2, so the accuracy cap is set to
# a squared distance of 1e-10 (about 0.1% relative error in w).
PRESETS = {
    "paper": dict(
        digits=[0, 1, 2, 3, 4, 5], train_size=5000, test_size=1000,
        validation_train_size=5000, validation_test_size=1000, downsample=1,
        eval_budget=80, fixed_Ks=[20, 200, 2000],
    ),
    "desk": dict(
        digits=[0, 1], train_size=500, test_size=200,
        validation_train_size=500, validation_test_size=200, downsample=4,
        eval_budget=40, fixed_Ks=[20, 200, 2000],
    ),
}
COMMON = dict(
    c=100.0, delta_min=1e-5, theta0=[1.0, 1.0], alpha1=1e-8, alpha2=1.0,
    eps_max=1e-10, normalize=False,
)


@dataclass
class ExperimentConfig:
    solver: SolverConfig
    scale: str = "desk"
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    digits: List[int] = field(default_factory=lambda: [0, 1])
    train_size: int = 500
    test_size: int = 200
    validation_train_size: int = 500
    validation_test_size: int = 200
    downsample: int = 4
    normalize: bool = False
    alpha1: float = 1e-8
    alpha2: float = 1.0
    fixed_Ks: List[int] = field(default_factory=lambda: [20, 200, 2000])
    include_dynamic: bool = True
    sweep_theta2: List[float] = field(default_factory=lambda: [-3, -2, -1, 0, 1, 2, 3])
    validate_K: int = 2000
    validate_digits: List[int] = field(default_factory=lambda: list(range(10)))
    lasso_seed: int = 0
    lasso_rows: int = 100
    lasso_cols: int = 200
    lasso_theta: List[float] = field(default_factory=lambda: [10.0, 10.0])
    lasso_a_mean: float = 1.0
    lasso_iterations: int = 500
    oracle_iterations: int = 100_000
    jobs: int = 1

    @classmethod
    def experiment_keys(cls):
        return [f.name for f in fields(cls) if f.name != "solver"]

    @property
    def seed(self):
        return self.solver.seed

    def split_spec(self):
        return SplitSpec(self.train_size, self.test_size, self.validation_train_size,
                         self.validation_test_size, seed=self.seed,
                         downsample_factor=self.downsample, normalize=self.normalize)

    def variants(self):
        out = [("dynamic", Dynamic(self.solver.c, self.solver.eps_max))] if self.include_dynamic else []
        out += [(f"K{k}", FixedAccuracy(int(k))) for k in self.fixed_Ks]
        return out

    def to_mapping(self):
        d = {k: getattr(self, k) for k in self.experiment_keys()}
        d.update(self.solver.to_mapping())
        return d


def build_config(mapping=None, scale="desk", seed=None):
    """Preset for ``scale`` overlaid with a flat ``mapping``; unknown keys are errors."""
    if scale not in PRESETS:
        raise ConfigError(f"scale must be one of {sorted(PRESETS)}, got {scale!r}")
    merged = {**COMMON, **PRESETS[scale], **(mapping or {})}
    if seed is not None:
        merged["seed"] = seed
    merged.pop("scale", None)
    solver_keys = set(SolverConfig.keys())
    exp_keys = set(ExperimentConfig.experiment_keys())
    unknown = sorted(set(merged) - solver_keys - exp_keys)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    solver = SolverConfig.from_mapping({k: v for k, v in merged.items() if k in solver_keys})
    try:
        cfg = ExperimentConfig(solver=solver, scale=scale,
                               **{k: v for k, v in merged.items() if k in exp_keys})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.digits or any(not 0 <= d <= 9 for d in cfg.digits):
        raise ConfigError("digits must be a nonempty list drawn from 0..9")
    return cfg


def load_config(path=None, scale="desk", seed=None):
    mapping = {}
    if path is not None:
        try:
            with open(path) as fh:
                mapping = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigError("configuration must be a flat key-value mapping")
        if "scale" in mapping and scale is None:
            scale = mapping["scale"]
    return build_config(mapping, scale or "desk", seed)


def write_manifest(out, cfg: ExperimentConfig, subcommand, extra=None):
    data = {}
    for key in ("images_path", "labels_path"):
        p = getattr(cfg, key)
        if p and os.path.exists(p):
            data[p] = file_sha256(p)
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "scale": cfg.scale,
        "seed": cfg.seed,
        "config": cfg.to_mapping(),
        "data_sha256": data,
    }
    if cfg.scale == "desk":
        manifest["desk_sizes"] = dict(
            digits=cfg.digits, train_size=cfg.train_size, test_size=cfg.test_size,
            downsample=cfg.downsample, eval_budget=cfg.solver.eval_budget)
    if extra:
        manifest.update(extra)
    with open(Path(out) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- bounds-compare

def bounds_compare(cfg: ExperimentConfig):
    """Per-iteration true error, a priori bound and certificate on the LASSO instance."""
    A, w0, b = generate_lasso_instance(cfg.lasso_seed, cfg.lasso_rows, cfg.lasso_cols,
                                       a_mean=cfg.lasso_a_mean)
    problem = lasso_problem(A, b, HyperPoint.unbounded(cfg.lasso_theta))
    w_star = proximal_gradient_reference(problem, w0, cfg.oracle_iterations)
    init_sq = float((w0 - w_star) @ (w0 - w_star))
    kappa = problem.kappa
    rows = []

    def collect(k, w, cert):
        e = w - w_star
        rows.append((k, float(e @ e), apriori_bound(kappa, init_sq, k), cert))

    fista_solve(problem, w0, Termination(FixedIterations(cfg.lasso_iterations)), callback=collect)
    true_err = np.array([r[1] for r in rows])
    prior = np.array([r[2] for r in rows])
    post = np.array([r[3] for r in rows])
    summary = dict(
        mu=problem.mu, lipschitz=problem.lipschitz, kappa=kappa, init_dist_sq=init_sq,
        iterations=len(rows),
        aposteriori_dominates=bool(np.all(true_err <= post)),
        apriori_dominates=bool(np.all(true_err <= prior)),
        final_true_err_sq=float(true_err[-1]), final_apriori=float(prior[-1]),
        final_aposteriori=float(post[-1]),
        final_tightness_ratio=float(post[-1] / prior[-1]),
        final_aposteriori_tighter=bool(post[-1] < prior[-1]),
    )
    return rows, summary


def cmd_bounds_compare(cfg: ExperimentConfig, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows, summary = bounds_compare(cfg)
    _write_rows(out / "bounds_compare.csv", ["iter", "true_err_sq", "apriori_bound",
                                             "aposteriori_bound"],
                [(k, _fmt(t), _fmt(p), _fmt(q)) for k, t, p, q in rows])
    with open(out / "bounds_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    write_manifest(out, cfg, "bounds-compare")
    return summary


# ------------------------------------------------------------------------ tune

def load_data(cfg: ExperimentConfig):
    if not cfg.images_path or not cfg.labels_path:
        raise ConfigError("images_path and labels_path are required for MNIST experiments")
    for p in (cfg.images_path, cfg.labels_path):
        if not os.path.exists(p):
            raise ConfigError(f"data file not found: {p}")
    return load_mnist(cfg.images_path, cfg.labels_path)


def tuning_problem(cfg: ExperimentConfig, data=None):
    images, labels = data if data is not None else load_data(cfg)
    tasks = tuning_tasks(images, labels, cfg.digits, cfg.split_spec())
    return ElasticNetBilevel(tasks, cfg.alpha1, cfg.alpha2)


@dataclass
class VariantResult:
    variant: str
    theta0: List[float]
    theta: List[float]
    F: float
    fista_iterations: int
    eval_count: int
    reason: str
    log: RunLog


def run_variant(problem, cfg: ExperimentConfig, name, mode, theta0=None, log_path=None):
    solver = SolverConfig.from_mapping({**cfg.solver.to_mapping(),
                                        "theta0": list(theta0 or cfg.solver.theta0)})
    try:
        res = run_solver(solver.start_point(), problem, mode, solver)
    except SolverError as exc:
        if log_path is not None and exc.run_log is not None:
            exc.run_log.save(log_path)
        raise
    if log_path is not None:
        res.log.save(log_path)
    return VariantResult(name, [float(t) for t in solver.theta0], res.final.theta.tolist(),
                         res.final_F, res.fista_iterations, res.eval_count, res.reason, res.log)


SUMMARY_HEADER = ["variant", "theta0_1", "theta0_2", "theta1", "theta2", "F",
                  "cum_fista_iters", "eval_count", "reason"]


def _summary_row(r: VariantResult):
    return [r.variant, _fmt(r.theta0[0]), _fmt(r.theta0[1]), _fmt(r.theta[0]), _fmt(r.theta[1]),
            _fmt(r.F), r.fista_iterations, r.eval_count, r.reason]


def tune(cfg: ExperimentConfig, out=None, data=None, problem=None):
    problem = problem or tuning_problem(cfg, data)
    results = {}
    for name, mode in cfg.variants():
        path = None if out is None else Path(out) / f"runlog_{name}.csv"
        results[name] = run_variant(problem, cfg, name, mode, log_path=path)
        r = results[name]
        log.info("%s: theta=%s F=%.6g fista=%d", name, np.round(r.theta, 4), r.F,
                 r.fista_iterations)
    return results


def cmd_tune(cfg: ExperimentConfig, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "tune")
    results = tune(cfg, out)
    _write_rows(out / "tune_summary.csv", SUMMARY_HEADER, [_summary_row(r) for r in results.values()])
    return results


# ----------------------------------------------------------------------- sweep

def _sweep_job(args):
    cfg, theta2, name, mode, out = args
    problem = tuning_problem(cfg)
    theta0 = [cfg.solver.theta0[0], float(theta2)]
    path = None if out is None else Path(out) / f"runlog_{name}_t2_{theta2:+g}.csv"
    return run_variant(problem, cfg, name, mode, theta0, path)


def spread(results: List[VariantResult]):
    th = np.array([r.theta for r in results])
    return (th.max(axis=0) - th.min(axis=0)).tolist()


def sweep(cfg: ExperimentConfig, out=None, data=None, problem=None):
    jobs = [(theta2, name, mode) for name, mode in cfg.variants() for theta2 in cfg.sweep_theta2]
    if cfg.jobs > 1 and problem is None:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            runs = list(pool.map(_sweep_job, [(cfg, t, n, m, out) for t, n, m in jobs]))
    else:
        problem = problem or tuning_problem(cfg, data)
        runs = []
        for theta2, name, mode in jobs:
            path = None if out is None else Path(out) / f"runlog_{name}_t2_{theta2:+g}.csv"
            runs.append(run_variant(problem, cfg, name, mode,
                                    [cfg.solver.theta0[0], float(theta2)], path))
    by_variant: Dict[str, List[VariantResult]] = {}
    for r in runs:
        by_variant.setdefault(r.variant, []).append(r)
    spreads = {name: spread(rs) for name, rs in by_variant.items()}
    return by_variant, spreads


def cmd_sweep(cfg: ExperimentConfig, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "sweep")
    by_variant, spreads = sweep(cfg, out)
    _write_rows(out / "sweep_finals.csv", SUMMARY_HEADER,
                [_summary_row(r) for rs in by_variant.values() for r in rs])
    _write_rows(out / "sweep_spread.csv", ["variant", "spread_theta1", "spread_theta2"],
                [[name, _fmt(s[0]), _fmt(s[1])] for name, s in spreads.items()])
    names = list(spreads)
    row = {f"spread({n})": max(spreads[n]) for n in names}
    with open(out / "sweep_spread_summary.json", "w") as fh:
        json.dump(row, fh, indent=2)
    if "dynamic" in spreads and "K20" in spreads:
        if max(spreads["dynamic"]) > max(spreads["K20"]):
            log.warning("spread(dynamic) exceeds spread(K20) in this run")
    return by_variant, spreads


# -------------------------------------------------------------------- validate

def read_thetas(path):
    """Learned thetas from a tune/sweep summary CSV: ``[(label, theta0_2, theta)]``."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((row["variant"], float(row["theta0_2"]),
                        [float(row["theta1"]), float(row["theta2"])]))
    return out


def classifier_accuracy(task, w):
    truth = (task.test_labels == 1).astype(int)
    return float(np.mean(predict(w, task.test_features) == truth))


def validate(cfg: ExperimentConfig, thetas, data=None):
    """Train every digit at each learned theta and score test accuracy."""
    images, labels = data if data is not None else load_data(cfg)
    tasks = validation_tasks(images, labels, cfg.split_spec(), cfg.validate_digits)
    problem = ElasticNetBilevel(tasks, cfg.alpha1, cfg.alpha2)
    term = Termination(FixedIterations(cfg.validate_K), certificate_interval=None)
    rows = []
    for label, start2, theta in thetas:
        theta = np.asarray(theta, dtype=float)
        for j, task in enumerate(tasks):
            sol = fista_solve(problem.lower_problem(j, theta), None, term)
            rows.append(dict(digit=task.digit, variant=label, theta0_2=start2,
                             theta1=float(theta[0]), theta2=float(theta[1]),
                             accuracy=classifier_accuracy(task, sol.w),
                             majority_rate=majority_rate(task.test_labels)))
    return rows


VALIDATION_HEADER = ["digit", "variant", "theta0_2", "theta1", "theta2", "accuracy",
                     "majority_rate"]


def cmd_validate(cfg: ExperimentConfig, out, thetas):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "validate", {"thetas": [list(t[2]) for t in thetas]})
    rows = validate(cfg, thetas)
    _write_rows(out / "validation_accuracy.csv", VALIDATION_HEADER,
                [[r["digit"], r["variant"], _fmt(r["theta0_2"]), _fmt(r["theta1"]),
                  _fmt(r["theta2"]), _fmt(r["accuracy"]), _fmt(r["majority_rate"])]
                 for r in rows])
    return rows
