import csv
import json

import numpy as np
import pytest
import yaml

from bilevel_tune import experiments as ex
from bilevel_tune.cli import main
from bilevel_tune.dfo_tr import RunLog, run_solver
from bilevel_tune.errors import ConfigError

TINY = dict(train_size=120, test_size=60, validation_train_size=120, validation_test_size=60,
            downsample=4, eval_budget=8, fixed_Ks=[20], sweep_theta2=[-1, 0],
            validate_K=200, validate_digits=[0, 1, 2])


def tiny_config(tmp_path, mnist_paths, **extra):
    path = tmp_path / "cfg.yaml"
    data = dict(TINY, images_path=mnist_paths[0], labels_path=mnist_paths[1], **extra)
    path.write_text(yaml.safe_dump(data))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_paper_preset_values():
    cfg = ex.build_config(scale="paper")
    s = cfg.solver
    assert (s.c, s.eval_budget, s.delta_min, s.theta0) == (100.0, 80, 1e-5, [1.0, 1.0])
    assert (cfg.alpha1, cfg.alpha2) == (1e-8, 1.0)
    assert (cfg.train_size, cfg.test_size, cfg.digits) == (5000, 1000, [0, 1, 2, 3, 4, 5])
    assert cfg.fixed_Ks == [20, 200, 2000] and cfg.downsample == 1
    assert [name for name, _ in cfg.variants()] == ["dynamic", "K20", "K200", "K2000"]


def test_desk_preset_values():
    cfg = ex.build_config(scale="desk")
    assert (cfg.train_size, cfg.test_size, cfg.digits, cfg.downsample) == (500, 200, [0, 1], 4)
    assert cfg.solver.eval_budget == 40


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        ex.build_config({"eval_budgett": 3})
    bad = tmp_path / "bad.yaml"
    bad.write_text("eval_budgett: 3\n")
    assert main(["tune", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_missing_data_is_config_error(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"images_path": str(tmp_path / "none")}))
    assert main(["tune", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_solver_error_exit_code(tmp_path, mnist_paths):
    cfg = tiny_config(tmp_path, mnist_paths, max_fista_iterations=1, eps_max=1e-30)
    out = tmp_path / "out"
    assert main(["tune", "--config", str(cfg), "--out", str(out)]) == 3
    assert (out / "runlog_dynamic.csv").exists()
    assert (out / "manifest.json").exists()


def test_bounds_compare(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lasso_iterations": 100, "oracle_iterations": 20000}))
    out = tmp_path / "bc"
    assert main(["bounds-compare", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "bounds_summary.json").read_text())
    assert summary["mu"] == 10.0
    rows = read_rows(out / "bounds_compare.csv")
    assert list(rows[0]) == ["iter", "true_err_sq", "apriori_bound", "aposteriori_bound"]
    assert len(rows) == 100
    for r in rows:
        t = float(r["true_err_sq"])
        assert t <= float(r["aposteriori_bound"]) and t <= float(r["apriori_bound"])
    assert float(rows[-1]["aposteriori_bound"]) < float(rows[-1]["apriori_bound"])


def test_tune_outputs_and_round_trip(tmp_path, mnist_paths):
    cfg = tiny_config(tmp_path, mnist_paths, fixed_Ks=[20, 200, 2000])
    out = tmp_path / "tune"
    assert main(["tune", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    for name in ("dynamic", "K20", "K200", "K2000"):
        assert (out / f"runlog_{name}.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["seed"] == 3
    assert set(manifest["data_sha256"]) == set(mnist_paths)
    assert manifest["desk_sizes"]["train_size"] == 120

    config = ex.load_config(cfg, "desk", 3)
    results = ex.tune(config)
    rows = {r["variant"]: r for r in read_rows(out / "tune_summary.csv")}
    for name, r in results.items():
        assert float(rows[name]["F"]) == r.F
        assert [float(rows[name]["theta1"]), float(rows[name]["theta2"])] == r.theta
        assert int(rows[name]["cum_fista_iters"]) == r.fista_iterations
        log = RunLog.load(out / f"runlog_{name}.csv")
        assert [x.F for x in log] == [x.F for x in r.log]


def test_tune_deterministic(tmp_path, mnist_paths):
    cfg = tiny_config(tmp_path, mnist_paths)
    for d in ("a", "b"):
        assert main(["tune", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("runlog_dynamic.csv", "runlog_K20.csv", "tune_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_and_validate(tmp_path, mnist_paths):
    cfg = tiny_config(tmp_path, mnist_paths, sweep_theta2=[-3, -2, -1, 0, 1, 2, 3],
                      eval_budget=5)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    finals = read_rows(out / "sweep_finals.csv")
    for name in ("dynamic", "K20"):
        assert sorted(float(r["theta0_2"]) for r in finals if r["variant"] == name) == \
            [-3, -2, -1, 0, 1, 2, 3]
    spread = {r["variant"]: r for r in read_rows(out / "sweep_spread.csv")}
    assert {"dynamic", "K20"} <= set(spread)

    val = tmp_path / "val"
    assert main(["validate", "--config", str(cfg), "--out", str(val),
                 "--thetas", str(out / "sweep_finals.csv")]) == 0
    rows = read_rows(val / "validation_accuracy.csv")
    assert len(rows) == 3 * len(finals)
    assert all(0.0 <= float(r["accuracy"]) <= 1.0 for r in rows)


def test_validate_needs_thetas(tmp_path, mnist_paths):
    cfg = tiny_config(tmp_path, mnist_paths)
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 2


def test_degenerate_theta_predicts_positive_everywhere(mnist_paths):
    cfg = ex.build_config(dict(TINY, images_path=mnist_paths[0], labels_path=mnist_paths[1]))
    rows = ex.validate(cfg, [("corner", 0.0, [8.0, 8.0])])
    assert len(rows) == 3
    for r in rows:
        # all weights vanish, and a zero score counts as class 1
        assert r["accuracy"] == pytest.approx(1.0 - r["majority_rate"])


def test_parallel_sweep_matches_serial(tmp_path, mnist_paths):
    base = dict(TINY, images_path=mnist_paths[0], labels_path=mnist_paths[1], eval_budget=4,
                fixed_Ks=[20], include_dynamic=False)
    serial, _ = ex.sweep(ex.build_config(base))
    parallel, _ = ex.sweep(ex.build_config(dict(base, jobs=2)))
    for a, b in zip(serial["K20"], parallel["K20"]):
        assert a.theta == b.theta and a.F == b.F


def _check_acceptance_order(log, fixed):
    theta, F = log.records[0].theta, log.records[0].F
    accepted = []
    for r in log:
        if r.step_type == "re_evaluation" and np.array_equal(r.theta, theta):
            F = r.F
        elif r.step_type == "trial_accepted":
            assert r.F <= F
            theta, F = r.theta, r.F
            accepted.append(r.F)
    if fixed:
        assert all(b <= a for a, b in zip(accepted, accepted[1:]))


def test_accepted_values_and_dynamic_audit(mnist_paths):
    cfg = ex.build_config(dict(TINY, images_path=mnist_paths[0], labels_path=mnist_paths[1],
                               eval_budget=20, fixed_Ks=[20, 200], audit=True))
    problem = ex.tuning_problem(cfg)
    for name, mode in cfg.variants():
        res = run_solver(cfg.solver.start_point(), problem, mode, cfg.solver)
        _check_acceptance_order(res.log, fixed=name != "dynamic")
        if name == "dynamic":
            assert res.consumed
            for ev in res.consumed:
                assert ev.certificate <= (cfg.solver.c * ev.radius**2) ** 2
                assert ev.certificate <= ev.demand
