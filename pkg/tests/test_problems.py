import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from bilevel_tune.composite_core import TargetAccuracy, Termination, fista_solve
from bilevel_tune.errors import NotStronglyConvexError, ZeroMatrixError
from bilevel_tune.problems import (
    ALPHA1,
    ALPHA2,
    BinaryTask,
    ElasticNetBilevel,
    HyperPoint,
    QuadraticBilevel,
    UpperResiduals,
    elastic_net_problem,
    generate_lasso_instance,
    lasso_problem,
    logistic_smooth_part,
    predict,
    regularizer_residuals,
    sigmoid,
    spectral_norm_sq,
    test_residuals as residuals_on_test_set,
)


def random_task(rng, n=20, d=5, n_test=7):
    X = rng.standard_normal((n, d))
    Xt = rng.standard_normal((n_test, d))
    y = rng.choice([-1, 1], n)
    yt = rng.choice([-1, 1], n_test)
    return BinaryTask(X, y, Xt, yt)


def test_hyperpoint_bounds():
    HyperPoint([1.0, 1.0], -8, 8)
    with pytest.raises(ValueError):
        HyperPoint([9.0, 1.0], -8, 8)
    with pytest.raises(ValueError):
        HyperPoint([0.0], 1, -1)


def test_task_validates_labels(rng):
    with pytest.raises(ValueError):
        BinaryTask(np.ones((2, 2)), [0, 1], np.ones((1, 2)), [1])


def test_logistic_at_zero(rng):
    task = random_task(rng)
    value, grad = logistic_smooth_part(task, 0.3)(np.zeros(task.dim))
    assert value == pytest.approx(np.log(2.0), abs=1e-15)
    expected = -(task.features * task.labels[:, None]).sum(axis=0) / task.n_train / 2
    assert np.allclose(grad, expected, atol=1e-15)


def test_logistic_gradient_finite_differences(rng):
    task = random_task(rng)
    f = logistic_smooth_part(task, -0.5)
    w = rng.standard_normal(task.dim)
    _, g = f(w)
    h = 1e-6
    fd = np.array([(f(w + h * e)[0] - f(w - h * e)[0]) / (2 * h) for e in np.eye(task.dim)])
    assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


def test_conditioning_constants():
    task = BinaryTask(np.eye(2), [1, -1], np.eye(2), [1, -1])
    p = elastic_net_problem(task, np.array([1.0, 0.0]), spectral_norm_sq(task.features))
    assert p.mu == 10.0
    assert p.lipschitz == pytest.approx(1 / 8 + 10.0, rel=1e-7)


def test_spectral_norm_examples(rng):
    assert spectral_norm_sq(np.diag([3.0, 1.0])) == pytest.approx(9.0, rel=1e-8)
    assert spectral_norm_sq(np.eye(2)) == pytest.approx(1.0, rel=1e-8)
    X = rng.standard_normal((50, 80))
    exact = np.linalg.svd(X, compute_uv=False)[0] ** 2
    got = spectral_norm_sq(X)
    assert got >= exact
    assert got == pytest.approx(exact, rel=1e-8)
    with pytest.raises(ZeroMatrixError):
        spectral_norm_sq(np.zeros((3, 3)))


def test_lasso_reference_shape():
    A, _, b = generate_lasso_instance(0, 100, 200, a_mean=1.0)
    p = lasso_problem(A, b, HyperPoint.unbounded([10.0, 10.0]))
    assert p.mu == 10.0
    assert 1e3 <= p.lipschitz <= 1e5


def test_lasso_closed_forms():
    p = lasso_problem(np.eye(2), np.zeros(2), [1.0, 0.0])
    sol = fista_solve(p, np.ones(2), Termination(TargetAccuracy(1e-20)))
    assert np.allclose(sol.w, 0.0, atol=1e-10)
    p = lasso_problem(np.array([[1.0]]), np.array([1.0]), [1.0, 0.5])
    sol = fista_solve(p, None, Termination(TargetAccuracy(1e-20)))
    oracle = minimize_scalar(lambda w: 0.5 * (w - 1) ** 2 + 0.5 * w * w + 0.5 * abs(w),
                             bounds=(-2, 2), method="bounded", options={"xatol": 1e-12})
    assert sol.w[0] == pytest.approx(0.25, abs=1e-10)
    assert oracle.x == pytest.approx(0.25, abs=1e-6)


def test_lasso_needs_ridge():
    with pytest.raises(NotStronglyConvexError):
        lasso_problem(np.eye(2), np.zeros(2), [0.0, 1.0])


def test_lasso_generator():
    a1 = generate_lasso_instance(0, 2, 2)
    a2 = generate_lasso_instance(0, 2, 2)
    assert all(np.array_equal(x, y) for x, y in zip(a1, a2))
    A, _, _ = generate_lasso_instance(0, 100, 200)
    assert A.size == 20000 and abs(A.mean()) <= 0.05
    assert not np.array_equal(generate_lasso_instance(1, 100, 200)[0],
                              generate_lasso_instance(2, 100, 200)[0])


def test_test_residuals(rng):
    task = random_task(rng)
    r = residuals_on_test_set(np.zeros(task.dim), task)
    assert float(r @ r) == pytest.approx(task.test_labels.size / 4)
    w = rng.standard_normal(task.dim)
    r = residuals_on_test_set(w, task)
    naive = sum((1 / (1 + np.exp(-x @ w)) - (y == 1)) ** 2
                for x, y in zip(task.test_features, task.test_labels))
    assert float(r @ r) == pytest.approx(naive, abs=1e-12)
    w_sep = np.zeros(task.dim)
    w_sep[0] = 1.0
    sep = BinaryTask(task.features, task.labels,
                     np.outer(task.test_labels, w_sep) * 1e3, task.test_labels)
    assert np.allclose(residuals_on_test_set(w_sep, sep), 0.0, atol=1e-12)


def test_regularizer_residuals():
    assert ALPHA1 == 1e-8 and ALPHA2 == 1.0
    assert np.array_equal(regularizer_residuals([0.0, 3.0], 2.0, 5.0, 0.0, 0.0), [0.0, 0.0])
    r = regularizer_residuals([0.0, 7.0], 3.0, 3.0, 1.0, 0.0)
    assert np.array_equal(r, [1.0, 0.0])


def test_predict_threshold(rng):
    assert predict(np.array([1.0, -1.0]), np.array([[2.0, 2.0]]))[0] == 1
    assert predict(np.array([1.0]), np.array([[-3.0]]))[0] == 0
    w = rng.standard_normal(4)
    x = rng.standard_normal((50, 4))
    assert np.array_equal(predict(w, x), (sigmoid(x @ w) >= 0.5).astype(int))


def test_sigmoid_stable():
    assert sigmoid(np.array([-1000.0]))[0] == 0.0
    assert sigmoid(np.array([1000.0]))[0] == 1.0
    assert sigmoid(np.array([0.0]))[0] == 0.5


def test_upper_residuals_order():
    r = UpperResiduals([np.array([1.0, 2.0]), np.array([3.0])], np.array([4.0]))
    assert r.objective == 30.0
    assert np.array_equal(r.vector(), [1.0, 2.0, 3.0, 4.0])


def test_elastic_net_bilevel_shares_spectral_norm(rng):
    X = rng.standard_normal((20, 5))
    Xt = rng.standard_normal((6, 5))
    tasks = [BinaryTask(X, rng.choice([-1, 1], 20), Xt, rng.choice([-1, 1], 6), digit=d)
             for d in range(3)]
    bl = ElasticNetBilevel(tasks)
    assert len(set(bl.spectral_sq)) == 1
    mu, lip = bl.conditioning(np.array([0.0, 0.0]))
    assert mu == 1.0 and lip == pytest.approx(bl.spectral_sq[0] / 80 + 1)
    res = bl.residuals(np.array([0.0, 0.0]), [np.zeros(5)] * 3)
    assert res.objective == pytest.approx(3 * 6 / 4 + ALPHA1 * lip**2 + 1.0)


def test_quadratic_bilevel_exact():
    qb = QuadraticBilevel([1.0, -2.0], dim=4, kappa=50.0)
    theta = np.array([0.5, 0.5])
    p = qb.lower_problem(0, theta)
    assert p.kappa == pytest.approx(50.0)
    sol = fista_solve(p, qb.initial_w(0), Termination(TargetAccuracy(1e-20)))
    assert np.allclose(sol.w, qb.exact_solution(0, theta), atol=1e-9)
    res = qb.residuals(theta, [qb.exact_solution(0, theta)])
    assert res.objective == pytest.approx(0.25 + 6.25)
