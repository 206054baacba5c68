import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import minimize as scipy_minimize
from scipy.special import expit

from windowbench import gradcheck
from windowbench.linear import (
    LinearModel,
    TrainingError,
    l1_lambda_max,
    lr_full_objective,
    lr_objective,
    predict,
    predict_task,
    train_lr,
    train_multitask_lr,
)


def _data(n=80, d=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X @ rng.normal(size=d) + rng.normal(scale=1.5, size=n) > 0).astype(float)
    return X, y


def test_two_separable_points_ridge():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    y = np.array([1.0, 0.0])
    m = train_lr(X, y, "l2", 0.1)
    assert np.array_equal(predict(m, X) > 0.5, y == 1)
    assert np.all(np.isfinite(m.w)) and np.linalg.norm(m.w) < 100


def test_l1_at_lambda_max_zeroes_weights():
    X, y = _data()
    s = np.linspace(0.5, 2.0, y.size)
    lmax = l1_lambda_max(X, y, s)
    m = train_lr(X, y, "l1", lmax, sample_weight=s)
    assert np.count_nonzero(m.w) == 0
    assert np.allclose(predict(m, X), np.dot(s, y) / s.sum(), atol=1e-12)
    below = train_lr(X, y, "l1", 0.8 * lmax, sample_weight=s)
    assert np.count_nonzero(below.w) > 0
    free = train_lr(X, y, "l1", 0.0)
    assert np.count_nonzero(free.w) >= np.count_nonzero(m.w)


def test_lambda_zero_matches_lbfgs_minimum():
    X, y = _data(200, 6, seed=1)
    smooth = lr_objective(X, y, np.ones_like(y), "none", 0.0)
    ref = scipy_minimize(smooth, np.zeros(7), jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15})
    for penalty in ("none", "l1", "l2"):
        m = train_lr(X, y, penalty, 0.0)
        assert abs(m.objective - ref.fun) <= 1e-8
        assert abs(lr_full_objective(m, X, y) - ref.fun) <= 1e-8


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    X, y = _data(30, 4, seed=2)
    s = rng.uniform(0.2, 3.0, size=y.size)
    for penalty, lam in (("none", 0.0), ("l2", 0.7)):
        err = gradcheck.check_vector(lr_objective(X, y, s, penalty, lam), rng.normal(size=5))
        assert err <= 1e-5


def test_objective_history_is_monotone():
    X, y = _data(150, 8, seed=3)
    for penalty in ("l1", "l2"):
        m = train_lr(X, y, penalty, 1e-3)
        h = np.array(m.history)
        assert np.all(np.diff(h) <= 0) and m.converged


def test_sparse_and_dense_inputs_agree():
    X, y = _data(60, 5, seed=4)
    a = train_lr(X, y, "l2", 1e-2)
    b = train_lr(sp.csr_matrix(X), y, "l2", 1e-2)
    assert np.allclose(a.w, b.w, atol=1e-10) and abs(a.b - b.b) < 1e-10


def test_determinism():
    X, y = _data(seed=5)
    a, b = train_lr(X, y, "l1", 1e-3), train_lr(X, y, "l1", 1e-3)
    assert np.array_equal(a.w, b.w) and a.b == b.b


# ---------------------------------------------------------------- predict


def test_predict_examples():
    X = np.random.default_rng(6).normal(size=(10, 5))
    assert np.all(predict(LinearModel(np.zeros(5), 0.0), X) == 0.5)
    assert np.all(predict(LinearModel(np.zeros(5), 20.0), X) >= 0.999999)
    w = np.array([0.5, -1.0, 0.25, 2.0, -0.75])
    got = predict(LinearModel(w, 0.3), X)
    want = np.array([expit(sum(X[i, j] * w[j] for j in range(5)) + 0.3) for i in range(10)])
    assert np.allclose(got, want, rtol=1e-15, atol=0)


def test_predict_strictly_inside_unit_interval():
    X = np.array([[1e4], [-1e4], [1e300], [-1e300]])
    p = predict(LinearModel(np.array([1.0]), 0.0), X)
    assert np.all((p > 0) & (p < 1)) and np.all(np.isfinite(p))
    with pytest.raises(ValueError):
        predict(LinearModel(np.zeros(3), 0.0), X)


def test_training_errors():
    X, y = _data(20, 3)
    with pytest.raises(TrainingError, match="single-class"):
        train_lr(X, np.zeros(20))
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        train_lr(bad, y)
    with pytest.raises(TrainingError):
        train_lr(X, y, "elastic")
    with pytest.raises(TrainingError):
        train_lr(X, y, "l2", -1.0)


# ---------------------------------------------------------------- multitask


def test_multitask_large_task_penalty_is_pooled_lr():
    X, y = _data(100, 4, seed=7)
    lam_s = 0.05
    mt = train_multitask_lr({"hip": (X, y), "knee": (X, y)}, lam_shared=lam_s, lam_task=1e6, tol=1e-12)
    # 2 NLL(w) + lam_s ||w||^2 has the minimiser of NLL(w) + (lam_s / 2) ||w||^2
    pooled = train_lr(X, y, "l2", lam_s, tol=1e-12)
    for t in ("hip", "knee"):
        assert np.abs(predict_task(mt, t, X) - predict(pooled, X)).max() <= 1e-3


def test_multitask_large_shared_penalty_is_independent_lr():
    Xa, ya = _data(100, 3, seed=8)
    Xb, yb = _data(100, 3, seed=9)
    Z = np.zeros((100, 3))
    Xh, Xk = np.hstack([Xa, Z]), np.hstack([Z, Xb])
    lam_t = 0.02
    mt = train_multitask_lr({"hip": (Xh, ya), "knee": (Xk, yb)}, lam_shared=1e6, lam_task=lam_t, tol=1e-12)
    for t, X, y in (("hip", Xh, ya), ("knee", Xk, yb)):
        solo = train_lr(X, y, "l2", 2 * lam_t, tol=1e-12)
        assert np.abs(predict_task(mt, t, X) - predict(solo, X)).max() <= 1e-3


def test_multitask_errors():
    X, y = _data(20, 3)
    with pytest.raises(TrainingError, match="no data"):
        train_multitask_lr({"hip": (X, y), "knee": (np.zeros((0, 3)), np.zeros(0))})
    with pytest.raises(TrainingError, match="dimension"):
        train_multitask_lr({"hip": (X, y), "knee": (X[:, :2], y)})
    with pytest.raises(TrainingError):
        train_multitask_lr({})
